#include "csvar/tensor/autograd.hpp"

#include <stdexcept>

namespace csvar::ag {

ParameterSet::ParameterSet(const ParameterSet& other) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) params_.push_back(std::make_unique<Parameter>(*p));
}

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
  if (this != &other) {
    ParameterSet copy(other);
    params_ = std::move(copy.params_);
  }
  return *this;
}

Parameter& ParameterSet::add(std::string name, Matrix init) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->value = std::move(init);
  p->index = params_.size();
  params_.push_back(std::move(p));
  return *params_.back();
}

const Parameter* ParameterSet::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

Parameter& ParameterSet::get(std::string_view name) {
  return const_cast<Parameter&>(static_cast<const ParameterSet&>(*this).get(name));
}

const Parameter& ParameterSet::get(std::string_view name) const {
  const Parameter* p = find(name);
  if (p == nullptr) throw std::out_of_range("unknown parameter: " + std::string(name));
  return *p;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

GradBuffer::GradBuffer(const ParameterSet& params) {
  grads_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    grads_.emplace_back(params[i].value.rows(), params[i].value.cols());
}

void GradBuffer::zero() {
  for (auto& g : grads_) g.fill(0.0);
}

void GradBuffer::add(const GradBuffer& other) {
  for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i] += other.grads_[i];
}

void GradBuffer::scale(double factor) {
  for (auto& g : grads_)
    for (double& v : g.storage()) v *= factor;
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(const Parameter& p) {
  // Parameters are copied so the tape stays valid if the set is updated.
  nodes_.push_back(Node{p.value, {}, {}, &p, recording()});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() != n.value.size() || n.grad.rows() != n.value.rows())
    n.grad.resize(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  if (recording())
    for (Var in : inputs) needs = needs || needs_grad(in);
  Node node{std::move(value), {}, {}, nullptr, needs};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var loss) {
  if (!recording()) throw std::logic_error("Tape::backward on a non-recording tape");
  if (value(loss).size() != 1) throw std::invalid_argument("Tape::backward expects a scalar loss");
  grad(loss)(0, 0) += 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.param != nullptr) {
      (*grads_)[n.param->index] += n.grad;
    } else if (n.backward) {
      n.backward(*this, Var{id});
    }
  }
}

}  // namespace csvar::ag
