#pragma once

// Minimal reverse-mode differentiation over dense matrices. A Tape records
// every op of one forward pass; backward() walks it in reverse. Parameter
// gradients land in a caller-owned GradBuffer so several tapes (one per
// session in a batch) can feed the same optimizer step.

#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csvar/tensor/matrix.hpp"

namespace csvar::ag {

struct Parameter {
  std::string name;
  Matrix value;
  std::size_t index = 0;
};

class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet& other);
  ParameterSet& operator=(const ParameterSet& other);
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  Parameter& add(std::string name, Matrix init);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  const Parameter* find(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }
  std::size_t scalar_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class GradBuffer {
 public:
  explicit GradBuffer(const ParameterSet& params);

  Matrix& operator[](std::size_t i) { return grads_[i]; }
  const Matrix& operator[](std::size_t i) const { return grads_[i]; }
  std::size_t size() const { return grads_.size(); }

  void zero();
  void add(const GradBuffer& other);
  void scale(double factor);

 private:
  std::vector<Matrix> grads_;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, Var self)>;

  // A null buffer means inference: nothing is kept for backward.
  explicit Tape(GradBuffer* grads = nullptr) : grads_(grads) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return grads_ != nullptr; }

  Var constant(Matrix value);
  Var param(const Parameter& p);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  Matrix& mutable_value(Var v) { return nodes_[v.id].value; }
  bool needs_grad(Var v) const { return v.valid() && nodes_[v.id].needs_grad; }
  // Zero-initialized on first access.
  Matrix& grad(Var v);

  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);

  // loss must be 1x1.
  void backward(Var loss);
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    const Parameter* param = nullptr;
    bool needs_grad = false;
  };
  std::deque<Node> nodes_;
  GradBuffer* grads_;
};

}  // namespace csvar::ag
