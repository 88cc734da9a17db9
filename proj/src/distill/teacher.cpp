#include "csvar/distill/teacher.hpp"

#include <cmath>
#include <fstream>

#include "csvar/core/error.hpp"
#include "json.hpp"

namespace csvar::distill {
namespace {

bool unit(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

}  // namespace

void TeacherRecord::validate() const {
  if (session_id.empty()) throw ValidationError("teacher record without session id");
  if (!unit(session_risk)) throw ValidationError("teacher session risk outside [0, 1] for " + session_id);
  for (const auto& p : patches) {
    if (!unit(p.risk)) throw ValidationError("teacher patch risk outside [0, 1] for " + session_id);
    if (!(p.saliency >= 0.0) || !std::isfinite(p.saliency))
      throw ValidationError("negative teacher saliency for " + session_id);
  }
}

bool TeacherRecord::usable() const {
  if (teacher_missing || patches.empty()) return false;
  double sum = 0.0;
  for (const auto& p : patches) sum += p.saliency;
  return sum > 0.0;
}

TeacherRecord teacher_from_judgment(const llm::LlmJudgment& judgment, const llm::ReasoningRequest& request) {
  if (judgment.patches.size() != request.patches.size())
    throw ValidationError("judgment for " + request.session_id + " does not cover the request");
  TeacherRecord r;
  r.session_id = request.session_id;
  r.session_risk = judgment.overall_risk_score;
  r.teacher_missing = judgment.teacher_missing;
  for (std::size_t k = 0; k < request.patches.size(); ++k) {
    const auto& q = request.patches[k];
    const auto& j = judgment.patches[k];
    if (j.patch_id != q.patch_id) throw ValidationError("judgment patch order differs from the request");
    r.patches.push_back({q.user_id, q.slot, j.risk_score, j.saliency});
  }
  return r;
}

void write_teachers(const std::filesystem::path& path, const TeacherSet& teachers) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [id, r] : teachers) {
    nlohmann::ordered_json patches = nlohmann::ordered_json::array();
    for (const auto& p : r.patches)
      patches.push_back({{"user_id", p.user_id}, {"slot", p.slot}, {"risk", p.risk}, {"saliency", p.saliency}});
    out << nlohmann::ordered_json{{"session_id", r.session_id},
                                  {"patches", patches},
                                  {"session_risk", r.session_risk},
                                  {"teacher_missing", r.teacher_missing},
                                  {"neighbor_sessions", r.neighbor_sessions}}
               .dump()
        << '\n';
  }
}

TeacherSet read_teachers(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  TeacherSet out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TeacherRecord r;
      r.session_id = j.at("session_id").get<std::string>();
      r.session_risk = j.at("session_risk").get<double>();
      r.teacher_missing = j.at("teacher_missing").get<bool>();
      for (const auto& p : j.at("patches"))
        r.patches.push_back({p.at("user_id").get<std::string>(), p.at("slot").get<std::size_t>(),
                             p.at("risk").get<double>(), p.at("saliency").get<double>()});
      if (j.contains("neighbor_sessions")) r.neighbor_sessions = j["neighbor_sessions"].get<std::vector<std::string>>();
      r.validate();
      if (!out.emplace(r.session_id, r).second) throw ParseError("duplicate session " + r.session_id);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace csvar::distill
