#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "csvar/llm/protocol.hpp"

namespace csvar::distill {

struct TeacherPatch {
  std::string user_id;
  std::size_t slot = 0;
  double risk = 0.0;      // y^LLM_k
  double saliency = 0.0;  // SAL_k
};

struct TeacherRecord {
  std::string session_id;
  std::vector<TeacherPatch> patches;
  double session_risk = 0.0;  // y^LLM_s
  bool teacher_missing = false;
  // Neighbor session per key patch, kept for audit only; empty when nothing
  // was retrieved.
  std::vector<std::string> neighbor_sessions;

  // ValidationError on negative saliency or scores outside [0, 1].
  void validate() const;
  // True when auxiliary terms apply: teacher present and saliency sums > 0.
  bool usable() const;
};

using TeacherSet = std::map<std::string, TeacherRecord>;

// Pairs a parsed judgment with the (user, slot) of each prompted patch;
// judgment patches follow request order.
TeacherRecord teacher_from_judgment(const llm::LlmJudgment& judgment, const llm::ReasoningRequest& request);

// JSON lines, one record per line. read throws ParseError / IoError.
void write_teachers(const std::filesystem::path& path, const TeacherSet& teachers);
TeacherSet read_teachers(const std::filesystem::path& path);

}  // namespace csvar::distill
