#pragma once

// Deterministic stand-in teacher for synthetic data. It reads the planted
// truth, so it must never be wired into anything but the teacher slot.
//
//   risk_k    ~ U[0.80, 0.95] if (user, slot) of patch k is a planted cell,
//               U[0.02, 0.20] otherwise (jitter seeded per session and patch)
//   saliency  = 0.05 + 0.95 * risk-keyword density of the patch text
//   session   = 0.5 * max_k risk_k + 0.5 * mean_k risk_k
//
// primary_risk_type is the category of the first planted patch (normal if
// none); coordination_indicators is true when two or more patches are planted.

#include <cstdint>
#include <string>

#include "csvar/llm/protocol.hpp"
#include "csvar/synth/synthgen.hpp"

namespace csvar::llm {

// Both throw OracleError for a session missing from the truth map.
std::string mock_summary_response(const SummaryRequest& req, const synth::PatchTruth& truth, std::uint64_t seed);
std::string mock_reasoning_response(const ReasoningRequest& req, const synth::PatchTruth& truth,
                                    std::uint64_t seed);

}  // namespace csvar::llm
