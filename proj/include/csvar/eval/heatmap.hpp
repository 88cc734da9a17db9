#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "csvar/patchnet/prepared.hpp"

namespace csvar::eval {

struct HeatmapCell {
  std::string user_id;
  std::size_t slot = 0;  // 1-based
  double score = 0.0;
};

// users: host first, then viewers in patch order. Only non-empty patches
// appear as cells.
struct HeatmapGrid {
  std::string session_id;
  std::size_t slot_count = 0;
  std::vector<std::string> users;
  std::vector<HeatmapCell> cells;

  const HeatmapCell* find(const std::string& user, std::size_t slot) const;
  const HeatmapCell* max_cell() const;  // first cell with the highest score
};

// Throws ValidationError unless there is one score per patch.
HeatmapGrid make_heatmap(const PreparedSession& session, const std::vector<double>& patch_scores,
                         std::size_t slot_count);

// Writes <base>.svg and <base>.json. Intensity maps [0, 1] linearly from white
// to red; empty cells are drawn light grey. Throws IoError.
void emit_heatmap(const HeatmapGrid& grid, const std::filesystem::path& base);
HeatmapGrid read_heatmap_json(const std::filesystem::path& path);

}  // namespace csvar::eval
