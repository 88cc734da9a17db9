#include "csvar/eval/heatmap.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "csvar/core/error.hpp"
#include "json.hpp"

namespace csvar::eval {
namespace {

constexpr int kCell = 28;
constexpr int kLabelWidth = 120;
constexpr int kHeader = 24;

std::string fill_for(double score) {
  const double v = std::clamp(score, 0.0, 1.0);
  const int gb = static_cast<int>(std::lround(255.0 * (1.0 - v)));
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#ff%02x%02x", gb, gb);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

const HeatmapCell* HeatmapGrid::find(const std::string& user, std::size_t slot) const {
  for (const auto& c : cells)
    if (c.user_id == user && c.slot == slot) return &c;
  return nullptr;
}

const HeatmapCell* HeatmapGrid::max_cell() const {
  const HeatmapCell* best = nullptr;
  for (const auto& c : cells)
    if (best == nullptr || c.score > best->score) best = &c;
  return best;
}

HeatmapGrid make_heatmap(const PreparedSession& session, const std::vector<double>& patch_scores,
                         std::size_t slot_count) {
  if (patch_scores.size() != session.patches.size())
    throw ValidationError("heatmap needs one score per patch (" + std::to_string(session.patches.size()) +
                          "), got " + std::to_string(patch_scores.size()));
  HeatmapGrid g;
  g.session_id = session.id();
  g.slot_count = slot_count;
  g.users.push_back(session.session.host_id);
  for (std::size_t k = 0; k < session.patches.size(); ++k) {
    const auto& p = session.patches[k];
    if (p.slot == 0 || p.slot > slot_count) throw ValidationError("patch slot outside the grid");
    if (std::find(g.users.begin(), g.users.end(), p.user_id) == g.users.end()) g.users.push_back(p.user_id);
    g.cells.push_back({p.user_id, p.slot, patch_scores[k]});
  }
  return g;
}

void emit_heatmap(const HeatmapGrid& grid, const std::filesystem::path& base) {
  if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());
  nlohmann::json j{{"session_id", grid.session_id}, {"slot_count", grid.slot_count}, {"users", grid.users}};
  j["cells"] = nlohmann::json::array();
  for (const auto& c : grid.cells) j["cells"].push_back({{"user_id", c.user_id}, {"slot", c.slot}, {"score", c.score}});
  std::ofstream js(base.string() + ".json");
  if (!js) throw IoError("cannot write " + base.string() + ".json");
  js << j.dump(2) << '\n';

  const int width = kLabelWidth + kCell * static_cast<int>(grid.slot_count) + 4;
  const int height = kHeader + kCell * static_cast<int>(grid.users.size()) + 4;
  std::ofstream svg(base.string() + ".svg");
  if (!svg) throw IoError("cannot write " + base.string() + ".svg");
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"monospace\" font-size=\"11\">\n";
  svg << "<text x=\"4\" y=\"14\">" << escape_xml(grid.session_id) << "</text>\n";
  for (std::size_t s = 1; s <= grid.slot_count; ++s)
    svg << "<text x=\"" << kLabelWidth + kCell * static_cast<int>(s - 1) + 8 << "\" y=\"" << kHeader - 4 << "\">" << s
        << "</text>\n";
  for (std::size_t u = 0; u < grid.users.size(); ++u) {
    const int y = kHeader + kCell * static_cast<int>(u);
    svg << "<text x=\"4\" y=\"" << y + 18 << "\">" << escape_xml(grid.users[u]) << (u == 0 ? " (host)" : "")
        << "</text>\n";
    for (std::size_t s = 1; s <= grid.slot_count; ++s) {
      const auto* c = grid.find(grid.users[u], s);
      svg << "<rect x=\"" << kLabelWidth + kCell * static_cast<int>(s - 1) << "\" y=\"" << y << "\" width=\"" << kCell
          << "\" height=\"" << kCell << "\" stroke=\"#999\" fill=\"" << (c ? fill_for(c->score) : "#eeeeee")
          << "\">";
      if (c) svg << "<title>" << c->score << "</title>";
      svg << "</rect>\n";
    }
  }
  svg << "</svg>\n";
}

HeatmapGrid read_heatmap_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    HeatmapGrid g;
    g.session_id = j.at("session_id").get<std::string>();
    g.slot_count = j.at("slot_count").get<std::size_t>();
    g.users = j.at("users").get<std::vector<std::string>>();
    for (const auto& c : j.at("cells"))
      g.cells.push_back({c.at("user_id").get<std::string>(), c.at("slot").get<std::size_t>(), c.at("score").get<double>()});
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad heatmap JSON " + path.string() + ": " + e.what());
  }
}

}  // namespace csvar::eval
