#include "csvar/session/dataset_io.hpp"

#include <fstream>

#include "csvar/core/error.hpp"
#include "json.hpp"

namespace csvar {

using nlohmann::json;

std::string session_to_json_line(const Session& session) {
  json actions = json::array();
  for (const Action& a : session.actions) {
    actions.push_back(json{{"user_id", a.user_id}, {"t", a.timestamp}, {"type", to_string(a.type)}, {"text", a.raw_text}});
  }
  json j{{"session_id", session.session_id}, {"host_id", session.host_id}, {"actions", std::move(actions)}};
  j["label"] = session.label ? json(*session.label) : json(nullptr);
  return j.dump();
}

Session session_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("dataset line is not JSON: ") + e.what());
  }
  try {
    Session s;
    s.session_id = j.at("session_id").get<std::string>();
    s.host_id = j.at("host_id").get<std::string>();
    for (const auto& a : j.at("actions")) {
      Action act;
      act.user_id = a.at("user_id").get<std::string>();
      act.timestamp = a.at("t").get<double>();
      act.type = parse_action_type(a.at("type").get<std::string>());
      act.raw_text = a.value("text", std::string());
      s.actions.push_back(std::move(act));
    }
    if (j.contains("label") && !j["label"].is_null()) {
      const int label = j["label"].get<int>();
      if (label != 0 && label != 1) throw ValidationError("label must be 0 or 1");
      s.label = label;
    }
    derive_viewers(s);
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed session record: ") + e.what());
  }
}

void write_sessions(const std::filesystem::path& path, const std::vector<Session>& sessions) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const Session& s : sessions) out << session_to_json_line(s) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Session> read_sessions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<Session> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(session_from_json_line(line));
  }
  return out;
}

}  // namespace csvar
