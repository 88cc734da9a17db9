#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "csvar/session/session.hpp"

namespace csvar {

// One session per line:
//   {"session_id", "host_id", "actions": [{"user_id", "t", "type", "text"}], "label"}
// Text embeddings are never stored; viewer ids are derived from the actions.
std::string session_to_json_line(const Session& session);
Session session_from_json_line(const std::string& line);

void write_sessions(const std::filesystem::path& path, const std::vector<Session>& sessions);
std::vector<Session> read_sessions(const std::filesystem::path& path);

}  // namespace csvar
