#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "csvar/core/error.hpp"
#include "csvar/patchnet/model.hpp"
#include "json.hpp"

namespace csvar {
namespace {

constexpr char kMagic[8] = {'C', 'S', 'V', 'A', 'R', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) throw ParseError("checkpoint: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PatchNet& model, TrainingStage stage) {
  nlohmann::json header;
  header["config"] = model.config();
  header["stage"] = std::string(to_string(stage));
  auto& table = header["tensors"] = nlohmann::json::array();
  const auto& ps = model.params();
  for (std::size_t i = 0; i < ps.size(); ++i)
    table.push_back({{"name", ps[i].name}, {"rows", ps[i].value.rows()}, {"cols", ps[i].value.cols()}});
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(os, kVersion);
  write_le<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (double v : ps[i].value.storage()) write_le<double>(os, v);
  if (!os) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ParseError("checkpoint: bad magic in " + path.string());
  const auto version = read_le<std::uint32_t>(is);
  if (version != kVersion) throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  const auto len = read_le<std::uint64_t>(is);
  if (len > (1u << 26)) throw ParseError("checkpoint: implausible header length");
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw ParseError("checkpoint: truncated header");

  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(text);
    ckpt.config = header.at("config").get<ModelConfig>();
    ckpt.stage = parse_training_stage(header.at("stage").get<std::string>());
    for (const auto& entry : header.at("tensors")) {
      Matrix m(entry.at("rows").get<std::size_t>(), entry.at("cols").get<std::size_t>());
      for (double& v : m.storage()) v = read_le<double>(is);
      ckpt.params.add(entry.at("name").get<std::string>(), std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  if (is.peek() != std::char_traits<char>::eof()) throw ParseError("checkpoint: trailing bytes");
  return ckpt;
}

PatchNet model_from_checkpoint(const Checkpoint& ckpt) { return PatchNet(ckpt.config, ckpt.params); }

}  // namespace csvar
