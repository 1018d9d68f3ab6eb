#include "tlstm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace tlstm {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'T', 'L', 'S', 'T', 'M', 'C', 'K', 'P'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw CheckpointError(path.string() + ": truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const CheckpointFile& file) {
  if (file.header.contains("arrays")) throw CheckpointError("header member 'arrays' is reserved");
  nlohmann::json header = file.header;
  header["arrays"] = nlohmann::json::array();
  for (const auto& [name, t] : file.arrays) header["arrays"].push_back({{"name", name}, {"shape", t.shape()}});
  const std::string text = header.dump();

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot write " + tmp.string());
    os.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : file.arrays)
      os.write(reinterpret_cast<const char*>(t.raw()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!os.flush()) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointFile load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw CheckpointError(path.string() + ": not a checkpoint (bad magic)");
  const auto version = get<std::uint32_t>(is, path);
  if (version != kCheckpointVersion)
    throw CheckpointError(path.string() + ": unsupported format version " + std::to_string(version));
  const auto len = get<std::uint64_t>(is, path);
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw CheckpointError(path.string() + ": truncated");

  CheckpointFile out;
  try {
    out.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": bad header: " + e.what());
  }
  for (const auto& entry : out.header.at("arrays")) {
    Tensor t(entry.at("shape").get<Shape>());
    if (!is.read(reinterpret_cast<char*>(t.raw()), static_cast<std::streamsize>(t.size() * sizeof(double))))
      throw CheckpointError(path.string() + ": truncated payload");
    out.arrays.add(entry.at("name").get<std::string>(), std::move(t));
  }
  out.header.erase("arrays");
  return out;
}

}  // namespace tlstm
