#include "lfc/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "lfc/io.hpp"

namespace lfc {

namespace {

constexpr char kMagic[] = "LFCCKPT";
constexpr std::size_t kMagicLen = 7;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw CheckpointError("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

const std::vector<double>& Checkpoint::block(const std::string& name) const {
  for (const auto& [n, values] : blocks) {
    if (n == name) return values;
  }
  throw CheckpointError("checkpoint has no block '" + name + "'");
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["meta"] = ckpt.meta;
  header["blocks"] = nlohmann::json::array();
  for (const auto& [name, values] : ckpt.blocks) {
    header["blocks"].push_back({{"name", name}, {"size", values.size()}});
  }
  const std::string text = header.dump();
  std::string out(kMagic, kMagicLen);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& [name, values] : ckpt.blocks) {
    out.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < kMagicLen || bytes.compare(0, kMagicLen, kMagic) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  std::size_t pos = kMagicLen;
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = take<std::uint64_t>(bytes, pos);
  if (pos + header_len > bytes.size()) throw CheckpointError("checkpoint truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  pos += header_len;
  Checkpoint ckpt;
  ckpt.meta = header.value("meta", nlohmann::json::object());
  for (const auto& b : header.at("blocks")) {
    const auto n = b.at("size").get<std::size_t>();
    if (pos + n * sizeof(double) > bytes.size()) throw CheckpointError("checkpoint truncated");
    std::vector<double> values(n);
    std::memcpy(values.data(), bytes.data() + pos, n * sizeof(double));
    pos += n * sizeof(double);
    ckpt.blocks.emplace_back(b.at("name").get<std::string>(), std::move(values));
  }
  if (pos != bytes.size()) throw CheckpointError("trailing bytes after checkpoint payload");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

}  // namespace lfc
