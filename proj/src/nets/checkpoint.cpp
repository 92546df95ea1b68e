#include "affgrasp/nets/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "affgrasp/error.hpp"
#include "affgrasp/io.hpp"

namespace affgrasp::nets {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'R', 'U', 'N', 'C'};

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
  std::uint8_t buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.insert(out.end(), buf, buf + sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string text(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw Error(ErrorCode::CorruptCheckpoint, "checkpoint ends prematurely");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::vector<std::uint8_t> serialize_checkpoint(const Parameters<float>& params) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string spec = params.spec.to_text();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.size()));
  out.insert(out.end(), spec.begin(), spec.end());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& t : params.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : t.values) put<float>(out, v);
  }
  put<std::uint64_t>(out, fnv1a64(out));
  return out;
}

Parameters<float> deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 + 4 + 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::CorruptCheckpoint, "missing checkpoint magic");
  }
  const auto body = bytes.first(bytes.size() - 8);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 8);
  if (stored != fnv1a64(body)) throw Error(ErrorCode::CorruptCheckpoint, "checksum mismatch");

  Reader in(body);
  in.text(4);
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "checkpoint version " + std::to_string(version));
  }
  NetworkSpec spec;
  try {
    spec = NetworkSpec::from_text(in.text(in.get<std::uint32_t>()));
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptCheckpoint, std::string("bad embedded spec: ") + e.what());
  }
  Parameters<float> params = build_network<float>(spec, 0);
  const auto count = in.get<std::uint32_t>();
  if (count != params.tensors.size()) throw Error(ErrorCode::CorruptCheckpoint, "tensor count does not match spec");
  for (auto& t : params.tensors) {
    const auto rank = in.get<std::uint32_t>();
    if (rank != t.shape.size()) throw Error(ErrorCode::CorruptCheckpoint, "rank mismatch for " + t.name);
    for (int d : t.shape) {
      if (in.get<std::uint32_t>() != static_cast<std::uint32_t>(d)) {
        throw Error(ErrorCode::CorruptCheckpoint, "shape mismatch for " + t.name);
      }
    }
    for (auto& v : t.values) v = in.get<float>();
  }
  if (in.remaining() != 0) throw Error(ErrorCode::CorruptCheckpoint, "trailing bytes after tensors");
  return params;
}

void save_checkpoint(const Parameters<float>& params, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(params);
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Parameters<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace affgrasp::nets
