#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "unipaint/backbone.hpp"

// Layout (little-endian):
//   "UNIPCKPT" | u32 version | u32 tag_len | tag | u64 finetune_iters | u32 count
//   count x { u32 name_len | name | u8 dtype(1=f64) | u32 ndim | u64 dims[ndim] | f64 payload (row-major) }
//   u64 FNV-1a of all preceding bytes

namespace unipaint {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

constexpr char kMagic[8] = {'U', 'N', 'I', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint8_t kDtypeF64 = 1;

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorKind::Corrupt, "checkpoint truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const ParameterSet& params) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.tag().size()));
  out += params.tag();
  put<std::uint64_t>(out, params.finetune_iterations());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.arrays().size()));
  for (const auto& [name, array] : params.arrays()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, kDtypeF64);
    put<std::uint32_t>(out, 2);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(array.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(array.cols()));
    for (Eigen::Index r = 0; r < array.rows(); ++r) {
      for (Eigen::Index c = 0; c < array.cols(); ++c) put<double>(out, array(r, c));
    }
  }
  put<std::uint64_t>(out, fnv1a(out));
  return out;
}

ParameterSet deserialize_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
    throw Error(ErrorKind::Corrupt, "not a checkpoint (bad magic)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::Version, "checkpoint format version " + std::to_string(version) +
                                        ", expected " + std::to_string(kCheckpointVersion));
  }
  if (bytes.size() < sizeof(kMagic) + 12) throw Error(ErrorKind::Corrupt, "checkpoint truncated");
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body.size(), 8);
  if (fnv1a(body) != stored) throw Error(ErrorKind::Corrupt, "checkpoint checksum mismatch");

  Reader body_in(body);
  body_in.take(sizeof(kMagic));
  body_in.get<std::uint32_t>();
  const auto tag_len = body_in.get<std::uint32_t>();
  ParameterSet params{std::string(body_in.take(tag_len))};
  params.set_finetune_iterations(body_in.get<std::uint64_t>());
  const auto count = body_in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = body_in.get<std::uint32_t>();
    std::string name(body_in.take(name_len));
    if (body_in.get<std::uint8_t>() != kDtypeF64) throw Error(ErrorKind::Corrupt, "unsupported dtype");
    if (body_in.get<std::uint32_t>() != 2) throw Error(ErrorKind::Corrupt, "unsupported rank");
    const auto rows = body_in.get<std::uint64_t>();
    const auto cols = body_in.get<std::uint64_t>();
    if (rows * cols * sizeof(double) > body.size()) throw Error(ErrorKind::Corrupt, "array too large");
    Eigen::MatrixXd array(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < array.rows(); ++r) {
      for (Eigen::Index c = 0; c < array.cols(); ++c) array(r, c) = body_in.get<double>();
    }
    params.set(name, std::move(array));
  }
  if (body_in.position() != body.size()) throw Error(ErrorKind::Corrupt, "trailing bytes in checkpoint");
  return params;
}

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(params);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ParameterSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace unipaint
