#include "rap/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rap::nn {
namespace {

constexpr char kMagic[8] = {'R', 'A', 'P', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + at_, sizeof(T));
    at_ += sizeof(T);
    return value;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(at_, n);
    at_ += n;
    return s;
  }

  void read(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + at_, n);
    at_ += n;
  }

  bool done() const { return at_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (at_ + n > bytes_.size()) throw Error("corrupt checkpoint", "truncated at byte " + std::to_string(at_));
  }

  const std::string& bytes_;
  std::size_t at_ = 0;
};

}  // namespace

const Matrix& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return m;
  }
  throw Error("corrupt checkpoint", "missing tensor '" + name + "'");
}

bool Checkpoint::has_tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.first == name) return true;
  }
  return false;
}

void Checkpoint::add_store(const ParameterStore& store) {
  for (const auto& p : store) tensors.emplace_back(p.name, p.value);
}

void Checkpoint::fill_store(ParameterStore& store) const {
  for (auto& p : store) {
    const Matrix& src = tensor(p.name);
    if (src.rows() != p.value.rows() || src.cols() != p.value.cols()) {
      throw Error("corrupt checkpoint", "tensor '" + p.name + "' has the wrong shape");
    }
    p.value = src;
  }
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, ckpt.format_version);
  put<std::uint64_t>(out, ckpt.config_hash);
  put_string(out, ckpt.rng_state);
  put_string(out, ckpt.metadata.dump());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, m] : ckpt.tensors) {
    put_string(out, name);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    out.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw Error("corrupt checkpoint", "bad magic");

  Checkpoint ckpt;
  ckpt.format_version = in.get<std::uint32_t>();
  if (ckpt.format_version != kCheckpointVersion) {
    throw Error("unsupported checkpoint", "format version " + std::to_string(ckpt.format_version));
  }
  ckpt.config_hash = in.get<std::uint64_t>();
  ckpt.rng_state = in.get_string();
  ckpt.metadata = nlohmann::json::parse(in.get_string());
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = in.get_string();
    const auto rows = static_cast<Eigen::Index>(in.get<std::uint64_t>());
    const auto cols = static_cast<Eigen::Index>(in.get<std::uint64_t>());
    Matrix m(rows, cols);
    in.read(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
    ckpt.tensors.emplace_back(std::move(name), std::move(m));
  }
  if (!in.done()) throw Error("corrupt checkpoint", "trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io error", "cannot write " + path.string());
  const auto bytes = serialize_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("io error", "short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing checkpoint", path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace rap::nn
