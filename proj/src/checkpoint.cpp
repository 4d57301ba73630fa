#include "pwc/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "pwc/model.hpp"

namespace pwc {
namespace {

constexpr char kMagic[4] = {'P', 'W', 'C', 'P'};

template <typename U>
void put(std::string& buf, U value) {
  static_assert(sizeof(U) == 4 || sizeof(U) == 8);
  std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t> bits;
  std::memcpy(&bits, &value, sizeof(U));
  for (std::size_t i = 0; i < sizeof(U); ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t> bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      bits |= decltype(bits)(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    U value;
    std::memcpy(&value, &bits, sizeof(U));
    return value;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == data_.size(); }
  [[noreturn]] void fail(const std::string& what) const { throw FormatError(path_ + ": " + what); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail("truncated checkpoint");
  }
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

struct Header {
  RunConfig config;
  long iteration = 0;
  std::uint32_t value_bytes = 4;
};

Header read_header(Reader& r) {
  if (r.bytes(4) != std::string(kMagic, 4)) r.fail("not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  Header h;
  h.value_bytes = r.get<std::uint32_t>();
  if (h.value_bytes != 4 && h.value_bytes != 8) r.fail("bad value width " + std::to_string(h.value_bytes));
  const auto len = r.get<std::uint64_t>();
  if (len > (1u << 20)) r.fail("implausible config length");
  const std::string text = r.bytes(len);
  try {
    h.config = parse_config(text);
  } catch (const std::invalid_argument& e) {
    r.fail(std::string("embedded config: ") + e.what());
  }
  h.iteration = static_cast<long>(r.get<std::uint64_t>());
  return h;
}

Reader open(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return Reader(ss.str(), path.string());
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, long iteration,
                     const ParameterStore<T>& params) {
  std::string buf(kMagic, 4);
  put(buf, kCheckpointVersion);
  put(buf, static_cast<std::uint32_t>(sizeof(T)));
  const std::string text = serialize_config(config);
  put(buf, static_cast<std::uint64_t>(text.size()));
  buf += text;
  put(buf, static_cast<std::uint64_t>(iteration));
  put(buf, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, v] : params) {
    put(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    put(buf, static_cast<std::uint32_t>(v.shape().size()));
    for (auto d : v.shape()) put(buf, static_cast<std::uint64_t>(d));
    for (T x : v.value().data()) put(buf, x);
  }
  // atomic replace
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  Reader r = open(path);
  const Header h = read_header(r);
  Checkpoint<T> ck;
  ck.config = h.config;
  ck.iteration = h.iteration;
  ck.stored = h.value_bytes == 8 ? Precision::f64 : Precision::f32;
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = r.get<std::uint32_t>();
    if (name_len > 4096) r.fail("implausible parameter name length");
    const std::string name = r.bytes(name_len);
    const auto rank = r.get<std::uint32_t>();
    if (rank == 0 || rank > 8) r.fail("bad rank for " + name);
    Shape shape;
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
      if (shape.back() == 0 || shape.back() > (1u << 24)) r.fail("bad dimension for " + name);
      n *= shape.back();
      if (n > (1u << 28)) r.fail("implausible size for " + name);
    }
    std::vector<T> values(n);
    for (auto& x : values) x = h.value_bytes == 8 ? static_cast<T>(r.get<double>()) : static_cast<T>(r.get<float>());
    ck.params.add(name, Tensor<T>(std::move(shape), std::move(values)));
  }
  if (!r.done()) r.fail("trailing bytes after the last parameter");
  check_parameters(ck.config.model, ck.params);
  return ck;
}

Checkpoint<float> read_checkpoint_header(const std::filesystem::path& path) {
  Reader r = open(path);
  const Header h = read_header(r);
  Checkpoint<float> ck;
  ck.config = h.config;
  ck.iteration = h.iteration;
  ck.stored = h.value_bytes == 8 ? Precision::f64 : Precision::f32;
  return ck;
}

template void save_checkpoint<float>(const std::filesystem::path&, const RunConfig&, long,
                                     const ParameterStore<float>&);
template void save_checkpoint<double>(const std::filesystem::path&, const RunConfig&, long,
                                      const ParameterStore<double>&);
template Checkpoint<float> load_checkpoint<float>(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace pwc
