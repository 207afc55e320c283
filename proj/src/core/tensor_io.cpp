#include "voicectl/core/tensor_io.hpp"

#include <cstdint>
#include <cstring>
#include <unordered_set>

#include "voicectl/core/errors.hpp"
#include "voicectl/core/fs.hpp"

namespace voicectl {

namespace {

constexpr char kTensorMagic[8] = {'V', 'C', 'T', 'E', 'N', 'S', '1', '\0'};
constexpr char kParamMagic[8] = {'V', 'C', 'P', 'A', 'R', 'A', 'M', '1'};

template <typename V>
void put(std::string& out, V v) {
  char b[sizeof(V)];
  std::memcpy(b, &v, sizeof(V));
  out.append(b, sizeof(V));
}

void put_matrix(std::string& out, const ag::Mat& m) {
  put<std::int64_t>(out, m.rows());
  put<std::int64_t>(out, m.cols());
  out.append(reinterpret_cast<const char*>(m.data()), static_cast<size_t>(m.size()) * sizeof(float));
}

class Reader {
 public:
  Reader(std::string bytes, std::string what) : bytes_(std::move(bytes)), what_(std::move(what)) {}

  template <typename V>
  V get() {
    need(sizeof(V));
    V v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }

  std::string get_string(size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  ag::Mat get_matrix() {
    const auto rows = get<std::int64_t>();
    const auto cols = get<std::int64_t>();
    if (rows < 0 || cols < 0) throw IoError("negative matrix shape in " + what_);
    ag::Mat m(rows, cols);
    const size_t n = static_cast<size_t>(rows * cols) * sizeof(float);
    need(n);
    std::memcpy(m.data(), bytes_.data() + pos_, n);
    pos_ += n;
    return m;
  }

  void expect_magic(const char (&magic)[8]) {
    if (get_string(8) != std::string(magic, 8)) throw IoError("bad magic in " + what_);
  }

 private:
  void need(size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("truncated file " + what_);
  }

  std::string bytes_;
  std::string what_;
  size_t pos_ = 0;
};

}  // namespace

void write_tensors(const std::filesystem::path& path, const std::vector<ag::Mat>& mats) {
  std::string out(kTensorMagic, 8);
  put<std::uint64_t>(out, mats.size());
  for (const auto& m : mats) put_matrix(out, m);
  write_file_atomic(path, out);
}

std::vector<ag::Mat> read_tensors(const std::filesystem::path& path) {
  Reader r(read_file(path), path.string());
  r.expect_magic(kTensorMagic);
  const auto n = r.get<std::uint64_t>();
  std::vector<ag::Mat> mats;
  for (std::uint64_t i = 0; i < n; ++i) mats.push_back(r.get_matrix());
  return mats;
}

void save_params(const ag::ParamStore<float>& store, const std::filesystem::path& path) {
  std::string out(kParamMagic, 8);
  const auto params = store.all();
  put<std::uint64_t>(out, params.size());
  for (const auto* p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put_matrix(out, p->value);
  }
  write_file_atomic(path, out);
}

void load_params(ag::ParamStore<float>& store, const std::filesystem::path& path) {
  Reader r(read_file(path), path.string());
  r.expect_magic(kParamMagic);
  const auto n = r.get<std::uint64_t>();
  std::unordered_set<std::string> seen;
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto len = r.get<std::uint32_t>();
    const std::string name = r.get_string(len);
    ag::Mat m = r.get_matrix();
    auto* p = store.find(name);
    if (p == nullptr) throw ConfigError("checkpoint parameter '" + name + "' not in model");
    if (p->value.rows() != m.rows() || p->value.cols() != m.cols()) {
      throw ConfigError("checkpoint parameter '" + name + "' has a different shape");
    }
    p->value = std::move(m);
    seen.insert(name);
  }
  for (const auto* p : store.all()) {
    if (seen.count(p->name) == 0) throw ConfigError("checkpoint is missing parameter '" + p->name + "'");
  }
}

}  // namespace voicectl
