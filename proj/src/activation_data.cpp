#include "repsim/activation_data.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "repsim/errors.hpp"
#include "repsim/rng.hpp"

namespace repsim {

static_assert(std::endian::native == std::endian::little, "ACTV I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'A', 'C', 'T', 'V'};
constexpr std::uint32_t kVersion = 1;

class Reader {
 public:
  Reader(std::istream& in, std::string ctx) : in_(in), ctx_(std::move(ctx)) {}

  void bytes(void* dst, std::size_t len) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(len));
    if (static_cast<std::size_t>(in_.gcount()) != len)
      throw FormatError(ctx_ + ": truncated file");
  }
  template <class T>
  T pod() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str(std::size_t len) {
    std::string s(len, '\0');
    if (len) bytes(s.data(), len);
    return s;
  }

 private:
  std::istream& in_;
  std::string ctx_;
};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void bytes(const void* src, std::size_t len) {
    out_.write(static_cast<const char*>(src), static_cast<std::streamsize>(len));
  }
  template <class T>
  void pod(T v) {
    bytes(&v, sizeof v);
  }

 private:
  std::ostream& out_;
};

}  // namespace

std::uint64_t ActivationTensor::row_size() const {
  std::uint64_t s = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) s *= shape[i];
  return s;
}

void ActivationTensor::check() const {
  if (shape.size() != 2 && shape.size() != 4)
    throw FormatError("layer " + layer_id + ": rank must be 2 or 4");
  std::uint64_t total = 1;
  for (auto d : shape) {
    if (d == 0) throw FormatError("layer " + layer_id + ": zero dimension");
    total *= d;
  }
  if (total != data.size()) throw FormatError("layer " + layer_id + ": data length does not match shape");
  for (float v : data)
    if (!std::isfinite(v)) throw DataError("layer " + layer_id + ": non-finite value");
}

Matrix ActivationTensor::to_matrix() const {
  const auto rows = static_cast<Eigen::Index>(n());
  const auto cols = static_cast<Eigen::Index>(row_size());
  Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
      data.data(), rows, cols);
  return m.cast<double>();
}

ActivationTensor ActivationTensor::from_matrix(std::string layer_id, const Matrix& m) {
  ActivationTensor t;
  t.layer_id = std::move(layer_id);
  t.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  t.data.resize(static_cast<std::size_t>(m.size()));
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.data[k++] = static_cast<float>(m(i, j));
  return t;
}

std::vector<std::string> ActivationArchive::layer_ids() const {
  std::vector<std::string> ids;
  for (const auto& l : layers) ids.push_back(l.layer_id);
  return ids;
}

int ActivationArchive::find_layer(const std::string& id) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].layer_id == id) return static_cast<int>(i);
  return -1;
}

void ActivationArchive::check() const {
  if (layers.empty()) throw FormatError("archive has no layers");
  std::set<std::string> seen;
  for (const auto& l : layers) {
    l.check();
    if (l.n() != example_ids.size())
      throw ConsistencyError("layer " + l.layer_id + " has " + std::to_string(l.n()) +
                             " examples, expected " + std::to_string(example_ids.size()));
    if (!seen.insert(l.layer_id).second) throw ConsistencyError("duplicate layer id " + l.layer_id);
  }
}

ActivationArchive ActivationArchive::select(const std::vector<std::size_t>& rows) const {
  ActivationArchive out;
  out.metadata = metadata;
  for (auto r : rows) out.example_ids.push_back(example_ids.at(r));
  for (const auto& l : layers) {
    ActivationTensor t;
    t.layer_id = l.layer_id;
    t.shape = l.shape;
    t.shape[0] = rows.size();
    const auto rs = l.row_size();
    t.data.reserve(rows.size() * rs);
    for (auto r : rows) {
      auto first = l.data.begin() + static_cast<std::ptrdiff_t>(r * rs);
      t.data.insert(t.data.end(), first, first + static_cast<std::ptrdiff_t>(rs));
    }
    out.layers.push_back(std::move(t));
  }
  return out;
}

std::vector<std::string> default_ids(std::size_t n) {
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = std::to_string(i);
  return ids;
}

ActivationArchive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string ctx = path.string();
  Reader r(in, ctx);

  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(ctx + ": bad magic");
  if (auto v = r.pod<std::uint32_t>(); v != kVersion)
    throw FormatError(ctx + ": unsupported version " + std::to_string(v));

  ActivationArchive a;
  const auto meta_len = r.pod<std::uint32_t>();
  const std::string meta = r.str(meta_len);
  nlohmann::json mj;
  try {
    mj = nlohmann::json::parse(meta.empty() ? std::string("{}") : meta);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(ctx + ": metadata is not JSON");
  }
  if (!mj.is_object()) throw FormatError(ctx + ": metadata must be a JSON object");
  for (auto& [k, v] : mj.items()) a.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();

  const auto n = r.pod<std::uint32_t>();
  a.example_ids.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) a.example_ids.push_back(r.str(r.pod<std::uint16_t>()));

  const auto nl = r.pod<std::uint32_t>();
  for (std::uint32_t li = 0; li < nl; ++li) {
    ActivationTensor t;
    t.layer_id = r.str(r.pod<std::uint16_t>());
    const auto rank = r.pod<std::uint8_t>();
    if (rank != 2 && rank != 4) throw FormatError(ctx + ": layer " + t.layer_id + " has rank " + std::to_string(rank));
    t.shape.resize(rank);
    std::uint64_t total = 1;
    for (auto& d : t.shape) {
      d = r.pod<std::uint64_t>();
      if (d == 0 || d > (1ULL << 40)) throw FormatError(ctx + ": layer " + t.layer_id + " has a bad dimension");
      total *= d;
      if (total > (1ULL << 34)) throw FormatError(ctx + ": layer " + t.layer_id + " is too large");
    }
    if (t.shape[0] != n)
      throw ConsistencyError(ctx + ": layer " + t.layer_id + " has " + std::to_string(t.shape[0]) +
                             " examples, expected " + std::to_string(n));
    t.data.resize(total);
    r.bytes(t.data.data(), total * sizeof(float));
    a.layers.push_back(std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(ctx + ": trailing bytes");
  try {
    a.check();
  } catch (const FormatError& e) {
    throw FormatError(ctx + ": " + e.what());
  } catch (const ConsistencyError& e) {
    throw ConsistencyError(ctx + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(ctx + ": " + e.what());
  }
  return a;
}

void save_archive(const ActivationArchive& archive, const std::filesystem::path& path) {
  archive.check();
  nlohmann::json mj = nlohmann::json::object();
  for (const auto& [k, v] : archive.metadata) mj[k] = v;
  const std::string meta = mj.dump();

  std::ostringstream buf;
  Writer w(buf);
  w.bytes(kMagic, 4);
  w.pod(kVersion);
  w.pod(static_cast<std::uint32_t>(meta.size()));
  w.bytes(meta.data(), meta.size());
  w.pod(static_cast<std::uint32_t>(archive.example_ids.size()));
  for (const auto& id : archive.example_ids) {
    if (id.size() > UINT16_MAX) throw ArgumentError("example id too long");
    w.pod(static_cast<std::uint16_t>(id.size()));
    w.bytes(id.data(), id.size());
  }
  w.pod(static_cast<std::uint32_t>(archive.layers.size()));
  for (const auto& l : archive.layers) {
    if (l.layer_id.size() > UINT16_MAX) throw ArgumentError("layer id too long");
    w.pod(static_cast<std::uint16_t>(l.layer_id.size()));
    w.bytes(l.layer_id.data(), l.layer_id.size());
    w.pod(static_cast<std::uint8_t>(l.shape.size()));
    for (auto d : l.shape) w.pod(static_cast<std::uint64_t>(d));
    w.bytes(l.data.data(), l.data.size() * sizeof(float));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  const std::string bytes = buf.str();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

ActivationTensor flatten_feature_map(const ActivationTensor& t) {
  if (t.rank() == 2) return t;
  ActivationTensor out = t;
  out.shape = {t.n(), t.row_size()};
  return out;
}

Matrix center_columns(const Matrix& x) {
  if (x.rows() < 1) throw ArgumentError("center_columns: need at least one row");
  return x.rowwise() - x.colwise().mean();
}

MinibatchSchedule make_schedule(std::size_t n, std::size_t batch_size, std::size_t epochs,
                                std::uint64_t seed) {
  if (batch_size < 4) throw ArgumentError("batch size must be at least 4");
  if (batch_size > n) throw ArgumentError("batch size exceeds example count");
  MinibatchSchedule s{n, batch_size, epochs, seed, {}};
  Rng rng(seed);
  for (std::size_t e = 0; e < epochs; ++e) {
    const auto perm = permutation(n, rng);
    for (std::size_t start = 0; start + batch_size <= n; start += batch_size)
      s.batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                             perm.begin() + static_cast<std::ptrdiff_t>(start + batch_size));
  }
  return s;
}

}  // namespace repsim
