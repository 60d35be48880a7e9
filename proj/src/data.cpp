#include "fedecho/data.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>

namespace fedecho {
namespace {

struct Sampler {
  // Draws one input row for class c; shift moves the sample along a fixed direction.
  virtual void draw(int c, RngStream& rng, double shift, Eigen::Ref<RowVector<double>> out) const = 0;
  virtual ~Sampler() = default;
};

struct MixtureSampler final : Sampler {
  DenseMatrix centers;
  double spread;
  void draw(int c, RngStream& rng, double shift, Eigen::Ref<RowVector<double>> out) const override {
    const double step = shift * spread / std::sqrt(static_cast<double>(centers.cols()));
    for (Index j = 0; j < centers.cols(); ++j) {
      out(j) = centers(c, j) + spread * rng.normal() + step;
    }
  }
};

struct SpiralSampler final : Sampler {
  double noise;
  void draw(int c, RngStream& rng, double shift, Eigen::Ref<RowVector<double>> out) const override {
    const double t = std::sqrt(rng.uniform01());
    const double angle = 3.0 * std::numbers::pi * t + std::numbers::pi * c;
    const double step = shift * noise / std::numbers::sqrt2;
    out(0) = t * std::cos(angle) + noise * rng.normal() + step;
    out(1) = t * std::sin(angle) + noise * rng.normal() + step;
  }
};

Batch draw_labeled(const Sampler& s, int classes, int dims, Index n, RngStream rng) {
  Batch b;
  b.inputs.resize(n, dims);
  b.labels.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const int c = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(classes)));
    b.labels[static_cast<std::size_t>(i)] = c;
    s.draw(c, rng, 0.0, b.inputs.row(i));
  }
  return b;
}

template <typename T>
void put(std::ostream& os, T value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  std::uint64_t bits = 0;
  std::memcpy(&bits, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw ConfigError("dataset file truncated");
  }
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

void put_features(std::ostream& os, const DenseMatrix& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) put<double>(os, m(r, c));
}

DenseMatrix get_features(std::istream& is, Index rows, Index cols) {
  DenseMatrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = get<double>(is);
  return m;
}

std::vector<int> get_labels(std::istream& is, Index n, int classes) {
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (auto& y : labels) {
    const auto v = get<std::uint32_t>(is);
    if (v >= static_cast<std::uint32_t>(classes)) throw ConfigError("dataset label out of range");
    y = static_cast<int>(v);
  }
  return labels;
}

}  // namespace

int DatasetSpec::classes() const {
  if (const auto* g = std::get_if<GaussianMixture>(&kind)) return g->classes;
  return 2;
}

int DatasetSpec::dims() const {
  if (const auto* g = std::get_if<GaussianMixture>(&kind)) return g->dims;
  return 2;
}

void DatasetSpec::validate() const {
  if (const auto* g = std::get_if<GaussianMixture>(&kind)) {
    if (g->classes < 2) throw ConfigError("data.classes: need at least 2 classes");
    if (g->dims < 1) throw ConfigError("data.dims: need at least 1 dimension");
    if (!(g->spread >= 0.0)) throw ConfigError("data.spread: must be non-negative");
    if (!(g->center_scale > 0.0)) throw ConfigError("data.center_scale: must be positive");
  } else if (!(std::get<TwoSpirals>(kind).noise >= 0.0)) {
    throw ConfigError("data.noise: must be non-negative");
  }
  if (n_train < 1 || n_test < 1 || n_unlabeled < 1) {
    throw ConfigError("data: n_train, n_test and n_unlabeled must be at least 1");
  }
}

Dataset generate(const DatasetSpec& spec) {
  spec.validate();
  const int classes = spec.classes();
  const int dims = spec.dims();

  std::unique_ptr<Sampler> sampler;
  if (const auto* g = std::get_if<GaussianMixture>(&spec.kind)) {
    auto m = std::make_unique<MixtureSampler>();
    RngStream rng = RngStream::named(spec.seed, "data-centers");
    m->centers.resize(classes, dims);
    for (Index i = 0; i < m->centers.size(); ++i) m->centers.data()[i] = g->center_scale * rng.normal();
    m->spread = g->spread;
    sampler = std::move(m);
  } else {
    auto s = std::make_unique<SpiralSampler>();
    s->noise = std::get<TwoSpirals>(spec.kind).noise;
    sampler = std::move(s);
  }

  Dataset out;
  out.classes = classes;
  out.train = draw_labeled(*sampler, classes, dims, spec.n_train, RngStream::named(spec.seed, "data-train"));
  out.test = draw_labeled(*sampler, classes, dims, spec.n_test, RngStream::named(spec.seed, "data-test"));

  RngStream rng = RngStream::named(spec.seed, "data-unlabeled");
  const double shift = spec.pool == PoolMode::Shifted ? 1.0 : 0.0;
  out.unlabeled.resize(spec.n_unlabeled, dims);
  for (Index i = 0; i < spec.n_unlabeled; ++i) {
    const int c = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(classes)));
    sampler->draw(c, rng, shift, out.unlabeled.row(i));
  }
  return out;
}

std::vector<std::size_t> Partition::sizes() const {
  std::vector<std::size_t> s;
  s.reserve(client_indices.size());
  for (const auto& c : client_indices) s.push_back(c.size());
  return s;
}

Partition dirichlet_partition(std::span<const int> labels, int clients, double alpha_dir,
                              RngStream& rng) {
  if (clients < 1) throw ConfigError("partition: need at least one client");
  if (!(alpha_dir > 0.0)) throw ConfigError("partition: Dirichlet concentration must be positive");
  if (labels.size() < static_cast<std::size_t>(clients)) {
    throw ConfigError("partition: " + std::to_string(labels.size()) + " samples cannot cover " +
                      std::to_string(clients) + " clients");
  }
  const int classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[static_cast<std::size_t>(labels[i])].push_back(static_cast<Index>(i));
  }

  Partition part;
  part.client_indices.resize(static_cast<std::size_t>(clients));
  for (auto& members : by_class) {
    if (members.empty()) continue;
    rng.shuffle(std::span<Index>(members));
    const std::vector<double> p = rng.dirichlet(alpha_dir, static_cast<std::size_t>(clients));
    const double n = static_cast<double>(members.size());
    double cumulative = 0.0;
    std::size_t begin = 0;
    for (std::size_t c = 0; c < p.size(); ++c) {
      cumulative += p[c];
      std::size_t end = c + 1 == p.size()
                            ? members.size()
                            : std::min(members.size(), static_cast<std::size_t>(cumulative * n));
      end = std::max(end, begin);
      auto& dst = part.client_indices[c];
      dst.insert(dst.end(), members.begin() + static_cast<std::ptrdiff_t>(begin),
                 members.begin() + static_cast<std::ptrdiff_t>(end));
      begin = end;
    }
  }

  for (auto& client : part.client_indices) {
    if (!client.empty()) continue;
    auto largest = std::max_element(
        part.client_indices.begin(), part.client_indices.end(),
        [](const auto& a, const auto& b) { return a.size() < b.size(); });
    client.push_back(largest->back());
    largest->pop_back();
  }
  for (auto& client : part.client_indices) std::sort(client.begin(), client.end());
  return part;
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open " + path.string() + " for writing");
  os.write("FEDD", 4);
  put<std::uint32_t>(os, kDatasetFormatVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(data.train.inputs.cols()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(data.classes));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(data.train.size()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(data.test.size()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(data.unlabeled.rows()));
  put_features(os, data.train.inputs);
  for (int y : data.train.labels) put<std::uint32_t>(os, static_cast<std::uint32_t>(y));
  put_features(os, data.test.inputs);
  for (int y : data.test.labels) put<std::uint32_t>(os, static_cast<std::uint32_t>(y));
  put_features(os, data.unlabeled);
  if (!os) throw ConfigError("failed writing " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open dataset " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "FEDD", 4) != 0) {
    throw ConfigError(path.string() + " is not a dataset file");
  }
  if (get<std::uint32_t>(is) != kDatasetFormatVersion) {
    throw ConfigError(path.string() + ": unsupported dataset version");
  }
  const Index d = get<std::uint32_t>(is);
  const int k = static_cast<int>(get<std::uint32_t>(is));
  const Index n_train = get<std::uint32_t>(is);
  const Index n_test = get<std::uint32_t>(is);
  const Index n_pool = get<std::uint32_t>(is);
  if (k < 2 || d < 1) throw ConfigError(path.string() + ": invalid header");

  Dataset data;
  data.classes = k;
  data.train.inputs = get_features(is, n_train, d);
  data.train.labels = get_labels(is, n_train, k);
  data.test.inputs = get_features(is, n_test, d);
  data.test.labels = get_labels(is, n_test, k);
  data.unlabeled = get_features(is, n_pool, d);
  if (is.peek() != std::char_traits<char>::eof()) {
    throw ConfigError(path.string() + ": trailing bytes after dataset payload");
  }
  return data;
}

}  // namespace fedecho
