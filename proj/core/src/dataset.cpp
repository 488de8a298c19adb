#include "trajdiff/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>

#include "trajdiff/error.hpp"
#include "trajdiff/rng.hpp"

namespace trajdiff {

std::string_view to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kGaussianRing: return "gaussian-ring";
    case DatasetKind::kGaussianGrid: return "gaussian-grid";
    case DatasetKind::kTwoMoons: return "two-moons";
    case DatasetKind::kCheckerboard: return "checkerboard";
  }
  return "?";
}

DatasetKind parse_dataset_kind(std::string_view text) {
  for (auto k : {DatasetKind::kGaussianRing, DatasetKind::kGaussianGrid, DatasetKind::kTwoMoons,
                 DatasetKind::kCheckerboard}) {
    if (text == to_string(k)) return k;
  }
  throw ConfigError("unknown dataset kind '" + std::string(text) +
                    "' (gaussian-ring|gaussian-grid|two-moons|checkerboard)");
}

namespace {

std::size_t exact_sqrt(std::size_t v) {
  auto r = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(v))));
  return r * r == v ? r : 0;
}

}  // namespace

void DatasetSpec::validate() const {
  if (components < 1) throw ConfigError("data.components: must be >= 1");
  if (n < components) {
    throw ConfigError("data.n: " + std::to_string(n) + " is smaller than data.components = " +
                      std::to_string(components));
  }
  if (!(std > 0.0) || !std::isfinite(std)) throw ConfigError("data.std: must be > 0");
  if (!(radius > 0.0) || !std::isfinite(radius)) throw ConfigError("data.radius: must be > 0");
  switch (kind) {
    case DatasetKind::kGaussianRing:
      if (dim < 2 && components > 1) throw ConfigError("data.dim: gaussian-ring needs dim >= 2");
      if (dim < 1) throw ConfigError("data.dim: must be >= 1");
      break;
    case DatasetKind::kGaussianGrid:
      if (dim < 2) throw ConfigError("data.dim: gaussian-grid needs dim >= 2");
      if (exact_sqrt(components) == 0) throw ConfigError("data.components: gaussian-grid needs a perfect square");
      break;
    case DatasetKind::kTwoMoons:
      if (dim != 2) throw ConfigError("data.dim: two-moons is 2-dimensional");
      if (components != 2) throw ConfigError("data.components: two-moons has exactly 2 classes");
      break;
    case DatasetKind::kCheckerboard: {
      if (dim != 2) throw ConfigError("data.dim: checkerboard is 2-dimensional");
      const std::size_t m = exact_sqrt(2 * components);
      if (m == 0 || m % 2 != 0) {
        throw ConfigError("data.components: checkerboard needs K = m^2 / 2 for an even board size m");
      }
      break;
    }
  }
}

MixtureSpec analytic_mixture(const DatasetSpec& spec) {
  spec.validate();
  const std::size_t k = spec.components;
  MixtureSpec m;
  m.means = Tensor({k, spec.dim});
  m.stds.assign(k, spec.std);
  if (spec.kind == DatasetKind::kGaussianRing) {
    if (k == 1) return m;
    for (std::size_t c = 0; c < k; ++c) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(k);
      m.means.at(c, 0) = spec.radius * std::cos(angle);
      m.means.at(c, 1) = spec.radius * std::sin(angle);
    }
    return m;
  }
  if (spec.kind == DatasetKind::kGaussianGrid) {
    const std::size_t side = exact_sqrt(k);
    const double spacing = side > 1 ? 2.0 * spec.radius / static_cast<double>(side - 1) : 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      m.means.at(c, 0) = side > 1 ? -spec.radius + spacing * static_cast<double>(c % side) : 0.0;
      m.means.at(c, 1) = side > 1 ? -spec.radius + spacing * static_cast<double>(c / side) : 0.0;
    }
    return m;
  }
  throw DomainError("analytic_mixture: " + std::string(to_string(spec.kind)) + " is not a Gaussian mixture");
}

MixtureSpec empirical_mixture(const Tensor& samples, std::span<const int> labels, std::size_t components) {
  if (labels.size() != samples.rows()) throw ShapeError("empirical_mixture: one label per row required");
  MixtureSpec m;
  m.means = Tensor({components, samples.cols()});
  std::vector<double> count(components, 0.0);
  for (std::size_t r = 0; r < samples.rows(); ++r) {
    const int l = labels[r];
    if (l < 0 || static_cast<std::size_t>(l) >= components) {
      throw DomainError("empirical_mixture: label " + std::to_string(l) + " out of range");
    }
    count[static_cast<std::size_t>(l)] += 1.0;
    for (std::size_t c = 0; c < samples.cols(); ++c) m.means.at(static_cast<std::size_t>(l), c) += samples.at(r, c);
  }
  for (std::size_t k = 0; k < components; ++k) {
    if (count[k] == 0.0) continue;
    for (std::size_t c = 0; c < samples.cols(); ++c) m.means.at(k, c) /= count[k];
  }
  return m;
}

MixtureSpec Dataset::alignment_reference() const {
  if (mixture) return *mixture;
  return empirical_mixture(samples, labels, spec.components);
}

Dataset gen_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  spec.validate();
  Dataset d;
  d.spec = spec;
  d.seed = seed;
  d.samples = Tensor({spec.n, spec.dim});
  d.labels.resize(spec.n);
  Rng rng(seed);
  const std::size_t k = spec.components;

  if (spec.kind == DatasetKind::kGaussianRing || spec.kind == DatasetKind::kGaussianGrid) {
    d.mixture = analytic_mixture(spec);
    for (std::size_t r = 0; r < spec.n; ++r) {
      const std::size_t label = r % k;
      d.labels[r] = static_cast<int>(label);
      for (std::size_t c = 0; c < spec.dim; ++c) {
        d.samples.at(r, c) = d.mixture->means.at(label, c) + spec.std * rng.normal();
      }
    }
    return d;
  }

  if (spec.kind == DatasetKind::kTwoMoons) {
    // Upper moon centred at the origin, lower moon shifted by (1, -0.5); scaled by R/2.
    const double scale = spec.radius / 2.0;
    for (std::size_t r = 0; r < spec.n; ++r) {
      const int label = static_cast<int>(r % 2);
      const double theta = std::numbers::pi * rng.uniform();
      double x = std::cos(theta);
      double y = std::sin(theta);
      if (label == 1) {
        x = 1.0 - x;
        y = 0.5 - y;
      }
      d.labels[r] = label;
      d.samples.at(r, 0) = scale * (x - 0.5) + spec.std * rng.normal();
      d.samples.at(r, 1) = scale * (y - 0.25) + spec.std * rng.normal();
    }
    return d;
  }

  // Checkerboard: uniform points in the dark cells of an m x m board over [-R, R]^2.
  const std::size_t m = exact_sqrt(2 * k);
  const double cell = 2.0 * spec.radius / static_cast<double>(m);
  for (std::size_t r = 0; r < spec.n; ++r) {
    const std::size_t label = r % k;
    const std::size_t row = (2 * label) / m;
    const std::size_t col = (2 * label) % m + (row % 2);
    d.labels[r] = static_cast<int>(label);
    d.samples.at(r, 0) = -spec.radius + cell * (static_cast<double>(col) + rng.uniform());
    d.samples.at(r, 1) = -spec.radius + cell * (static_cast<double>(row) + rng.uniform());
  }
  return d;
}

Dataset gen_dataset(DatasetKind kind, std::size_t n, std::size_t dim, std::size_t components, std::uint64_t seed) {
  DatasetSpec spec;
  spec.kind = kind;
  spec.n = n;
  spec.dim = dim;
  spec.components = components;
  return gen_dataset(spec, seed);
}

namespace {

constexpr char kMagic[4] = {'T', 'D', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kDtypeF64 = 1;

template <typename U>
void put(std::ostream& os, U v) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

void put_f64(std::ostream& os, double v) { put<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v)); }

template <typename U>
U get(std::istream& is, const char* what) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw IoError(std::string("dataset: truncated at ") + what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is, const char* what) { return std::bit_cast<double>(get<std::uint64_t>(is, what)); }

}  // namespace

void write_dataset(std::ostream& os, const Dataset& d) {
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::uint64_t>(os, d.samples.rows());
  put<std::uint32_t>(os, static_cast<std::uint32_t>(d.samples.cols()));
  put<std::uint32_t>(os, kDtypeF64);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(d.spec.kind));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(d.spec.components));
  put_f64(os, d.spec.radius);
  put_f64(os, d.spec.std);
  put<std::uint64_t>(os, d.seed);
  for (double v : d.samples.data()) put_f64(os, v);
  for (int l : d.labels) put<std::uint32_t>(os, static_cast<std::uint32_t>(l));
  if (!os) throw IoError("dataset: write failed");
}

Dataset read_dataset(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) throw IoError("dataset: bad magic");
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kVersion) throw IoError("dataset: unsupported version " + std::to_string(version));
  Dataset d;
  const auto n = get<std::uint64_t>(is, "n");
  const auto dim = get<std::uint32_t>(is, "d");
  const auto dtype = get<std::uint32_t>(is, "dtype");
  if (dtype != kDtypeF64) throw IoError("dataset: unsupported dtype " + std::to_string(dtype));
  const auto kind = get<std::uint32_t>(is, "kind");
  if (kind > static_cast<std::uint32_t>(DatasetKind::kCheckerboard)) throw IoError("dataset: unknown kind");
  d.spec.kind = static_cast<DatasetKind>(kind);
  d.spec.n = n;
  d.spec.dim = dim;
  d.spec.components = get<std::uint32_t>(is, "K");
  d.spec.radius = get_f64(is, "radius");
  d.spec.std = get_f64(is, "std");
  d.seed = get<std::uint64_t>(is, "seed");
  d.spec.validate();
  d.samples = Tensor({n, dim});
  for (auto& v : d.samples.data()) v = get_f64(is, "samples");
  d.labels.resize(n);
  for (auto& l : d.labels) {
    l = static_cast<int>(get<std::uint32_t>(is, "labels"));
    if (static_cast<std::size_t>(l) >= d.spec.components) throw IoError("dataset: label out of range");
  }
  if (d.spec.kind == DatasetKind::kGaussianRing || d.spec.kind == DatasetKind::kGaussianGrid) {
    d.mixture = analytic_mixture(d.spec);
  }
  return d;
}

void write_dataset_file(const std::string& path, const Dataset& d) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("dataset: cannot open '" + path + "' for writing");
  write_dataset(os, d);
}

Dataset read_dataset_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("dataset: cannot open '" + path + "'");
  return read_dataset(is);
}

}  // namespace trajdiff
