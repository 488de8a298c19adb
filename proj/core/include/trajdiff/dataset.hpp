#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trajdiff/metrics.hpp"
#include "trajdiff/tensor.hpp"

namespace trajdiff {

enum class DatasetKind { kGaussianRing, kGaussianGrid, kTwoMoons, kCheckerboard };

std::string_view to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(std::string_view text);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::kGaussianRing;
  std::size_t n = 8000;
  std::size_t dim = 2;
  std::size_t components = 8;
  double radius = 4.0;
  double std = 0.3;

  void validate() const;
  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct Dataset {
  DatasetSpec spec;
  std::uint64_t seed = 0;
  Tensor samples;           // n x d
  std::vector<int> labels;  // row i carries label i % K (stratified)
  std::optional<MixtureSpec> mixture;  // only for the Gaussian kinds

  // Analytic mixture when known, otherwise empirical per-label means.
  MixtureSpec alignment_reference() const;
};

Dataset gen_dataset(const DatasetSpec& spec, std::uint64_t seed);
Dataset gen_dataset(DatasetKind kind, std::size_t n, std::size_t dim, std::size_t components, std::uint64_t seed);

// Component means of the Gaussian kinds (ring: circle in the first two
// coordinates, a single component sits at the origin; grid: square lattice
// spanning [-R, R]).
MixtureSpec analytic_mixture(const DatasetSpec& spec);
MixtureSpec empirical_mixture(const Tensor& samples, std::span<const int> labels, std::size_t components);

// Binary layout, little-endian: "TDDS", u32 version, u64 n, u32 d,
// u32 dtype (1 = f64), u32 kind, u32 K, f64 radius, f64 std, u64 seed,
// n*d f64 row-major samples, n u32 labels.
void write_dataset(std::ostream& os, const Dataset& d);
Dataset read_dataset(std::istream& is);
void write_dataset_file(const std::string& path, const Dataset& d);
Dataset read_dataset_file(const std::string& path);

}  // namespace trajdiff
