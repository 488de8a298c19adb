#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trajdiff/diffusion.hpp"
#include "trajdiff/schedule.hpp"
#include "trajdiff/tensor.hpp"

namespace trajdiff {

struct MetricReport {
  double frechet = 0.0;
  double mmd = 0.0;
  double alignment = 0.0;
  std::size_t n_samples = 0;
  int nfe = 0;
  std::uint64_t seed = 0;
};

// Component means (K x d) of a labeled mixture; label k owns row k.
struct MixtureSpec {
  Tensor means;
  std::vector<double> stds;
  std::size_t components() const { return means.rows(); }
};

struct GaussianFit {
  std::vector<double> mean;
  Tensor cov;  // d x d, unbiased
};

GaussianFit fit_gaussian(const Tensor& samples);

// ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a^{1/2} S_b S_a^{1/2})^{1/2}), clamped at 0.
double frechet_from_moments(std::span<const double> mu_a, const Tensor& cov_a, std::span<const double> mu_b,
                            const Tensor& cov_b);
// Fréchet distance between Gaussian fits of two sample matrices (n, m > d).
double frechet_distance(const Tensor& a, const Tensor& b);

double rbf_kernel(std::span<const double> x, std::span<const double> y, double bandwidth);
// Unbiased MMD^2 with kernel exp(-||x - y||^2 / (2 bandwidth^2)).
double mmd_rbf(const Tensor& a, const Tensor& b, double bandwidth);
// Bootstrap standard error of mmd_rbf under paired resampling of rows.
double mmd_bootstrap_se(const Tensor& a, const Tensor& b, double bandwidth, int reps, std::uint64_t seed);

// Fraction of rows whose nearest component mean carries the row's label.
double mode_alignment(const Tensor& samples, std::span<const int> labels, const MixtureSpec& mixture);

// KL(q(x_t) || N(0, I)) for Gaussian data N(mean, cov) pushed through the
// forward process: q(x_t) = N(sqrt(ab) mean, ab cov + (1 - ab) I).
double leakage_kl(const NoiseSchedule& s, std::span<const double> data_mean, const Tensor& data_cov, int t);
// I(x_t; x_0) for the same Gaussian channel: 1/2 log det(I + ab/(1-ab) cov).
double leakage_mutual_information(const NoiseSchedule& s, const Tensor& data_cov, int t);

// Teacher-forced vs rollout error of a stepwise model.
//
// Teacher-forced error at step t (our protocol): noise the data to x_t,
// take one ancestral step to the next listed step s (0 after the last), and
// score the result against forward_noise(data, s) with the Fréchet distance.
// Rollout error: Fréchet distance of a full few-step generation from pure
// noise against the data. gap = rollout - mean(teacher_forced).
struct GapReport {
  std::vector<int> steps;
  std::vector<double> teacher_forced;
  double rollout = 0.0;
  double gap = 0.0;
  std::size_t n = 0;
  std::string protocol = "teacher-forced one-step Frechet vs few-step rollout Frechet";

  double mean_teacher_forced() const;
};

// `predict` must be conditioned on the labels of `data`'s rows.
GapReport gap_probe(const EpsilonPredictor& predict, const NoiseSchedule& s, const Tensor& data,
                    std::span<const int> step_list, std::uint64_t seed);
GapReport gap_probe(const Denoiser& model, const NoiseSchedule& s, const Tensor& data, std::span<const int> labels,
                    std::span<const int> step_list, std::uint64_t seed);

}  // namespace trajdiff
