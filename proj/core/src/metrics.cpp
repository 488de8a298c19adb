#include "trajdiff/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numeric>

#include "trajdiff/error.hpp"
#include "trajdiff/rng.hpp"

namespace trajdiff {
namespace {

using Mat = Eigen::MatrixXd;

Mat to_eigen(const Tensor& t) {
  Mat m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.at(r, c);
  }
  return m;
}

Mat psd_sqrt(const Mat& m) {
  const Mat sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(sym);
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

void check_matrix(const char* what, const Tensor& t) {
  if (t.rank() != 2) throw ShapeError(std::string(what) + ": expected a matrix, got " + shape_str(t.shape()));
}

}  // namespace

GaussianFit fit_gaussian(const Tensor& samples) {
  check_matrix("fit_gaussian", samples);
  const std::size_t n = samples.rows();
  const std::size_t d = samples.cols();
  if (n < 2) throw DomainError("fit_gaussian: need at least 2 samples");
  GaussianFit fit;
  fit.mean.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) fit.mean[c] += samples.at(r, c);
  }
  for (double& m : fit.mean) m /= static_cast<double>(n);
  fit.cov = Tensor({d, d});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      const double di = samples.at(r, i) - fit.mean[i];
      for (std::size_t j = i; j < d; ++j) fit.cov.at(i, j) += di * (samples.at(r, j) - fit.mean[j]);
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      fit.cov.at(i, j) /= static_cast<double>(n - 1);
      fit.cov.at(j, i) = fit.cov.at(i, j);
    }
  }
  return fit;
}

double frechet_from_moments(std::span<const double> mu_a, const Tensor& cov_a, std::span<const double> mu_b,
                            const Tensor& cov_b) {
  const std::size_t d = mu_a.size();
  if (mu_b.size() != d || cov_a.shape() != Shape{d, d} || cov_b.shape() != Shape{d, d}) {
    throw ShapeError("frechet: moment dimensions disagree");
  }
  double mean_term = 0.0;
  for (std::size_t i = 0; i < d; ++i) mean_term += (mu_a[i] - mu_b[i]) * (mu_a[i] - mu_b[i]);
  const Mat sa = to_eigen(cov_a);
  const Mat sb = to_eigen(cov_b);
  const Mat ra = psd_sqrt(sa);
  const Mat inner = ra * sb * ra;
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double cross = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value = mean_term + sa.trace() + sb.trace() - 2.0 * cross;
  return std::max(value, 0.0);
}

double frechet_distance(const Tensor& a, const Tensor& b) {
  check_matrix("frechet", a);
  check_matrix("frechet", b);
  if (a.cols() != b.cols()) throw ShapeError("frechet: sample dimensions differ");
  if (a.rows() <= a.cols() || b.rows() <= b.cols()) {
    throw DomainError("frechet: need more samples than dimensions (got " + std::to_string(a.rows()) + " and " +
                      std::to_string(b.rows()) + " for d = " + std::to_string(a.cols()) + ")");
  }
  const GaussianFit fa = fit_gaussian(a);
  const GaussianFit fb = fit_gaussian(b);
  return frechet_from_moments(fa.mean, fa.cov, fb.mean, fb.cov);
}

double rbf_kernel(std::span<const double> x, std::span<const double> y, double bandwidth) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
  return std::exp(-d2 / (2.0 * bandwidth * bandwidth));
}

namespace {

std::span<const double> row_span(const Tensor& t, std::size_t r) { return t.data().subspan(r * t.cols(), t.cols()); }

double mmd_with_rows(const Tensor& a, const std::vector<std::size_t>& ia, const Tensor& b,
                     const std::vector<std::size_t>& ib, double bw) {
  const double n = static_cast<double>(ia.size());
  const double m = static_cast<double>(ib.size());
  double kaa = 0.0, kbb = 0.0, kab = 0.0;
  for (std::size_t i = 0; i < ia.size(); ++i) {
    for (std::size_t j = i + 1; j < ia.size(); ++j) kaa += rbf_kernel(row_span(a, ia[i]), row_span(a, ia[j]), bw);
  }
  for (std::size_t i = 0; i < ib.size(); ++i) {
    for (std::size_t j = i + 1; j < ib.size(); ++j) kbb += rbf_kernel(row_span(b, ib[i]), row_span(b, ib[j]), bw);
  }
  for (std::size_t i : ia) {
    for (std::size_t j : ib) kab += rbf_kernel(row_span(a, i), row_span(b, j), bw);
  }
  return 2.0 * kaa / (n * (n - 1.0)) + 2.0 * kbb / (m * (m - 1.0)) - 2.0 * kab / (n * m);
}

}  // namespace

double mmd_rbf(const Tensor& a, const Tensor& b, double bandwidth) {
  check_matrix("mmd", a);
  check_matrix("mmd", b);
  if (a.cols() != b.cols()) throw ShapeError("mmd: sample dimensions differ");
  if (!(bandwidth > 0.0)) throw DomainError("mmd: bandwidth must be > 0");
  if (a.rows() < 2 || b.rows() < 2) throw DomainError("mmd: unbiased estimator needs at least 2 samples per set");
  std::vector<std::size_t> ia(a.rows()), ib(b.rows());
  std::iota(ia.begin(), ia.end(), 0);
  std::iota(ib.begin(), ib.end(), 0);
  return mmd_with_rows(a, ia, b, ib, bandwidth);
}

double mmd_bootstrap_se(const Tensor& a, const Tensor& b, double bandwidth, int reps, std::uint64_t seed) {
  if (reps < 2) throw DomainError("mmd_bootstrap_se: need at least 2 replicates");
  Rng rng(seed);
  std::vector<double> values;
  const std::size_t n = a.rows();
  const std::size_t m = b.rows();
  const bool paired = n == m;
  for (int k = 0; k < reps; ++k) {
    std::vector<std::size_t> ia(n), ib(m);
    for (std::size_t i = 0; i < n; ++i) ia[i] = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(n) - 1));
    if (paired) {
      ib = ia;
    } else {
      for (std::size_t i = 0; i < m; ++i) ib[i] = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(m) - 1));
    }
    values.push_back(mmd_with_rows(a, ia, b, ib, bandwidth));
  }
  const double mu = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(reps);
  double var = 0.0;
  for (double v : values) var += (v - mu) * (v - mu);
  return std::sqrt(var / static_cast<double>(reps - 1));
}

double mode_alignment(const Tensor& samples, std::span<const int> labels, const MixtureSpec& mixture) {
  check_matrix("mode_alignment", samples);
  if (labels.size() != samples.rows()) throw ShapeError("mode_alignment: one label per sample required");
  if (mixture.means.cols() != samples.cols()) throw ShapeError("mode_alignment: mixture dimension differs");
  const std::size_t k = mixture.components();
  std::size_t hits = 0;
  for (std::size_t r = 0; r < samples.rows(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) {
      throw DomainError("mode_alignment: unknown label " + std::to_string(labels[r]));
    }
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < samples.cols(); ++j) {
        const double diff = samples.at(r, j) - mixture.means.at(c, j);
        d2 += diff * diff;
      }
      if (d2 < best_d) {
        best_d = d2;
        best = c;
      }
    }
    if (best == static_cast<std::size_t>(labels[r])) ++hits;
  }
  return samples.rows() ? static_cast<double>(hits) / static_cast<double>(samples.rows()) : 0.0;
}

namespace {

Mat checked_cov(std::span<const double> mean, const Tensor& cov) {
  const std::size_t d = mean.empty() ? cov.rows() : mean.size();
  if (cov.shape() != Shape{d, d}) throw ShapeError("leakage: covariance must be d x d");
  const Mat c = to_eigen(cov);
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw DomainError("leakage: covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> eig(c, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-12) throw DomainError("leakage: covariance is not positive semi-definite");
  return c;
}

}  // namespace

double leakage_kl(const NoiseSchedule& s, std::span<const double> data_mean, const Tensor& data_cov, int t) {
  s.check_step(t);
  const Mat c = checked_cov(data_mean, data_cov);
  const auto d = static_cast<Eigen::Index>(data_mean.size());
  const double ab = s.alpha_bar(t);
  const Mat cov_t = ab * c + (1.0 - ab) * Mat::Identity(d, d);
  double mu2 = 0.0;
  for (double m : data_mean) mu2 += ab * m * m;
  Eigen::SelfAdjointEigenSolver<Mat> eig(cov_t, Eigen::EigenvaluesOnly);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) logdet += std::log(eig.eigenvalues()(i));
  return 0.5 * (cov_t.trace() + mu2 - static_cast<double>(d) - logdet);
}

double leakage_mutual_information(const NoiseSchedule& s, const Tensor& data_cov, int t) {
  s.check_step(t);
  const Mat c = checked_cov({}, data_cov);
  const double ab = s.alpha_bar(t);
  Eigen::SelfAdjointEigenSolver<Mat> eig(c, Eigen::EigenvaluesOnly);
  double mi = 0.0;
  for (Eigen::Index i = 0; i < c.rows(); ++i) mi += 0.5 * std::log1p(ab / (1.0 - ab) * std::max(eig.eigenvalues()(i), 0.0));
  return mi;
}

double GapReport::mean_teacher_forced() const {
  if (teacher_forced.empty()) return 0.0;
  return std::accumulate(teacher_forced.begin(), teacher_forced.end(), 0.0) /
         static_cast<double>(teacher_forced.size());
}

GapReport gap_probe(const EpsilonPredictor& predict, const NoiseSchedule& s, const Tensor& data,
                    std::span<const int> step_list, std::uint64_t seed) {
  check_matrix("gap_probe", data);
  if (step_list.empty()) throw DomainError("gap_probe: empty step list");
  Rng rng(seed);
  GapReport rep;
  rep.steps.assign(step_list.begin(), step_list.end());
  rep.n = data.rows();
  for (std::size_t i = 0; i < step_list.size(); ++i) {
    const int t = step_list[i];
    const int t_prev = i + 1 < step_list.size() ? step_list[i + 1] : 0;
    const Tensor x_t = forward_noise(s, data, t, rng.normal_tensor(data.shape()));
    Tensor xi;
    if (t_prev > 0) xi = rng.normal_tensor(data.shape());
    const Tensor stepped = ancestral_update(s, x_t, predict(x_t, t), t, t_prev, t_prev > 0 ? &xi : nullptr);
    const Tensor truth = t_prev > 0 ? forward_noise(s, data, t_prev, rng.normal_tensor(data.shape())) : data;
    rep.teacher_forced.push_back(frechet_distance(stepped, truth));
  }
  const Trajectory roll = sample_baseline(predict, s, step_list, data.rows(), data.cols(), rng);
  rep.rollout = frechet_distance(roll.final, data);
  rep.gap = rep.rollout - rep.mean_teacher_forced();
  return rep;
}

GapReport gap_probe(const Denoiser& model, const NoiseSchedule& s, const Tensor& data, std::span<const int> labels,
                    std::span<const int> step_list, std::uint64_t seed) {
  if (labels.size() != data.rows()) throw ShapeError("gap_probe: one label per data row required");
  return gap_probe(epsilon_predictor(model, {labels.begin(), labels.end()}), s, data, step_list, seed);
}

}  // namespace trajdiff
