#pragma once

#include <functional>

#include "trajdiff/tensor.hpp"

namespace trajdiff {

using ScalarFn = std::function<double(const Tensor&)>;

// Central-difference gradient estimate, one coordinate at a time:
//   (f(x + h e_i) - f(x - h e_i)) / 2h
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double h = 1e-5);

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-6);

}  // namespace trajdiff
