#pragma once

#include <cstdint>

#include "streamrec/tape.hpp"
#include "streamrec/tensor.hpp"

namespace streamrec {

// Diagonal-covariance Gaussian. Variances are stored directly (not as
// log-variances) and floored at kVarFloor on construction; producers
// guarantee positivity via softplus, the floor is a backstop.
struct DiagGaussian {
  static constexpr double kVarFloor = 1e-8;

  Tensor mean;
  Tensor var;

  DiagGaussian() = default;
  DiagGaussian(Tensor mean, Tensor var);

  static DiagGaussian standard(std::size_t dim);

  std::size_t dim() const { return mean.size(); }
};

// sum_d [ -1/2 log(2 pi var_d) - (x_d - mean_d)^2 / (2 var_d) ]
double log_density(const DiagGaussian& g, const Tensor& x);

// KL(q || p) = sum_d 1/2 [ var_q/var_p + (mean_p - mean_q)^2/var_p - 1
//                          + log(var_p/var_q) ]
double kl_divergence(const DiagGaussian& q, const DiagGaussian& p);

// mean + sqrt(var) * noise, elementwise.
Tensor sample_reparam(const DiagGaussian& g, const Tensor& noise);

struct McKlEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// Monte-Carlo estimate of KL(q || p): average of log q(s) - log p(s) over
// n reparameterized draws s ~ q. Test oracle for the closed form.
McKlEstimate mc_kl_estimate(const DiagGaussian& q, const DiagGaussian& p,
                            std::size_t n, std::uint64_t seed);
double mc_kl_oracle(const DiagGaussian& q, const DiagGaussian& p,
                    std::size_t n, std::uint64_t seed);

// Tape-level builders. Mean/var enter as graph nodes; observations and noise
// are constants. Same formulas as the plain functions above.
struct GaussianNodes {
  NodeRef mean;
  NodeRef var;
};

NodeRef log_density_node(Tape& tape, const GaussianNodes& g, const Tensor& x);
NodeRef kl_node(Tape& tape, const GaussianNodes& q, const GaussianNodes& p);
NodeRef sample_reparam_node(Tape& tape, const GaussianNodes& g,
                            const Tensor& noise);

}  // namespace streamrec
