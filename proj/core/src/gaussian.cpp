#include "streamrec/gaussian.hpp"

#include <cmath>

#include "streamrec/errors.hpp"
#include "streamrec/rng.hpp"

namespace streamrec {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_dims(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw ShapeError(std::string(what) + ": dimension mismatch " +
                     std::to_string(a) + " vs " + std::to_string(b));
}

}  // namespace

DiagGaussian::DiagGaussian(Tensor mean_in, Tensor var_in)
    : mean(std::move(mean_in)), var(std::move(var_in)) {
  check_dims(mean.size(), var.size(), "DiagGaussian");
  for (double& v : var.data)
    if (v < kVarFloor) v = kVarFloor;
}

DiagGaussian DiagGaussian::standard(std::size_t dim) {
  return DiagGaussian(Tensor::zeros({dim}), Tensor::full({dim}, 1.0));
}

double log_density(const DiagGaussian& g, const Tensor& x) {
  check_dims(g.dim(), x.size(), "log_density");
  double s = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double diff = x.data[d] - g.mean.data[d];
    s += -0.5 * (kLog2Pi + std::log(g.var.data[d])) -
         diff * diff / (2.0 * g.var.data[d]);
  }
  return s;
}

double kl_divergence(const DiagGaussian& q, const DiagGaussian& p) {
  check_dims(q.dim(), p.dim(), "kl_divergence");
  double s = 0.0;
  for (std::size_t d = 0; d < q.dim(); ++d) {
    const double vq = q.var.data[d], vp = p.var.data[d];
    const double dm = p.mean.data[d] - q.mean.data[d];
    s += 0.5 * (vq / vp + dm * dm / vp - 1.0 + std::log(vp / vq));
  }
  return s;
}

Tensor sample_reparam(const DiagGaussian& g, const Tensor& noise) {
  check_dims(g.dim(), noise.size(), "sample_reparam");
  Tensor out = Tensor::zeros({g.dim()});
  for (std::size_t d = 0; d < g.dim(); ++d)
    out.data[d] = g.mean.data[d] + std::sqrt(g.var.data[d]) * noise.data[d];
  return out;
}

McKlEstimate mc_kl_estimate(const DiagGaussian& q, const DiagGaussian& p,
                            std::size_t n, std::uint64_t seed) {
  check_dims(q.dim(), p.dim(), "mc_kl_estimate");
  if (n == 0) throw ConfigError("mc_kl_estimate: n must be >= 1");
  Rng rng(seed);
  Tensor noise = Tensor::zeros({q.dim()});
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (double& e : noise.data) e = rng.gaussian();
    const Tensor s = sample_reparam(q, noise);
    const double term = log_density(q, s) - log_density(p, s);
    sum += term;
    sum_sq += term * term;
  }
  McKlEstimate est;
  est.mean = sum / double(n);
  const double var = std::max(0.0, sum_sq / double(n) - est.mean * est.mean);
  est.std_error = std::sqrt(var / double(n));
  return est;
}

double mc_kl_oracle(const DiagGaussian& q, const DiagGaussian& p,
                    std::size_t n, std::uint64_t seed) {
  return mc_kl_estimate(q, p, n, seed).mean;
}

NodeRef log_density_node(Tape& tape, const GaussianNodes& g, const Tensor& x) {
  const std::size_t d = tape.value(g.mean).size();
  check_dims(d, x.size(), "log_density_node");
  NodeRef xc = tape.constant(x);
  NodeRef diff = tape.sub(xc, g.mean);
  NodeRef quad = tape.div(tape.mul(diff, diff), g.var);
  NodeRef inner = tape.add(tape.log(g.var), quad);
  NodeRef total = tape.scale(tape.sum(inner), -0.5);
  return tape.add(total, tape.constant(Tensor{-0.5 * kLog2Pi * double(d)}));
}

NodeRef kl_node(Tape& tape, const GaussianNodes& q, const GaussianNodes& p) {
  const std::size_t d = tape.value(q.mean).size();
  check_dims(d, tape.value(p.mean).size(), "kl_node");
  NodeRef ratio = tape.div(q.var, p.var);
  NodeRef dm = tape.sub(p.mean, q.mean);
  NodeRef quad = tape.div(tape.mul(dm, dm), p.var);
  NodeRef logs = tape.sub(tape.log(p.var), tape.log(q.var));
  NodeRef inner = tape.add(tape.add(ratio, quad), logs);
  NodeRef summed = tape.sum(inner);
  NodeRef shifted = tape.add(summed, tape.constant(Tensor{-double(d)}));
  return tape.scale(shifted, 0.5);
}

NodeRef sample_reparam_node(Tape& tape, const GaussianNodes& g,
                            const Tensor& noise) {
  check_dims(tape.value(g.mean).size(), noise.size(), "sample_reparam_node");
  NodeRef eps = tape.constant(noise);
  return tape.add(g.mean, tape.mul(tape.sqrt(g.var), eps));
}

}  // namespace streamrec
