#include "streamrec/optimizer.hpp"

#include <cmath>

#include "streamrec/errors.hpp"

namespace streamrec {
namespace {

// Grows a moment buffer when its table parameter gained rows. Existing rows
// keep their values; new rows start at zero.
void fit_moment(Tensor& mom, const Tensor& param) {
  if (mom.empty()) {
    mom = Tensor::zeros(param.shape);
    return;
  }
  if (mom.shape == param.shape) return;
  if (mom.shape.size() == 2 && param.shape.size() == 2 &&
      mom.cols() == param.cols() && param.rows() >= mom.rows()) {
    Tensor grown = Tensor::zeros(param.shape);
    std::copy(mom.data.begin(), mom.data.end(), grown.data.begin());
    mom = std::move(grown);
    return;
  }
  throw ShapeError("optimizer moment shape " + shape_str(mom.shape) +
                   " cannot track parameter " + shape_str(param.shape));
}

bool range_finite(const Tensor& g, std::size_t begin, std::size_t end) {
  for (std::size_t i = begin; i < end; ++i)
    if (!std::isfinite(g.data[i])) return false;
  return true;
}

}  // namespace

void Optimizer::update_range(Tensor& p, const Tensor& g, Tensor& m, Tensor& v,
                             std::size_t begin, std::size_t end, double bc1,
                             double bc2) {
  if (cfg_.mode == OptimizerMode::kSgd) {
    for (std::size_t i = begin; i < end; ++i)
      p.data[i] -= cfg_.learning_rate * g.data[i];
    return;
  }
  for (std::size_t i = begin; i < end; ++i) {
    m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * g.data[i];
    v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * g.data[i] * g.data[i];
    const double mhat = m.data[i] / bc1;
    const double vhat = v.data[i] / bc2;
    p.data[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
  }
}

void Optimizer::step(ParamStore& params, const GradStore& grads) {
  t_ += 1;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));

  for (const auto& [name, g] : grads.grads) {
    Tensor& p = params.get(name);
    if (!g.same_shape(p))
      throw ShapeError("gradient shape " + shape_str(g.shape) +
                       " does not match parameter " + name);
    Tensor& m = m_[name];
    Tensor& v = v_[name];
    if (cfg_.mode == OptimizerMode::kAdam) {
      fit_moment(m, p);
      fit_moment(v, p);
    }

    auto rows_it = grads.touched_rows.find(name);
    if (rows_it != grads.touched_rows.end() && p.shape.size() == 2) {
      const std::size_t d = p.cols();
      for (std::uint32_t r : rows_it->second) {
        const std::size_t begin = std::size_t(r) * d;
        if (!range_finite(g, begin, begin + d)) {
          skips_ += 1;
          continue;
        }
        update_range(p, g, m, v, begin, begin + d, bc1, bc2);
      }
    } else {
      if (!g.all_finite()) {
        skips_ += 1;
        continue;
      }
      update_range(p, g, m, v, 0, p.size(), bc1, bc2);
    }
  }
}

}  // namespace streamrec
