#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "streamrec/param_store.hpp"
#include "streamrec/tensor.hpp"

namespace streamrec {

enum class OptimizerMode { kAdam, kSgd };

struct OptimizerConfig {
  OptimizerMode mode = OptimizerMode::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive-moment optimizer with a plain gradient-descent fallback.
// Parameters absent from the GradStore are left untouched. Rank-2 table
// parameters with a touched-row list get row-sparse updates: moments and
// values move only on the listed rows, so idle entities stay bitwise
// unchanged. Non-finite gradients skip that parameter's update and bump a
// warning counter.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  void step(ParamStore& params, const GradStore& grads);

  const OptimizerConfig& config() const { return cfg_; }
  std::uint64_t step_count() const { return t_; }
  std::uint64_t nonfinite_skips() const { return skips_; }

  // Checkpoint access to the raw state.
  std::uint64_t& mutable_step_count() { return t_; }
  std::uint64_t& mutable_nonfinite_skips() { return skips_; }
  std::map<std::string, Tensor>& first_moments() { return m_; }
  std::map<std::string, Tensor>& second_moments() { return v_; }
  const std::map<std::string, Tensor>& first_moments() const { return m_; }
  const std::map<std::string, Tensor>& second_moments() const { return v_; }

 private:
  void update_range(Tensor& p, const Tensor& g, Tensor& m, Tensor& v,
                    std::size_t begin, std::size_t end, double bc1, double bc2);

  OptimizerConfig cfg_;
  std::uint64_t t_ = 0;
  std::uint64_t skips_ = 0;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

}  // namespace streamrec
