#pragma once

#include <span>
#include <string>
#include <vector>

#include "streamrec/param_store.hpp"
#include "streamrec/rng.hpp"
#include "streamrec/tape.hpp"
#include "streamrec/tensor.hpp"

namespace streamrec {

enum class Activation { kTanh, kSigmoid, kSoftplus };

// One layer of a feed-forward chain. Kinds beyond affine/activation consume
// one auxiliary input each, supplied to apply() in layer order: concat
// appends the auxiliary vector, elementwise-product multiplies by it, and
// gru-cell treats the chain value as x and the auxiliary as the previous
// hidden state.
struct LayerSpec {
  enum class Kind { kAffine, kActivation, kConcat, kElementwiseProduct, kGruCell };

  Kind kind = Kind::kAffine;
  std::size_t in_width = 0;
  std::size_t out_width = 0;
  std::size_t aux_width = 0;
  Activation activation = Activation::kTanh;

  static LayerSpec affine(std::size_t in, std::size_t out);
  static LayerSpec activation_layer(Activation a, std::size_t width);
  static LayerSpec concat(std::size_t in, std::size_t aux);
  static LayerSpec elementwise_product(std::size_t width);
  static LayerSpec gru_cell(std::size_t hidden, std::size_t input);

  bool has_params() const { return kind == Kind::kAffine || kind == Kind::kGruCell; }
  bool needs_aux() const {
    return kind == Kind::kConcat || kind == Kind::kElementwiseProduct ||
           kind == Kind::kGruCell;
  }
  // Throws ConfigError naming `where` if the widths are inconsistent.
  void validate(const std::string& where) const;
};

// Feed-forward network over an ordered LayerSpec list. Parameters live in a
// ParamStore under "<name>.L<k>.<part>" keys.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string name, std::vector<LayerSpec> spec);

  // Glorot-uniform weights, zero biases. `zero_weights` zeroes everything,
  // which reduces the network to a constant-zero map.
  void init_params(ParamStore& store, Rng& rng, bool zero_weights = false) const;

  NodeRef apply(Tape& tape, ParamNodes& params, NodeRef input,
                std::span<const NodeRef> aux = {}) const;
  // Value-only forward. Shares the tape kernels, so results are bit-identical
  // to apply().
  Tensor eval(const ParamStore& store, const Tensor& input,
              std::span<const Tensor> aux = {}) const;

  std::size_t in_width() const;
  std::size_t out_width() const;
  const std::vector<LayerSpec>& layers() const { return spec_; }
  const std::string& name() const { return name_; }
  std::vector<std::string> param_names() const;

 private:
  std::string name_;
  std::vector<LayerSpec> spec_;
};

// GRU cell with the gate convention
//   z = sigmoid(Wz [h,x] + bz)
//   r = sigmoid(Wr [h,x] + br)
//   hcand = tanh(Wh [r*h, x] + bh)
//   h' = (1-z)*h + z*hcand
// Parameters: "<name>.Wz/.bz/.Wr/.br/.Wh/.bh".
class GruCell {
 public:
  GruCell() = default;
  GruCell(std::string name, std::size_t hidden, std::size_t input);

  void init_params(ParamStore& store, Rng& rng) const;
  NodeRef step(Tape& tape, ParamNodes& params, NodeRef h_prev, NodeRef x) const;
  Tensor eval(const ParamStore& store, const Tensor& h_prev, const Tensor& x) const;

  std::size_t hidden_width() const { return hidden_; }
  std::size_t input_width() const { return input_; }
  std::vector<std::string> param_names() const;

 private:
  std::string name_;
  std::size_t hidden_ = 0;
  std::size_t input_ = 0;
};

// Convenience entry points mirroring the module surface.
std::pair<Tensor, Tape> mlp_apply(const Mlp& net, const ParamStore& store,
                                  const Tensor& input);
Tensor gru_cell_step(const GruCell& cell, const ParamStore& store,
                     const Tensor& h_prev, const Tensor& x);

// Uniform in +-sqrt(6/(fan_in+fan_out)).
Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace streamrec
