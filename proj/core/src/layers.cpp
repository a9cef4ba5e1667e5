#include "streamrec/layers.hpp"

#include "streamrec/errors.hpp"

namespace streamrec {

LayerSpec LayerSpec::affine(std::size_t in, std::size_t out) {
  LayerSpec s;
  s.kind = Kind::kAffine;
  s.in_width = in;
  s.out_width = out;
  return s;
}

LayerSpec LayerSpec::activation_layer(Activation a, std::size_t width) {
  LayerSpec s;
  s.kind = Kind::kActivation;
  s.in_width = width;
  s.out_width = width;
  s.activation = a;
  return s;
}

LayerSpec LayerSpec::concat(std::size_t in, std::size_t aux) {
  LayerSpec s;
  s.kind = Kind::kConcat;
  s.in_width = in;
  s.aux_width = aux;
  s.out_width = in + aux;
  return s;
}

LayerSpec LayerSpec::elementwise_product(std::size_t width) {
  LayerSpec s;
  s.kind = Kind::kElementwiseProduct;
  s.in_width = width;
  s.aux_width = width;
  s.out_width = width;
  return s;
}

LayerSpec LayerSpec::gru_cell(std::size_t hidden, std::size_t input) {
  LayerSpec s;
  s.kind = Kind::kGruCell;
  s.in_width = input;
  s.aux_width = hidden;
  s.out_width = hidden;
  return s;
}

void LayerSpec::validate(const std::string& where) const {
  auto fail = [&](const std::string& why) {
    throw ConfigError(where + ": " + why);
  };
  if (in_width == 0 || out_width == 0) fail("zero width");
  switch (kind) {
    case Kind::kAffine:
      if (aux_width != 0) fail("affine layer takes no auxiliary input");
      break;
    case Kind::kActivation:
      if (in_width != out_width) fail("activation must preserve width");
      if (aux_width != 0) fail("activation takes no auxiliary input");
      break;
    case Kind::kConcat:
      if (out_width != in_width + aux_width) fail("concat width mismatch");
      if (aux_width == 0) fail("concat needs an auxiliary input");
      break;
    case Kind::kElementwiseProduct:
      if (in_width != out_width || aux_width != in_width)
        fail("elementwise-product requires equal widths");
      break;
    case Kind::kGruCell:
      if (out_width != aux_width) fail("gru-cell output must be hidden width");
      break;
  }
}

namespace {

std::string layer_key(const std::string& name, std::size_t k, const char* part) {
  return name + ".L" + std::to_string(k) + "." + part;
}

}  // namespace

Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor w = Tensor::zeros({rows, cols});
  const double bound = std::sqrt(6.0 / double(rows + cols));
  for (double& v : w.data) v = rng.uniform(-bound, bound);
  return w;
}

Mlp::Mlp(std::string name, std::vector<LayerSpec> spec)
    : name_(std::move(name)), spec_(std::move(spec)) {
  if (spec_.empty()) throw ConfigError(name_ + ": empty layer list");
  std::size_t width = spec_.front().in_width;
  for (std::size_t k = 0; k < spec_.size(); ++k) {
    const LayerSpec& l = spec_[k];
    l.validate(name_ + ".L" + std::to_string(k));
    if (l.in_width != width)
      throw ConfigError(name_ + ".L" + std::to_string(k) +
                        ": input width " + std::to_string(l.in_width) +
                        " does not match chain width " + std::to_string(width));
    width = l.out_width;
  }
}

void Mlp::init_params(ParamStore& store, Rng& rng, bool zero_weights) const {
  for (std::size_t k = 0; k < spec_.size(); ++k) {
    const LayerSpec& l = spec_[k];
    if (l.kind == LayerSpec::Kind::kAffine) {
      Tensor w = zero_weights ? Tensor::zeros({l.out_width, l.in_width})
                              : glorot_uniform(l.out_width, l.in_width, rng);
      store.create(layer_key(name_, k, "W"), std::move(w));
      store.create(layer_key(name_, k, "b"), Tensor::zeros({l.out_width}));
    } else if (l.kind == LayerSpec::Kind::kGruCell) {
      GruCell(layer_key(name_, k, "gru"), l.aux_width, l.in_width)
          .init_params(store, rng);
    }
  }
}

NodeRef Mlp::apply(Tape& tape, ParamNodes& params, NodeRef input,
                   std::span<const NodeRef> aux) const {
  NodeRef cur = input;
  std::size_t aux_used = 0;
  for (std::size_t k = 0; k < spec_.size(); ++k) {
    const LayerSpec& l = spec_[k];
    const std::string where = name_ + ".L" + std::to_string(k);
    if (tape.value(cur).size() != l.in_width)
      throw ConfigError(where + ": expected input width " +
                        std::to_string(l.in_width) + ", got " +
                        std::to_string(tape.value(cur).size()));
    NodeRef aux_node;
    if (l.needs_aux()) {
      if (aux_used >= aux.size())
        throw ConfigError(where + ": missing auxiliary input");
      aux_node = aux[aux_used++];
      if (tape.value(aux_node).size() != l.aux_width)
        throw ConfigError(where + ": auxiliary width mismatch");
    }
    switch (l.kind) {
      case LayerSpec::Kind::kAffine:
        cur = tape.add(tape.matvec(params.node(layer_key(name_, k, "W")), cur),
                       params.node(layer_key(name_, k, "b")));
        break;
      case LayerSpec::Kind::kActivation:
        switch (l.activation) {
          case Activation::kTanh: cur = tape.tanh(cur); break;
          case Activation::kSigmoid: cur = tape.sigmoid(cur); break;
          case Activation::kSoftplus: cur = tape.softplus(cur); break;
        }
        break;
      case LayerSpec::Kind::kConcat:
        cur = tape.concat(cur, aux_node);
        break;
      case LayerSpec::Kind::kElementwiseProduct:
        cur = tape.mul(cur, aux_node);
        break;
      case LayerSpec::Kind::kGruCell:
        cur = GruCell(layer_key(name_, k, "gru"), l.aux_width, l.in_width)
                  .step(tape, params, aux_node, cur);
        break;
    }
  }
  return cur;
}

Tensor Mlp::eval(const ParamStore& store, const Tensor& input,
                 std::span<const Tensor> aux) const {
  Tape tape;
  ParamNodes params(tape, store);
  std::vector<NodeRef> aux_nodes;
  aux_nodes.reserve(aux.size());
  for (const Tensor& t : aux) aux_nodes.push_back(tape.constant(t));
  NodeRef out = apply(tape, params, tape.constant(input), aux_nodes);
  return tape.value(out);
}

std::size_t Mlp::in_width() const { return spec_.front().in_width; }
std::size_t Mlp::out_width() const { return spec_.back().out_width; }

std::vector<std::string> Mlp::param_names() const {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < spec_.size(); ++k) {
    const LayerSpec& l = spec_[k];
    if (l.kind == LayerSpec::Kind::kAffine) {
      names.push_back(layer_key(name_, k, "W"));
      names.push_back(layer_key(name_, k, "b"));
    } else if (l.kind == LayerSpec::Kind::kGruCell) {
      auto sub = GruCell(layer_key(name_, k, "gru"), l.aux_width, l.in_width)
                     .param_names();
      names.insert(names.end(), sub.begin(), sub.end());
    }
  }
  return names;
}

std::pair<Tensor, Tape> mlp_apply(const Mlp& net, const ParamStore& store,
                                  const Tensor& input) {
  Tape tape;
  ParamNodes params(tape, store);
  NodeRef out = net.apply(tape, params, tape.constant(input));
  Tensor value = tape.value(out);
  return {std::move(value), std::move(tape)};
}

GruCell::GruCell(std::string name, std::size_t hidden, std::size_t input)
    : name_(std::move(name)), hidden_(hidden), input_(input) {
  if (hidden_ == 0 || input_ == 0)
    throw ConfigError(name_ + ": zero gru width");
}

void GruCell::init_params(ParamStore& store, Rng& rng) const {
  const std::size_t in = hidden_ + input_;
  for (const char* gate : {"z", "r", "h"}) {
    store.create(name_ + ".W" + gate, glorot_uniform(hidden_, in, rng));
    store.create(name_ + ".b" + gate, Tensor::zeros({hidden_}));
  }
}

NodeRef GruCell::step(Tape& tape, ParamNodes& params, NodeRef h_prev,
                      NodeRef x) const {
  if (tape.value(h_prev).size() != hidden_ || tape.value(x).size() != input_)
    throw ConfigError(name_ + ": gru width mismatch (h " +
                      std::to_string(tape.value(h_prev).size()) + ", x " +
                      std::to_string(tape.value(x).size()) + ")");
  NodeRef hx = tape.concat(h_prev, x);
  NodeRef z = tape.sigmoid(tape.add(
      tape.matvec(params.node(name_ + ".Wz"), hx), params.node(name_ + ".bz")));
  NodeRef r = tape.sigmoid(tape.add(
      tape.matvec(params.node(name_ + ".Wr"), hx), params.node(name_ + ".br")));
  NodeRef rh_x = tape.concat(tape.mul(r, h_prev), x);
  NodeRef hcand = tape.tanh(tape.add(
      tape.matvec(params.node(name_ + ".Wh"), rh_x), params.node(name_ + ".bh")));
  NodeRef ones = tape.constant(Tensor::full({hidden_}, 1.0));
  return tape.add(tape.mul(tape.sub(ones, z), h_prev), tape.mul(z, hcand));
}

Tensor GruCell::eval(const ParamStore& store, const Tensor& h_prev,
                     const Tensor& x) const {
  Tape tape;
  ParamNodes params(tape, store);
  NodeRef out = step(tape, params, tape.constant(h_prev), tape.constant(x));
  return tape.value(out);
}

std::vector<std::string> GruCell::param_names() const {
  return {name_ + ".Wz", name_ + ".bz", name_ + ".Wr",
          name_ + ".br", name_ + ".Wh", name_ + ".bh"};
}

Tensor gru_cell_step(const GruCell& cell, const ParamStore& store,
                     const Tensor& h_prev, const Tensor& x) {
  return cell.eval(store, h_prev, x);
}

}  // namespace streamrec
