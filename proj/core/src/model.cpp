#include "streamrec/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "streamrec/errors.hpp"
#include "streamrec/rng.hpp"

namespace streamrec {
namespace {

constexpr double kEnvFloor = 1e-4;
constexpr char kMagic[8] = {'S', 'R', 'E', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

double log1p_interval(double dtau_seconds, double unit) {
  return std::log1p(dtau_seconds / unit);
}

}  // namespace

std::uint32_t EntityRegistry::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ConfigError("unregistered entity: " + id);
  return it->second;
}

EntityState& EntityRegistry::append(const std::string& id) {
  auto [it, inserted] = index_.emplace(id, std::uint32_t(states_.size()));
  if (!inserted) throw ConfigError("entity already registered: " + id);
  ids_.push_back(id);
  states_.emplace_back();
  states_.back().index = it->second;
  return states_.back();
}

Tensor decay_hidden(const Tensor& h, double dtau_seconds, double lambda_seconds,
                    int sign) {
  if (!(lambda_seconds > 0.0))
    throw ConfigError("decay_hidden: lambda must be positive");
  if (dtau_seconds < 0.0)
    throw TimeOrderError("decay_hidden: negative interval");
  const double factor = std::exp(double(sign) * dtau_seconds / lambda_seconds);
  Tensor out = h;
  for (double& v : out.data) v *= factor;
  return out;
}

Tensor compose_factor(const Tensor& stationary, const Tensor& delta) {
  if (stationary.size() != delta.size())
    throw ShapeError("compose_factor: width mismatch " +
                     std::to_string(stationary.size()) + " vs " +
                     std::to_string(delta.size()));
  Tensor out = stationary;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += delta.data[i];
  return out;
}

Model::Model(ModelDims dims, ModelHyper hyper, OptimizerConfig opt,
             std::uint64_t seed, bool init_mlp_zero)
    : dims_(dims), hyper_(hyper), opt_(opt), seed_(seed) {
  if (dims_.d_s == 0 || dims_.d_h == 0 || dims_.d_emb == 0 ||
      dims_.mlp_hidden == 0)
    throw ConfigError("model dims must be positive");
  build_networks();
  init_network_params(init_mlp_zero);
}

void Model::build_networks() {
  const std::size_t df = dims_.d_s;
  const std::size_t hid = dims_.mlp_hidden;
  const std::size_t y_width = dims_.d_emb + 2;

  auto scalar_net = [&](const std::string& name, std::size_t in) {
    return Mlp(name, {LayerSpec::affine(in, hid),
                      LayerSpec::activation_layer(Activation::kTanh, hid),
                      LayerSpec::affine(hid, 1)});
  };
  f1_ = scalar_net("f1", 3 * df);
  f2_ = scalar_net("f2", 3 * df);
  noise_ = scalar_net("noise", 2 * dims_.d_h);

  auto make_chain = [&](const std::string& prefix) {
    Chain c;
    auto vec_net = [&](const std::string& name, std::size_t in) {
      return Mlp(name, {LayerSpec::affine(in, hid),
                        LayerSpec::activation_layer(Activation::kTanh, hid),
                        LayerSpec::affine(hid, df)});
    };
    c.f3 = vec_net(prefix + ".f3", dims_.d_h + 1);
    c.f4 = vec_net(prefix + ".f4", dims_.d_h + 1);
    c.f5_trunk = Mlp(prefix + ".f5.trunk",
                     {LayerSpec::affine(dims_.d_h + y_width, hid),
                      LayerSpec::activation_layer(Activation::kTanh, hid)});
    c.f5_mean = Mlp(prefix + ".f5.mean", {LayerSpec::affine(hid, df)});
    c.f5_var = Mlp(prefix + ".f5.var", {LayerSpec::affine(hid, df)});
    c.gru = GruCell(prefix + ".gru", dims_.d_h, y_width);
    return c;
  };
  user_chain_ = make_chain("u");
  item_chain_ = make_chain("v");
}

void Model::init_network_params(bool zero_mlp) {
  Rng rng(mix_seed(seed_, 0x6e657473ULL));  // network-init stream
  f1_.init_params(params_, rng, zero_mlp);
  f2_.init_params(params_, rng, zero_mlp);
  noise_.init_params(params_, rng, zero_mlp);
  for (const Chain* c : {&user_chain_, &item_chain_}) {
    c->f3.init_params(params_, rng, zero_mlp);
    c->f4.init_params(params_, rng, zero_mlp);
    c->f5_trunk.init_params(params_, rng, zero_mlp);
    c->f5_mean.init_params(params_, rng, zero_mlp);
    c->f5_var.init_params(params_, rng, zero_mlp);
    c->gru.init_params(params_, rng);
  }
  params_.create("f1.b0", Tensor{0.0});
  params_.create("u.stationary", Tensor::zeros({0, dims_.d_s}));
  params_.create("v.stationary", Tensor::zeros({0, dims_.d_s}));
  params_.create("u.embed", Tensor::zeros({0, dims_.d_emb}));
  params_.create("v.embed", Tensor::zeros({0, dims_.d_emb}));
}

std::string Model::embed_table_name(EntityKind chain) const {
  return chain == EntityKind::kUser ? "u.embed" : "v.embed";
}

std::string Model::stationary_table_name(EntityKind kind) const {
  return kind == EntityKind::kUser ? "u.stationary" : "v.stationary";
}

void Model::grow_table(const std::string& name, std::size_t needed_rows) {
  Tensor& t = params_.get(name);
  if (t.shape.size() != 2) throw ShapeError(name + " is not a table");
  if (t.rows() >= needed_rows) return;
  std::size_t cap = t.rows() == 0 ? 16 : t.rows() * 2;
  while (cap < needed_rows) cap *= 2;
  Tensor grown = Tensor::zeros({cap, t.cols()});
  std::copy(t.data.begin(), t.data.end(), grown.data.begin());
  t = std::move(grown);
}

EntityRegistry& Model::registry(EntityKind kind) {
  return kind == EntityKind::kUser ? users_ : items_;
}

const EntityRegistry& Model::registry(EntityKind kind) const {
  return kind == EntityKind::kUser ? users_ : items_;
}

bool Model::is_registered(const std::string& id, EntityKind kind) const {
  return registry(kind).contains(id);
}

std::uint32_t Model::index_of(const std::string& id, EntityKind kind) const {
  return registry(kind).index_of(id);
}

EntityState& Model::register_entity(const std::string& id, EntityKind kind) {
  EntityRegistry& reg = registry(kind);
  if (reg.contains(id)) throw ConfigError("entity already registered: " + id);
  const std::uint32_t idx = std::uint32_t(reg.size());

  const std::string stat_name = stationary_table_name(kind);
  // The opposite chain embeds this entity's ratings in its inputs.
  const std::string embed_name =
      kind == EntityKind::kUser ? "v.embed" : "u.embed";
  grow_table(stat_name, idx + 1);
  grow_table(embed_name, idx + 1);

  Rng rng(mix_seed(seed_, kind == EntityKind::kUser ? 1 : 2, idx));
  Tensor& stat = params_.get(stat_name);
  for (std::size_t c = 0; c < dims_.d_s; ++c)
    stat.at(idx, c) = 0.01 * rng.gaussian();
  Tensor& emb = params_.get(embed_name);
  for (std::size_t c = 0; c < dims_.d_emb; ++c)
    emb.at(idx, c) = 0.01 * rng.gaussian();

  EntityState& st = reg.append(id);
  st.hidden = Tensor::zeros({dims_.d_h});
  st.init_prior = DiagGaussian::standard(dims_.d_s);
  return st;
}

GaussianNodes Model::mean_var_heads(Tape& t, ParamNodes& p, const Mlp& mean_net,
                                    const Mlp& var_net, NodeRef input) const {
  GaussianNodes g;
  g.mean = mean_net.apply(t, p, input);
  NodeRef pre = var_net.apply(t, p, input);
  g.var = t.add(t.softplus(pre),
                t.constant(Tensor::full({dims_.d_s}, DiagGaussian::kVarFloor)));
  return g;
}

NodeRef Model::interaction_mean_node(Tape& t, ParamNodes& p, NodeRef u,
                                     NodeRef v) const {
  if (t.value(u).size() != dims_.d_s || t.value(v).size() != dims_.d_s)
    throw ShapeError("interaction_mean: factor width mismatch");
  NodeRef in = t.concat(t.concat(u, v), t.mul(u, v));
  NodeRef residual = f1_.apply(t, p, in);
  return t.add(t.add(t.dot(u, v), p.node("f1.b0")), residual);
}

NodeRef Model::interaction_var_node(Tape& t, ParamNodes& p, NodeRef u, NodeRef v,
                                    NodeRef sigma2_env) const {
  if (t.value(u).size() != dims_.d_s || t.value(v).size() != dims_.d_s)
    throw ShapeError("interaction_var: factor width mismatch");
  NodeRef in = t.concat(t.concat(u, v), t.mul(u, v));
  NodeRef pre = f2_.apply(t, p, in);
  return t.add(t.softplus(pre), sigma2_env);
}

NodeRef Model::env_noise_node(Tape& t, ParamNodes& p, NodeRef h_u,
                              NodeRef h_v) const {
  if (t.value(h_u).size() != dims_.d_h || t.value(h_v).size() != dims_.d_h)
    throw ShapeError("env_noise: hidden width mismatch");
  NodeRef pre = noise_.apply(t, p, t.concat(h_u, h_v));
  return t.add(t.softplus(pre), t.constant(Tensor{kEnvFloor}));
}

GaussianNodes Model::drift_prior_node(Tape& t, ParamNodes& p, NodeRef h,
                                      double dtau, EntityKind k) const {
  if (dtau < 0.0) throw TimeOrderError("drift_prior: negative interval");
  NodeRef in = t.concat(
      h, t.constant(Tensor{log1p_interval(dtau, hyper_.tau_unit_seconds)}));
  return mean_var_heads(t, p, chain(k).f4, chain(k).f3, in);
}

GaussianNodes Model::posterior_node(Tape& t, ParamNodes& p, NodeRef h, NodeRef y,
                                    EntityKind k) const {
  NodeRef trunk = chain(k).f5_trunk.apply(t, p, t.concat(h, y));
  return mean_var_heads(t, p, chain(k).f5_mean, chain(k).f5_var, trunk);
}

NodeRef Model::build_input_node(Tape& t, ParamNodes& p, EntityKind chain,
                                std::span<const std::uint32_t> counterpart_rows,
                                std::span<const double> ratings, double dtau,
                                bool is_new) const {
  if (dtau < 0.0) throw TimeOrderError("build_input: negative interval");
  const EntityRegistry& counterpart =
      chain == EntityKind::kUser ? items_ : users_;
  for (std::uint32_t r : counterpart_rows)
    if (r >= counterpart.size())
      throw ConfigError("build_input: unregistered counterpart row " +
                        std::to_string(r));
  NodeRef emb = t.rows_weighted_sum(
      p.node(embed_table_name(chain)),
      std::vector<std::uint32_t>(counterpart_rows.begin(), counterpart_rows.end()),
      std::vector<double>(ratings.begin(), ratings.end()));
  NodeRef tail =
      t.constant(Tensor{log1p_interval(dtau, hyper_.tau_unit_seconds),
                        is_new ? 1.0 : 0.0});
  return t.concat(emb, tail);
}

NodeRef Model::stationary_node(Tape& t, ParamNodes& p, EntityKind kind,
                               std::uint32_t idx) const {
  if (idx >= registry(kind).size())
    throw ConfigError("stationary_node: unregistered index " +
                      std::to_string(idx));
  return t.select_row(p.node(stationary_table_name(kind)), idx);
}

double Model::interaction_mean(const Tensor& u, const Tensor& v) const {
  Tape t;
  ParamNodes p(t, params_);
  return t.value(interaction_mean_node(t, p, t.constant(u), t.constant(v)))
      .scalar();
}

double Model::interaction_var(const Tensor& u, const Tensor& v,
                              double sigma2_env) const {
  if (!(sigma2_env > 0.0))
    throw ConfigError("interaction_var: sigma2_env must be positive");
  Tape t;
  ParamNodes p(t, params_);
  return t
      .value(interaction_var_node(t, p, t.constant(u), t.constant(v),
                                  t.constant(Tensor{sigma2_env})))
      .scalar();
}

double Model::env_noise(const Tensor& h_u, const Tensor& h_v) const {
  Tape t;
  ParamNodes p(t, params_);
  return t.value(env_noise_node(t, p, t.constant(h_u), t.constant(h_v)))
      .scalar();
}

DiagGaussian Model::drift_prior(const Tensor& h, double dtau,
                                EntityKind chain) const {
  Tape t;
  ParamNodes p(t, params_);
  GaussianNodes g = drift_prior_node(t, p, t.constant(h), dtau, chain);
  return DiagGaussian(t.value(g.mean), t.value(g.var));
}

DiagGaussian Model::posterior(const Tensor& h, const Tensor& y,
                              EntityKind chain) const {
  Tape t;
  ParamNodes p(t, params_);
  GaussianNodes g = posterior_node(t, p, t.constant(h), t.constant(y), chain);
  return DiagGaussian(t.value(g.mean), t.value(g.var));
}

Tensor Model::build_input(EntityKind chain,
                          std::span<const std::uint32_t> counterpart_rows,
                          std::span<const double> ratings, double dtau,
                          bool is_new) const {
  Tape t;
  ParamNodes p(t, params_);
  return t.value(
      build_input_node(t, p, chain, counterpart_rows, ratings, dtau, is_new));
}

Tensor Model::stationary(EntityKind kind, std::uint32_t idx) const {
  if (idx >= registry(kind).size())
    throw ConfigError("stationary: unregistered index " + std::to_string(idx));
  const Tensor& table = params_.get(stationary_table_name(kind));
  Tensor row = Tensor::zeros({dims_.d_s});
  for (std::size_t c = 0; c < dims_.d_s; ++c) row.data[c] = table.at(idx, c);
  return row;
}

Tensor Model::gru_advance(EntityKind chain_kind, const Tensor& h,
                          const Tensor& y) const {
  return chain(chain_kind).gru.eval(params_, h, y);
}

double Model::decay_lambda(EntityKind kind) const {
  return kind == EntityKind::kUser ? hyper_.lambda_u_seconds
                                   : hyper_.lambda_v_seconds;
}

DiagGaussian Model::current_prior(EntityKind kind, const EntityState& st,
                                  double dtau) const {
  if (!st.has_committed) return st.init_prior;
  Tensor h =
      decay_hidden(st.hidden, dtau, decay_lambda(kind), hyper_.decay_sign);
  return drift_prior(h, dtau, kind);
}

double Model::entity_dtau_at(const EntityState& st, std::int64_t at_time) const {
  if (st.last_event_time == kNeverTime) return 0.0;
  return at_time > st.last_event_time ? double(at_time - st.last_event_time)
                                      : 0.0;
}

Prediction Model::predict(const std::string& user_id, const std::string& item_id,
                          std::int64_t at_time) const {
  if (!users_.contains(user_id))
    throw ColdEntityError("cold user: " + user_id);
  if (!items_.contains(item_id))
    throw ColdEntityError("cold item: " + item_id);
  const EntityState& su = users_.state(users_.index_of(user_id));
  const EntityState& sv = items_.state(items_.index_of(item_id));

  Tensor eu = stationary(EntityKind::kUser, su.index);
  Tensor ev = stationary(EntityKind::kItem, sv.index);
  if (!hyper_.dynamics_off) {
    eu = compose_factor(
        eu, current_prior(EntityKind::kUser, su, entity_dtau_at(su, at_time)).mean);
    ev = compose_factor(
        ev, current_prior(EntityKind::kItem, sv, entity_dtau_at(sv, at_time)).mean);
  }
  Prediction out;
  out.mean = interaction_mean(eu, ev);
  out.variance = interaction_var(eu, ev, env_noise(su.hidden, sv.hidden));
  return out;
}

void Model::record_snapshot(std::size_t step_index, std::int64_t t_start) {
  FactorSnapshot snap;
  snap.step_index = step_index;
  snap.t_start = t_start;
  for (std::uint32_t i = 0; i < users_.size(); ++i) {
    const EntityState& st = users_.state(i);
    if (st.snap_location.empty()) continue;
    snap.user_index.push_back(i);
    snap.user_location.push_back(st.snap_location);
    snap.user_sigma.push_back(st.snap_sigma);
  }
  for (std::uint32_t i = 0; i < items_.size(); ++i) {
    const EntityState& st = items_.state(i);
    if (st.snap_location.empty()) continue;
    snap.item_index.push_back(i);
    snap.item_location.push_back(st.snap_location);
    snap.item_sigma.push_back(st.snap_sigma);
  }
  snapshots_.push_back(std::move(snap));
}

// ---------------------------------------------------------------------------
// Checkpoint format (native-endian binary, documented in the README):
//   magic "SRECKPT1", u32 version,
//   dims, hyper, optimizer config/state, seed, trained_until,
//   parameter table (entity tables trimmed to their registered rows),
//   optimizer moments, registries with per-entity state, factor snapshots.
// ---------------------------------------------------------------------------
namespace {

void w_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), std::streamsize(n));
}
void w_u8(std::ostream& os, std::uint8_t v) { w_bytes(os, &v, 1); }
void w_u32(std::ostream& os, std::uint32_t v) { w_bytes(os, &v, 4); }
void w_u64(std::ostream& os, std::uint64_t v) { w_bytes(os, &v, 8); }
void w_i64(std::ostream& os, std::int64_t v) { w_bytes(os, &v, 8); }
void w_f64(std::ostream& os, double v) { w_bytes(os, &v, 8); }
void w_str(std::ostream& os, const std::string& s) {
  w_u64(os, s.size());
  w_bytes(os, s.data(), s.size());
}
void w_tensor(std::ostream& os, const Tensor& t) {
  w_u32(os, std::uint32_t(t.shape.size()));
  for (std::size_t e : t.shape) w_u64(os, e);
  w_bytes(os, t.data.data(), t.data.size() * sizeof(double));
}

void r_bytes(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), std::streamsize(n));
  if (!is) throw DataError("checkpoint: truncated");
}
std::uint8_t r_u8(std::istream& is) { std::uint8_t v; r_bytes(is, &v, 1); return v; }
std::uint32_t r_u32(std::istream& is) { std::uint32_t v; r_bytes(is, &v, 4); return v; }
std::uint64_t r_u64(std::istream& is) { std::uint64_t v; r_bytes(is, &v, 8); return v; }
std::int64_t r_i64(std::istream& is) { std::int64_t v; r_bytes(is, &v, 8); return v; }
double r_f64(std::istream& is) { double v; r_bytes(is, &v, 8); return v; }
std::string r_str(std::istream& is) {
  std::string s(r_u64(is), '\0');
  r_bytes(is, s.data(), s.size());
  return s;
}
Tensor r_tensor(std::istream& is) {
  Tensor t;
  const std::uint32_t rank = r_u32(is);
  t.shape.resize(rank);
  for (auto& e : t.shape) e = r_u64(is);
  t.data.resize(shape_size(t.shape));
  r_bytes(is, t.data.data(), t.data.size() * sizeof(double));
  return t;
}

Tensor trim_rows(const Tensor& t, std::size_t rows) {
  Tensor out = Tensor::zeros({rows, t.cols()});
  std::copy(t.data.begin(), t.data.begin() + std::ptrdiff_t(rows * t.cols()),
            out.data.begin());
  return out;
}

}  // namespace

void Model::serialize(std::ostream& os) const {
  w_bytes(os, kMagic, 8);
  w_u32(os, kCheckpointVersion);
  w_u64(os, dims_.d_s);
  w_u64(os, dims_.d_h);
  w_u64(os, dims_.d_emb);
  w_u64(os, dims_.mlp_hidden);
  w_f64(os, hyper_.sigma_u);
  w_f64(os, hyper_.sigma_v);
  w_f64(os, hyper_.lambda_u_seconds);
  w_f64(os, hyper_.lambda_v_seconds);
  w_u32(os, std::uint32_t(hyper_.decay_sign == 1 ? 1 : 0));
  w_u8(os, hyper_.stop_prior_grad);
  w_u8(os, hyper_.dynamics_off);
  w_u8(os, hyper_.record_factors);
  w_f64(os, hyper_.tau_unit_seconds);
  const OptimizerConfig& oc = opt_.config();
  w_u8(os, oc.mode == OptimizerMode::kAdam ? 0 : 1);
  w_f64(os, oc.learning_rate);
  w_f64(os, oc.beta1);
  w_f64(os, oc.beta2);
  w_f64(os, oc.epsilon);
  w_u64(os, opt_.step_count());
  w_u64(os, opt_.nonfinite_skips());
  w_u64(os, seed_);
  w_i64(os, trained_until_);

  auto table_rows = [&](const std::string& name) -> std::size_t {
    if (name == "u.stationary" || name == "v.embed") return users_.size();
    if (name == "v.stationary" || name == "u.embed") return items_.size();
    return SIZE_MAX;
  };
  auto write_param_map = [&](const std::map<std::string, Tensor>& m) {
    w_u64(os, m.size());
    for (const auto& [name, t] : m) {
      w_str(os, name);
      const std::size_t rows = table_rows(name);
      if (rows != SIZE_MAX && t.shape.size() == 2 && t.rows() >= rows)
        w_tensor(os, trim_rows(t, rows));
      else
        w_tensor(os, t);
    }
  };
  std::map<std::string, Tensor> all;
  for (const auto& [name, t] : params_) all.emplace(name, t);
  write_param_map(all);
  write_param_map(opt_.first_moments());
  write_param_map(opt_.second_moments());

  auto write_registry = [&](const EntityRegistry& reg) {
    w_u64(os, reg.size());
    for (std::uint32_t i = 0; i < reg.size(); ++i) {
      const EntityState& st = reg.state(i);
      w_str(os, reg.id_of(i));
      w_tensor(os, st.hidden);
      w_tensor(os, st.init_prior.mean);
      w_tensor(os, st.init_prior.var);
      w_u8(os, st.has_committed);
      w_i64(os, st.last_event_time);
      w_u8(os, st.is_new);
      w_tensor(os, st.snap_location);
      w_tensor(os, st.snap_sigma);
    }
  };
  write_registry(users_);
  write_registry(items_);

  w_u64(os, snapshots_.size());
  for (const FactorSnapshot& s : snapshots_) {
    w_u64(os, s.step_index);
    w_i64(os, s.t_start);
    auto write_side = [&](const std::vector<std::uint32_t>& idx,
                          const std::vector<Tensor>& loc,
                          const std::vector<Tensor>& sig) {
      w_u64(os, idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) {
        w_u32(os, idx[k]);
        w_tensor(os, loc[k]);
        w_tensor(os, sig[k]);
      }
    };
    write_side(s.user_index, s.user_location, s.user_sigma);
    write_side(s.item_index, s.item_location, s.item_sigma);
  }
}

Model Model::deserialize(std::istream& is) {
  char magic[8];
  r_bytes(is, magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("checkpoint: bad magic");
  const std::uint32_t version = r_u32(is);
  if (version != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version " +
                    std::to_string(version));
  ModelDims dims;
  dims.d_s = r_u64(is);
  dims.d_h = r_u64(is);
  dims.d_emb = r_u64(is);
  dims.mlp_hidden = r_u64(is);
  ModelHyper hyper;
  hyper.sigma_u = r_f64(is);
  hyper.sigma_v = r_f64(is);
  hyper.lambda_u_seconds = r_f64(is);
  hyper.lambda_v_seconds = r_f64(is);
  hyper.decay_sign = r_u32(is) == 1 ? 1 : -1;
  hyper.stop_prior_grad = r_u8(is);
  hyper.dynamics_off = r_u8(is);
  hyper.record_factors = r_u8(is);
  hyper.tau_unit_seconds = r_f64(is);
  OptimizerConfig oc;
  oc.mode = r_u8(is) == 0 ? OptimizerMode::kAdam : OptimizerMode::kSgd;
  oc.learning_rate = r_f64(is);
  oc.beta1 = r_f64(is);
  oc.beta2 = r_f64(is);
  oc.epsilon = r_f64(is);
  const std::uint64_t opt_t = r_u64(is);
  const std::uint64_t opt_skips = r_u64(is);
  const std::uint64_t seed = r_u64(is);
  const std::int64_t trained_until = r_i64(is);

  Model m(dims, hyper, oc, seed);
  m.opt_.mutable_step_count() = opt_t;
  m.opt_.mutable_nonfinite_skips() = opt_skips;
  m.trained_until_ = trained_until;

  const std::uint64_t n_params = r_u64(is);
  for (std::uint64_t k = 0; k < n_params; ++k) {
    std::string name = r_str(is);
    m.params_.get(name) = r_tensor(is);
  }
  auto read_moments = [&](std::map<std::string, Tensor>& dst) {
    const std::uint64_t n = r_u64(is);
    for (std::uint64_t k = 0; k < n; ++k) {
      std::string name = r_str(is);
      dst[name] = r_tensor(is);
    }
  };
  read_moments(m.opt_.first_moments());
  read_moments(m.opt_.second_moments());

  auto read_registry = [&](EntityRegistry& reg) {
    const std::uint64_t n = r_u64(is);
    for (std::uint64_t k = 0; k < n; ++k) {
      std::string id = r_str(is);
      EntityState& st = reg.append(id);
      st.hidden = r_tensor(is);
      Tensor pm = r_tensor(is);
      Tensor pv = r_tensor(is);
      st.init_prior = DiagGaussian(std::move(pm), std::move(pv));
      st.has_committed = r_u8(is);
      st.last_event_time = r_i64(is);
      st.is_new = r_u8(is);
      st.snap_location = r_tensor(is);
      st.snap_sigma = r_tensor(is);
    }
  };
  read_registry(m.users_);
  read_registry(m.items_);

  const std::uint64_t n_snaps = r_u64(is);
  for (std::uint64_t k = 0; k < n_snaps; ++k) {
    FactorSnapshot s;
    s.step_index = r_u64(is);
    s.t_start = r_i64(is);
    auto read_side = [&](std::vector<std::uint32_t>& idx,
                         std::vector<Tensor>& loc, std::vector<Tensor>& sig) {
      const std::uint64_t n = r_u64(is);
      for (std::uint64_t j = 0; j < n; ++j) {
        idx.push_back(r_u32(is));
        loc.push_back(r_tensor(is));
        sig.push_back(r_tensor(is));
      }
    };
    read_side(s.user_index, s.user_location, s.user_sigma);
    read_side(s.item_index, s.item_location, s.item_sigma);
    m.snapshots_.push_back(std::move(s));
  }
  return m;
}

void Model::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint: " + path);
  serialize(os);
  if (!os) throw DataError("checkpoint write failed: " + path);
}

Model Model::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read checkpoint: " + path);
  return deserialize(is);
}

std::string Model::checkpoint_bytes() const {
  std::ostringstream os(std::ios::binary);
  serialize(os);
  return os.str();
}

}  // namespace streamrec
