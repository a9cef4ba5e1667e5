#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "streamrec/gaussian.hpp"
#include "streamrec/layers.hpp"
#include "streamrec/optimizer.hpp"
#include "streamrec/param_store.hpp"
#include "streamrec/tape.hpp"
#include "streamrec/tensor.hpp"

namespace streamrec {

constexpr std::int64_t kNeverTime = -1;
constexpr std::int64_t kUntrained = INT64_MIN;

struct ModelDims {
  std::size_t d_s = 20;       // stationary width; dynamic mean width equals it
  std::size_t d_h = 20;       // recurrent hidden width
  std::size_t d_emb = 32;     // event-embedding width
  std::size_t mlp_hidden = 64;
};

struct ModelHyper {
  double sigma_u = 1.0;
  double sigma_v = 1.0;
  double lambda_u_seconds = 604800.0;        // 1 week
  double lambda_v_seconds = 4.0 * 604800.0;  // 4 weeks
  int decay_sign = -1;   // -1: h e^{-dt/lambda}; +1 exposes the growing variant
  bool stop_prior_grad = false;
  bool dynamics_off = false;
  bool record_factors = false;
  double tau_unit_seconds = 86400.0;  // intervals enter networks as log1p(dt/unit)
};

enum class EntityKind { kUser, kItem };

// Per-entity streaming state. The stationary factor lives in the model's
// parameter tables (it is trainable); everything here is assimilation state.
struct EntityState {
  std::uint32_t index = 0;
  Tensor hidden;             // d_h, zeros until events arrive
  DiagGaussian init_prior;   // prior over the dynamic factor before any commit
  bool has_committed = false;
  std::int64_t last_event_time = kNeverTime;
  bool is_new = true;
  // Factor-recording carry-forward (record_factors only).
  Tensor snap_location;  // stationary + posterior mean at last commit
  Tensor snap_sigma;     // posterior standard deviations at last commit
};

class EntityRegistry {
 public:
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  std::uint32_t index_of(const std::string& id) const;
  const std::string& id_of(std::uint32_t idx) const { return ids_[idx]; }
  EntityState& state(std::uint32_t idx) { return states_[idx]; }
  const EntityState& state(std::uint32_t idx) const { return states_[idx]; }
  std::size_t size() const { return states_.size(); }

  EntityState& append(const std::string& id);

 private:
  std::map<std::string, std::uint32_t> index_;
  std::vector<std::string> ids_;
  std::vector<EntityState> states_;
};

// One row of the factor-drift recording: per-entity location/uncertainty
// estimates as of a committed step, for entities that have committed at
// least once.
struct FactorSnapshot {
  std::size_t step_index = 0;
  std::int64_t t_start = 0;
  std::vector<std::uint32_t> user_index;
  std::vector<Tensor> user_location;
  std::vector<Tensor> user_sigma;
  std::vector<std::uint32_t> item_index;
  std::vector<Tensor> item_location;
  std::vector<Tensor> item_sigma;
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

// h * exp(sign * dt / lambda), elementwise. dt must be non-negative and
// lambda positive.
Tensor decay_hidden(const Tensor& h, double dtau_seconds, double lambda_seconds,
                    int sign = -1);

// stationary + delta. Widths must agree.
Tensor compose_factor(const Tensor& stationary, const Tensor& delta);

// The full parameterized model: interaction networks, drift and posterior
// networks per chain, environmental-noise network, embedding and stationary
// tables, recurrent cells, plus entity registries and optimizer state.
class Model {
 public:
  Model(ModelDims dims, ModelHyper hyper, OptimizerConfig opt,
        std::uint64_t seed, bool init_mlp_zero = false);

  // --- registration ---------------------------------------------------
  // Creates streaming state, a stationary row, and a row in the opposite
  // chain's embedding table. Duplicate ids are an error.
  EntityState& register_entity(const std::string& id, EntityKind kind);
  bool is_registered(const std::string& id, EntityKind kind) const;
  std::uint32_t index_of(const std::string& id, EntityKind kind) const;
  EntityRegistry& registry(EntityKind kind);
  const EntityRegistry& registry(EntityKind kind) const;

  // --- tape-level builders ---------------------------------------------
  NodeRef interaction_mean_node(Tape& t, ParamNodes& p, NodeRef u, NodeRef v) const;
  NodeRef interaction_var_node(Tape& t, ParamNodes& p, NodeRef u, NodeRef v,
                               NodeRef sigma2_env) const;
  NodeRef env_noise_node(Tape& t, ParamNodes& p, NodeRef h_u, NodeRef h_v) const;
  GaussianNodes drift_prior_node(Tape& t, ParamNodes& p, NodeRef h, double dtau,
                                 EntityKind chain) const;
  GaussianNodes posterior_node(Tape& t, ParamNodes& p, NodeRef h, NodeRef y,
                               EntityKind chain) const;
  // y = [sum_k rating_k * embed[counterpart_k], log1p(dt/unit), is_new].
  NodeRef build_input_node(Tape& t, ParamNodes& p, EntityKind chain,
                           std::span<const std::uint32_t> counterpart_rows,
                           std::span<const double> ratings, double dtau,
                           bool is_new) const;
  NodeRef stationary_node(Tape& t, ParamNodes& p, EntityKind kind,
                          std::uint32_t idx) const;

  // --- plain evaluators (scratch tape, bit-identical to the builders) ---
  double interaction_mean(const Tensor& u, const Tensor& v) const;
  double interaction_var(const Tensor& u, const Tensor& v, double sigma2_env) const;
  double env_noise(const Tensor& h_u, const Tensor& h_v) const;
  DiagGaussian drift_prior(const Tensor& h, double dtau, EntityKind chain) const;
  DiagGaussian posterior(const Tensor& h, const Tensor& y, EntityKind chain) const;
  Tensor build_input(EntityKind chain,
                     std::span<const std::uint32_t> counterpart_rows,
                     std::span<const double> ratings, double dtau,
                     bool is_new) const;
  Tensor stationary(EntityKind kind, std::uint32_t idx) const;
  Tensor gru_advance(EntityKind chain, const Tensor& h, const Tensor& y) const;

  // Prior over the dynamic factor as seen `dtau` seconds after the entity's
  // last event: the registration prior before the first commit, otherwise
  // the drift prior at the decayed hidden state.
  DiagGaussian current_prior(EntityKind kind, const EntityState& st,
                             double dtau) const;

  // Read-only rating prediction at wall-clock `at_time`. Throws
  // ColdEntityError when either side is unregistered.
  Prediction predict(const std::string& user_id, const std::string& item_id,
                     std::int64_t at_time) const;

  double decay_lambda(EntityKind kind) const;
  double entity_dtau_at(const EntityState& st, std::int64_t at_time) const;

  // --- accessors --------------------------------------------------------
  const ModelDims& dims() const { return dims_; }
  const ModelHyper& hyper() const { return hyper_; }
  ModelHyper& mutable_hyper() { return hyper_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  Optimizer& optimizer() { return opt_; }
  std::int64_t trained_until() const { return trained_until_; }
  void set_trained_until(std::int64_t t) { trained_until_ = t; }
  double b0() const { return params_.get("f1.b0").scalar(); }
  void set_b0(double v) { params_.get("f1.b0").data[0] = v; }

  const Mlp& f1() const { return f1_; }
  const Mlp& f2() const { return f2_; }
  const Mlp& noise_net() const { return noise_; }
  const Mlp& f3(EntityKind k) const { return chain(k).f3; }
  const Mlp& f4(EntityKind k) const { return chain(k).f4; }
  const Mlp& f5_trunk(EntityKind k) const { return chain(k).f5_trunk; }
  const Mlp& f5_mean(EntityKind k) const { return chain(k).f5_mean; }
  const Mlp& f5_var(EntityKind k) const { return chain(k).f5_var; }
  const GruCell& gru(EntityKind k) const { return chain(k).gru; }
  std::string embed_table_name(EntityKind chain) const;
  std::string stationary_table_name(EntityKind kind) const;

  std::vector<FactorSnapshot>& snapshots() { return snapshots_; }
  const std::vector<FactorSnapshot>& snapshots() const { return snapshots_; }
  // Collects the current per-entity carry-forward estimates into a snapshot.
  void record_snapshot(std::size_t step_index, std::int64_t t_start);

  // --- checkpoint ---------------------------------------------------------
  void save(const std::string& path) const;
  static Model load(const std::string& path);
  void serialize(std::ostream& os) const;
  static Model deserialize(std::istream& is);
  std::string checkpoint_bytes() const;

 private:
  struct Chain {
    Mlp f3, f4, f5_trunk, f5_mean, f5_var;
    GruCell gru;
  };

  const Chain& chain(EntityKind k) const {
    return k == EntityKind::kUser ? user_chain_ : item_chain_;
  }
  void build_networks();
  void init_network_params(bool zero_mlp);
  void grow_table(const std::string& name, std::size_t needed_rows);
  GaussianNodes mean_var_heads(Tape& t, ParamNodes& p, const Mlp& mean_net,
                               const Mlp& var_net, NodeRef input) const;

  ModelDims dims_;
  ModelHyper hyper_;
  ParamStore params_;
  Optimizer opt_;
  std::uint64_t seed_ = 0;
  std::int64_t trained_until_ = kUntrained;
  EntityRegistry users_;
  EntityRegistry items_;
  Chain user_chain_;
  Chain item_chain_;
  Mlp f1_, f2_, noise_;
  std::vector<FactorSnapshot> snapshots_;
};

}  // namespace streamrec
