#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "streamrec/tape.hpp"
#include "streamrec/tensor.hpp"

namespace streamrec {

// Named trainable tensors. std::map keeps iteration order deterministic,
// which the optimizer and checkpoint writer rely on.
class ParamStore {
 public:
  Tensor& create(const std::string& name, Tensor init);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
  std::size_t count() const { return params_.size(); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Tensor> params_;
};

// Gradients produced by one backward pass, keyed like the ParamStore.
// Rank-2 table parameters additionally carry the set of rows the pass
// touched; the optimizer updates only those rows.
struct GradStore {
  std::map<std::string, Tensor> grads;
  std::map<std::string, std::vector<std::uint32_t>> touched_rows;
};

// Memoizes one external tape leaf per parameter so that shared parameters
// (embedding tables, network weights used by many events) accumulate their
// gradients in a single buffer.
class ParamNodes {
 public:
  ParamNodes(Tape& tape, const ParamStore& store) : tape_(tape), store_(store) {}

  NodeRef node(const std::string& name);

  // Collects gradients (and touched rows for rank-2 tables) of every
  // parameter leafed so far. Call after Tape::backward.
  GradStore harvest() const;

  const ParamStore& store() const { return store_; }

 private:
  Tape& tape_;
  const ParamStore& store_;
  std::map<std::string, NodeRef> cache_;
};

}  // namespace streamrec
