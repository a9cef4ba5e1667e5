#include "streamrec/param_store.hpp"

#include "streamrec/errors.hpp"

namespace streamrec {

Tensor& ParamStore::create(const std::string& name, Tensor init) {
  auto [it, inserted] = params_.emplace(name, std::move(init));
  if (!inserted) throw ConfigError("parameter already exists: " + name);
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

bool ParamStore::has(const std::string& name) const {
  return params_.count(name) != 0;
}

NodeRef ParamNodes::node(const std::string& name) {
  auto it = cache_.find(name);
  if (it != cache_.end()) return it->second;
  NodeRef ref = tape_.external(&store_.get(name));
  cache_.emplace(name, ref);
  return ref;
}

GradStore ParamNodes::harvest() const {
  GradStore out;
  for (const auto& [name, ref] : cache_) {
    const Tensor& g = tape_.grad(ref);
    if (g.empty()) continue;
    out.grads.emplace(name, g);
    const Tensor& v = store_.get(name);
    if (v.shape.size() == 2) {
      auto rows = tape_.touched_rows(ref);
      if (!rows.empty()) out.touched_rows.emplace(name, std::move(rows));
    }
  }
  return out;
}

}  // namespace streamrec
