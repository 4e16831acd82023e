#include "gramsr/params.hpp"

#include <cmath>
#include <cstring>

#include "gramsr/error.hpp"

namespace gramsr {

Param& ParamStore::add(std::string name, ad::Shape shape, std::vector<double> value, std::string group) {
  if (index_.contains(name)) throw ConfigError("parameter already registered: " + name);
  if (ad::numel(shape) != value.size())
    throw ShapeError("parameter " + name + ": shape " + ad::shape_str(shape) + " vs " +
                     std::to_string(value.size()) + " values");
  index_[name] = params_.size();
  params_.push_back(Param{std::move(name), std::move(shape), std::move(value), std::move(group), false});
  return params_.back();
}

Param& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second];
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second];
}

std::set<std::string> ParamStore::groups() const {
  std::set<std::string> out;
  for (const auto& p : params_) out.insert(p.group);
  return out;
}

void ParamStore::set_trainable_groups(const std::set<std::string>& groups) {
  for (auto& p : params_) p.trainable = groups.contains(p.group);
}

std::vector<std::string> ParamStore::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& p : params_)
    if (p.trainable) out.push_back(p.name);
  return out;
}

std::vector<std::uint8_t> ParamStore::group_bytes(const std::string& group) const {
  std::vector<std::uint8_t> out;
  for (const auto& p : params_) {
    if (p.group != group) continue;
    const auto* b = reinterpret_cast<const std::uint8_t*>(p.value.data());
    out.insert(out.end(), b, b + p.value.size() * sizeof(double));
  }
  return out;
}

ad::Var ParamBinder::get(const std::string& name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  const Param& p = store_.at(name);
  ad::Var v = ad::Var::leaf(p.shape, p.value, track_ && p.trainable);
  bound_.emplace(name, v);
  return v;
}

void ParamBinder::accumulate_grads(GradMap& out) const {
  for (const auto& [name, v] : bound_) {
    if (!v.requires_grad() || v.grad().empty()) continue;
    auto& dst = out[name];
    if (dst.empty()) dst.assign(v.size(), 0.0);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += v.grad()[i];
  }
}

std::vector<double> uniform_init(Rng& rng, std::size_t n, double bound) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-bound, bound);
  return v;
}

void Adam::step(ParamStore& store, const GradMap& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& p : store.params()) {
    if (!p.trainable) continue;
    auto it = grads.find(p.name);
    if (it == grads.end()) continue;
    const auto& g = it->second;
    auto& [m, v] = moments_[p.name];
    if (m.empty()) {
      m.assign(p.value.size(), 0.0);
      v.assign(p.value.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

}  // namespace gramsr
