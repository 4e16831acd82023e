#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gramsr/autodiff.hpp"
#include "gramsr/rng.hpp"

namespace gramsr {

// Parameter groups. Freezing is expressed per group.
namespace group {
inline constexpr const char* kBase = "base";
inline constexpr const char* kAdapter = "adapter";
inline constexpr const char* kCondTensor = "cond_tensor";
inline constexpr const char* kLoraPix = "lora.pix";
inline constexpr const char* kLoraSem = "lora.sem";
inline constexpr const char* kLoraGram = "lora.gram";
}  // namespace group

struct Param {
  std::string name;
  ad::Shape shape;
  std::vector<double> value;
  std::string group;
  bool trainable = false;

  friend bool operator==(const Param&, const Param&) = default;
};

using GradMap = std::map<std::string, std::vector<double>>;

// Ordered, name-unique parameter registry.
class ParamStore {
 public:
  Param& add(std::string name, ad::Shape shape, std::vector<double> value, std::string group);

  bool contains(const std::string& name) const { return index_.contains(name); }
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  std::set<std::string> groups() const;
  // Marks exactly the listed groups trainable.
  void set_trainable_groups(const std::set<std::string>& groups);
  std::vector<std::string> trainable_names() const;
  // Raw bytes of every parameter in the group, in registry order.
  std::vector<std::uint8_t> group_bytes(const std::string& group) const;

  friend bool operator==(const ParamStore& a, const ParamStore& b) { return a.params_ == b.params_; }

 private:
  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
};

// Binds parameters to autodiff leaves for one forward/backward pass. Only
// trainable parameters become gradient-tracking leaves when tracking is on.
class ParamBinder {
 public:
  ParamBinder(const ParamStore& store, bool track_grads) : store_(store), track_(track_grads) {}

  ad::Var get(const std::string& name);
  const ParamStore& store() const { return store_; }
  bool tracking() const { return track_; }

  // Adds the gradients of every bound trainable leaf into `out`.
  void accumulate_grads(GradMap& out) const;

 private:
  const ParamStore& store_;
  bool track_;
  std::map<std::string, ad::Var> bound_;
};

std::vector<double> uniform_init(Rng& rng, std::size_t n, double bound);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Updates trainable parameters that have an entry in grads; frozen ones are
  // never touched.
  void step(ParamStore& store, const GradMap& grads);
  std::uint64_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

}  // namespace gramsr
