#pragma once

#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mgtr/autodiff.hpp"
#include "mgtr/types.hpp"

namespace mgtr {

// Named, trainable tensor. Names encode the module path and are checkpoint keys.
struct Parameter {
  std::string name;
  ad::Var var;
};

class ParameterStore {
 public:
  // Creation order is the checkpoint order; names must be unique.
  ad::Var create(const std::string& name, Index rows, Index cols,
                 const std::function<double()>& init);
  ad::Var create(const std::string& name, Mat value);

  const std::vector<Parameter>& all() const { return params_; }
  std::vector<Parameter>& all() { return params_; }
  const Parameter* find(const std::string& name) const;
  std::size_t count() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

struct AdamWConfig {
  double lr = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // global gradient-norm clip before the update; 0 disables
};

// AdamW with decoupled weight decay and bias-corrected moments.
class AdamW {
 public:
  AdamW(ParameterStore& params, AdamWConfig cfg);

  void step();
  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  long step_count() const { return t_; }

 private:
  ParameterStore* params_;
  AdamWConfig cfg_;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

// Deterministic parameter initializers.
std::function<double()> uniform_init(std::mt19937_64& rng, double lo, double hi);
std::function<double()> xavier_init(std::mt19937_64& rng, Index fan_in, Index fan_out);

}  // namespace mgtr
