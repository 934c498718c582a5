#include "mgtr/optim.hpp"

#include <cmath>
#include <random>

#include "mgtr/errors.hpp"

namespace mgtr {

ad::Var ParameterStore::create(const std::string& name, Index rows, Index cols,
                               const std::function<double()>& init) {
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = init();
  return create(name, std::move(m));
}

ad::Var ParameterStore::create(const std::string& name, Mat value) {
  if (index_.count(name)) throw ContractError("parameter name already registered: " + name);
  ad::Var v(std::move(value), /*requires_grad=*/true);
  index_[name] = params_.size();
  params_.push_back(Parameter{name, v});
  return v;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.var.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

AdamW::AdamW(ParameterStore& params, AdamWConfig cfg) : params_(&params), cfg_(cfg) {
  m_.reserve(params.count());
  v_.reserve(params.count());
  for (const auto& p : params.all()) {
    m_.push_back(Mat::Zero(p.var.rows(), p.var.cols()));
    v_.push_back(Mat::Zero(p.var.rows(), p.var.cols()));
  }
}

void AdamW::step() {
  ++t_;
  double clip_scale = 1.0;
  if (cfg_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& p : params_->all()) sq += p.var.grad().squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) clip_scale = cfg_.clip_norm / norm;
  }
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  auto& ps = params_->all();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Mat g = clip_scale * ps[i].var.grad();
    Mat& p = ps[i].var.value_mut();
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    const Mat mhat = m_[i] / bc1;
    const Mat vhat = v_[i] / bc2;
    if (cfg_.weight_decay != 0.0) p *= (1.0 - cfg_.lr * cfg_.weight_decay);
    p -= cfg_.lr * (mhat.array() / (vhat.array().sqrt() + cfg_.eps)).matrix();
  }
}

std::function<double()> uniform_init(std::mt19937_64& rng, double lo, double hi) {
  return [&rng, lo, hi]() {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(rng);
  };
}

std::function<double()> xavier_init(std::mt19937_64& rng, Index fan_in, Index fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform_init(rng, -bound, bound);
}

}  // namespace mgtr
