#include "module.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rdi {

Tensor Module::add_param(const std::string& name, Tensor t) {
  t.set_requires_grad(true);
  params_.emplace_back(name, t);
  return t;
}

void Module::collect(const std::string& prefix,
                     std::vector<std::pair<std::string, Tensor>>& out,
                     std::vector<const Node*>& seen) const {
  for (const auto& [name, t] : params_) {
    const Node* id = t.node().get();
    if (std::find(seen.begin(), seen.end(), id) != seen.end()) continue;
    seen.push_back(id);
    out.emplace_back(prefix + name, t);
  }
  for (const auto& [name, child] : children_)
    child->collect(prefix + name + ".", out, seen);
}

std::vector<std::pair<std::string, Tensor>> Module::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  std::vector<const Node*> seen;
  collect("", out, seen);
  return out;
}

std::vector<Tensor> Module::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

int64_t Module::param_count() const {
  int64_t n = 0;
  for (const auto& t : parameters()) n += t.numel();
  return n;
}

void Module::zero_grad() {
  for (auto& t : parameters()) t.zero_grad();
}

Tensor kaiming_conv_weight(Shape shape, std::mt19937_64& rng) {
  if (shape.size() != 4) throw std::invalid_argument("kaiming_conv_weight: 4D shape expected");
  const double fan_in = static_cast<double>(shape[1]) * shape[2] * shape[3];
  return randn(shape, rng, std::sqrt(2.0 / fan_in));
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < m.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::vector<double> Adam::state_blob() const {
  std::vector<double> blob;
  blob.push_back(static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    blob.insert(blob.end(), m_[i].begin(), m_[i].end());
    blob.insert(blob.end(), v_[i].begin(), v_[i].end());
  }
  return blob;
}

void Adam::load_state_blob(const std::vector<double>& blob) {
  size_t expect = 1;
  for (const auto& m : m_) expect += 2 * m.size();
  if (blob.size() != expect)
    throw std::runtime_error("Adam::load_state_blob: state size mismatch");
  size_t off = 0;
  t_ = static_cast<int64_t>(blob[off++]);
  for (size_t i = 0; i < params_.size(); ++i) {
    std::copy(blob.begin() + static_cast<long>(off),
              blob.begin() + static_cast<long>(off + m_[i].size()), m_[i].begin());
    off += m_[i].size();
    std::copy(blob.begin() + static_cast<long>(off),
              blob.begin() + static_cast<long>(off + v_[i].size()), v_[i].begin());
    off += v_[i].size();
  }
}

}  // namespace rdi
