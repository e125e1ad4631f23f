#include "discriminator.hpp"

#include <stdexcept>

namespace rdi {

PatchDiscriminator::PatchDiscriminator(int in_channels, const ModelConfig& cfg,
                                       std::mt19937_64& rng)
    : in_channels_(in_channels) {
  const std::vector<int> widths = {cfg.ch(64), cfg.ch(128), cfg.ch(256),
                                   cfg.ch(256), cfg.ch(256), cfg.ch(256)};
  int cin = in_channels;
  int idx = 0;
  for (int cout : widths) {
    SnConv c;
    c.w = add_param("w" + std::to_string(idx), kaiming_conv_weight({cout, cin, 5, 5}, rng));
    c.b = add_param("b" + std::to_string(idx), zeros({cout}));
    c.cin = cin;
    c.cout = cout;
    c.stride = 2;
    c.u.assign(static_cast<size_t>(cout), 0.0);
    c.v.assign(static_cast<size_t>(cin) * 25, 0.0);
    // deterministic unit-norm start for the power vectors
    std::normal_distribution<double> dist(0.0, 1.0);
    double nrm = 0.0;
    for (auto& x : c.u) {
      x = dist(rng);
      nrm += x * x;
    }
    nrm = std::sqrt(nrm) + 1e-12;
    for (auto& x : c.u) x /= nrm;
    power_iteration_step(c.w, c.u, c.v);
    convs_.push_back(std::move(c));
    cin = cout;
    ++idx;
  }
  // 1x1 score head on top of the last feature map
  SnConv head;
  head.w = add_param("w_out", kaiming_conv_weight({1, cin, 1, 1}, rng));
  head.b = add_param("b_out", zeros({1}));
  head.cin = cin;
  head.cout = 1;
  head.stride = 1;
  head.u.assign(1, 1.0);
  head.v.assign(static_cast<size_t>(cin), 0.0);
  power_iteration_step(head.w, head.u, head.v);
  convs_.push_back(std::move(head));
}

Tensor PatchDiscriminator::forward(const Tensor& x) const {
  if (x.dim(1) != in_channels_)
    throw std::invalid_argument("PatchDiscriminator: expected " +
                                std::to_string(in_channels_) + " channels, got " +
                                std::to_string(x.dim(1)));
  Tensor h = x;
  for (size_t i = 0; i < convs_.size(); ++i) {
    const SnConv& c = convs_[i];
    if (!frozen_ && grad_enabled()) power_iteration_step(c.w, c.u, c.v);
    Tensor wn = spectral_scale(c.w, c.u, c.v);
    const int k = c.w.dim(2);
    h = conv2d(h, wn, c.b, ConvOpt{c.stride, k / 2, 1});
    if (i + 1 < convs_.size()) h = leaky_relu(h, 0.2);
  }
  return h;
}

std::vector<double> PatchDiscriminator::sigma_estimates() const {
  std::vector<double> out;
  for (const auto& c : convs_) {
    Tensor wn = spectral_scale(c.w, c.u, c.v);
    std::vector<double> u = c.u, v = c.v;
    for (int i = 0; i < 30; ++i) power_iteration_step(wn, u, v);
    out.push_back(spectral_sigma(wn, u, v));
  }
  return out;
}

int64_t PatchDiscriminator::mads(int h, int w) const {
  int64_t total = 0;
  int ch = h, cw = w;
  for (const auto& c : convs_) {
    const int k = c.w.dim(2);
    const int oh = (ch + 2 * (k / 2) - k) / c.stride + 1;
    const int ow = (cw + 2 * (k / 2) - k) / c.stride + 1;
    total += static_cast<int64_t>(k) * k * c.cin * c.cout * oh * ow;
    ch = oh;
    cw = ow;
  }
  return total;
}

std::vector<std::vector<double>> PatchDiscriminator::power_state() const {
  std::vector<std::vector<double>> out;
  for (const auto& c : convs_) {
    out.push_back(c.u);
    out.push_back(c.v);
  }
  return out;
}

void PatchDiscriminator::load_power_state(const std::vector<std::vector<double>>& uv) {
  if (uv.size() != 2 * convs_.size())
    throw std::runtime_error("PatchDiscriminator: power state entry count mismatch");
  for (size_t i = 0; i < convs_.size(); ++i) {
    if (uv[2 * i].size() != convs_[i].u.size() ||
        uv[2 * i + 1].size() != convs_[i].v.size())
      throw std::runtime_error("PatchDiscriminator: power state size mismatch");
    convs_[i].u = uv[2 * i];
    convs_[i].v = uv[2 * i + 1];
  }
}

}  // namespace rdi
