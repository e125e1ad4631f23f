#include "losses.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rdi {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

FeatureExtractor::FeatureExtractor(uint64_t seed, int in_channels,
                                   std::vector<int> widths) {
  std::mt19937_64 rng(seed);
  int cin = in_channels;
  for (int cout : widths) {
    const double stddev = std::sqrt(2.0 / (cin * 9.0));
    weights_.push_back(randn({cout, cin, 3, 3}, rng, stddev));
    biases_.push_back(zeros({cout}));
    cin = cout;
  }
  provenance_ = "fixed-random(seed=" + std::to_string(seed) + ")";
}

std::vector<Tensor> FeatureExtractor::stages(const Tensor& x) const {
  std::vector<Tensor> out;
  Tensor h = x;
  for (size_t i = 0; i < weights_.size(); ++i) {
    h = relu(conv2d(h, weights_[i], biases_[i], ConvOpt{2, 1, 1}));
    out.push_back(h);
  }
  return out;
}

int FeatureExtractor::feature_dim() const {
  int d = 0;
  for (const auto& w : weights_) d += w.dim(0);
  return d;
}

bool LossReport::all_finite() const {
  for (double v : values())
    if (!std::isfinite(v)) return false;
  return true;
}

const std::vector<std::string>& LossReport::field_names() {
  static const std::vector<std::string> names = {
      "rec_I", "per", "sty", "adv_I", "rec_D", "grad", "adv_D",
      "seg",   "st",  "lt",  "total_G", "total_D_I", "total_D_D"};
  return names;
}

std::vector<double> LossReport::values() const {
  return {rec_I, per, sty, adv_I, rec_D, grad, adv_D, seg, st, lt,
          total_G, total_D_I, total_D_D};
}

std::string LossReport::dump() const {
  std::ostringstream os;
  const auto& names = field_names();
  const auto vals = values();
  for (size_t i = 0; i < names.size(); ++i)
    os << names[i] << "=" << vals[i] << (i + 1 < names.size() ? " " : "");
  return os.str();
}

Tensor rec_l1(const Tensor& x, const Tensor& y) {
  require(shape_eq(x.shape(), y.shape()), "rec_l1: shape mismatch");
  return mean_all(abs(x - y));
}

Tensor perceptual(const Tensor& a, const Tensor& b, const FeatureExtractor& fx) {
  auto fa = fx.stages(a);
  auto fb = fx.stages(b);
  Tensor total;
  for (size_t i = 0; i < fa.size(); ++i) {
    Tensor term = mean_all(abs(fa[i] - fb[i]));
    total = total.defined() ? total + term : term;
  }
  return total;
}

Tensor style(const Tensor& a, const Tensor& b, const FeatureExtractor& fx) {
  auto fa = fx.stages(a);
  auto fb = fx.stages(b);
  Tensor total;
  for (size_t i = 0; i < fa.size(); ++i) {
    Tensor term = mean_all(abs(gram(fa[i]) - gram(fb[i])));
    total = total.defined() ? total + term : term;
  }
  return total;
}

namespace {

Tensor sobel_response(const Tensor& d) {
  static const std::vector<double> kSobel = {
      // Gx
      -1, 0, 1, -2, 0, 2, -1, 0, 1,
      // Gy
      -1, -2, -1, 0, 0, 0, 1, 2, 1};
  Tensor w = from_vec({2, 1, 3, 3}, kSobel);
  return conv2d(replicate_pad(d, 1), w, Tensor(), ConvOpt{1, 0, 1});
}

}  // namespace

Tensor depth_gradient(const Tensor& d, const Tensor& d_o) {
  require(shape_eq(d.shape(), d_o.shape()), "depth_gradient: shape mismatch");
  require(d.dim(1) == 1, "depth_gradient: expects 1-channel depth");
  return mean_all(abs(sobel_response(d) - sobel_response(d_o)));
}

Tensor seg_loss(const std::vector<Tensor>& seg_logits, const std::vector<int>& labels,
                int h, int w) {
  require(!seg_logits.empty(), "seg_loss: no segmentation scales");
  Tensor total;
  for (const auto& logits : seg_logits) {
    Tensor up = (logits.dim(2) == h && logits.dim(3) == w)
                    ? logits
                    : upsample_bilinear(logits, h, w);
    Tensor ce = cross_entropy_logits(up, labels);
    total = total.defined() ? total + ce : ce;
  }
  return mul_scalar(total, 1.0 / static_cast<double>(seg_logits.size()));
}

Tensor hinge_d(const Tensor& real_scores, const Tensor& fake_scores) {
  Tensor lr = mean_all(relu(add_scalar(neg(real_scores), 1.0)));
  Tensor lf = mean_all(relu(add_scalar(fake_scores, 1.0)));
  return lr + lf;
}

Tensor hinge_g(const Tensor& fake_scores) { return neg(mean_all(fake_scores)); }

CombinedLoss combine(const LossParts& p, const LossWeights& w) {
  auto need = [](const Tensor& t, const char* name) {
    if (!t.defined())
      throw std::invalid_argument(std::string("combine: missing component ") + name);
    if (t.numel() != 1)
      throw std::invalid_argument(std::string("combine: non-scalar component ") + name);
    return t;
  };
  Tensor l_i = mul_scalar(need(p.rec_I, "rec_I"), w.rec) +
               mul_scalar(need(p.per, "per"), w.per) +
               mul_scalar(need(p.sty, "sty"), w.sty) + need(p.adv_I, "adv_I");
  Tensor l_d = mul_scalar(need(p.rec_D, "rec_D"), w.rec) +
               mul_scalar(need(p.grad, "grad"), w.grad) + need(p.adv_D, "adv_D");
  Tensor l_g = l_i + l_d + mul_scalar(need(p.seg, "seg"), w.seg) +
               mul_scalar(need(p.st, "st") + need(p.lt, "lt"), w.temporal);

  CombinedLoss out;
  out.total_G = l_g;
  out.report.rec_I = p.rec_I.item();
  out.report.per = p.per.item();
  out.report.sty = p.sty.item();
  out.report.adv_I = p.adv_I.item();
  out.report.rec_D = p.rec_D.item();
  out.report.grad = p.grad.item();
  out.report.adv_D = p.adv_D.item();
  out.report.seg = p.seg.item();
  out.report.st = p.st.item();
  out.report.lt = p.lt.item();
  out.report.total_G = l_g.item();
  out.report.total_D_I = p.total_D_I.defined() ? p.total_D_I.item() : 0.0;
  out.report.total_D_D = p.total_D_D.defined() ? p.total_D_D.item() : 0.0;
  return out;
}

}  // namespace rdi
