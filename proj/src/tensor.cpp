#include "tensor.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace rdi {

namespace {

thread_local bool g_grad_enabled = true;

struct BlasInit {
  BlasInit() { openblas_set_num_threads(1); }
};
const BlasInit g_blas_init;

void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

std::shared_ptr<Node> make_node(Shape shape) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value.assign(static_cast<size_t>(shape_numel(n->shape)), 0.0);
  return n;
}

// Wires parents/backward only when grad mode is on and some parent needs it.
Tensor finish_op(std::shared_ptr<Node> out,
                 std::vector<std::shared_ptr<Node>> parents,
                 std::function<void(Node&)> backward_fn) {
  bool need = false;
  if (g_grad_enabled) {
    for (const auto& p : parents)
      if (p && p->requires_grad) need = true;
  }
  if (need) {
    out->requires_grad = true;
    out->parents = std::move(parents);
    out->backward_fn = std::move(backward_fn);
  }
  return Tensor::wrap(std::move(out));
}

}  // namespace

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "{";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "}";
  return os.str();
}

bool shape_eq(const Shape& a, const Shape& b) { return a == b; }

void Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

const Shape& Tensor::shape() const {
  check(defined(), "Tensor::shape on undefined tensor");
  return node_->shape;
}

int Tensor::dim(int i) const {
  const Shape& s = shape();
  int r = static_cast<int>(s.size());
  if (i < 0) i += r;
  check(i >= 0 && i < r, "Tensor::dim index out of range");
  return s[static_cast<size_t>(i)];
}

int64_t Tensor::numel() const { return shape_numel(shape()); }

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

std::span<const double> Tensor::data() const {
  check(defined(), "Tensor::data on undefined tensor");
  return {node_->value.data(), node_->value.size()};
}

std::span<double> Tensor::mutable_data() {
  check(defined(), "Tensor::mutable_data on undefined tensor");
  check(node_->parents.empty(), "mutable_data is for leaf tensors only");
  return {node_->value.data(), node_->value.size()};
}

std::span<const double> Tensor::grad() const {
  check(defined(), "Tensor::grad on undefined tensor");
  return {node_->grad.data(), node_->grad.size()};
}

bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }

void Tensor::zero_grad() {
  if (defined() && !node_->grad.empty())
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::set_requires_grad(bool rg) {
  check(defined(), "set_requires_grad on undefined tensor");
  check(node_->parents.empty(), "set_requires_grad is for leaf tensors only");
  node_->requires_grad = rg;
}

double Tensor::item() const {
  check(numel() == 1, "item() requires a scalar tensor");
  return node_->value[0];
}

Tensor Tensor::detach() const {
  check(defined(), "detach on undefined tensor");
  auto n = make_node(node_->shape);
  n->value = node_->value;
  return Tensor::wrap(std::move(n));
}

Tensor Tensor::clone_leaf(bool rg) const {
  Tensor t = detach();
  t.set_requires_grad(rg);
  return t;
}

void Tensor::backward() const {
  check(defined(), "backward on undefined tensor");
  check(numel() == 1, "backward requires a scalar root");
  check(node_->requires_grad, "backward on a graph with no grad requirement");

  // Iterative post-order topological sort over parents.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* n;
    size_t next_child;
  };
  std::vector<Frame> stack;
  stack.push_back({node_.get(), 0});
  visited.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_child < f.n->parents.size()) {
      Node* p = f.n->parents[f.next_child++].get();
      if (p && p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
  }
}

// ---- factories ----------------------------------------------------------

Tensor zeros(Shape shape, bool requires_grad) {
  auto n = make_node(std::move(shape));
  n->requires_grad = requires_grad;
  return Tensor::wrap(std::move(n));
}

Tensor full(Shape shape, double v, bool requires_grad) {
  auto n = make_node(std::move(shape));
  std::fill(n->value.begin(), n->value.end(), v);
  n->requires_grad = requires_grad;
  return Tensor::wrap(std::move(n));
}

Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor from_vec(Shape shape, std::vector<double> values, bool requires_grad) {
  check(shape_numel(shape) == static_cast<int64_t>(values.size()),
        "from_vec: element count does not match shape " + shape_str(shape));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor::wrap(std::move(n));
}

Tensor randn(Shape shape, std::mt19937_64& rng, double stddev, bool requires_grad) {
  auto n = make_node(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : n->value) v = dist(rng);
  n->requires_grad = requires_grad;
  return Tensor::wrap(std::move(n));
}

Tensor rand_uniform(Shape shape, std::mt19937_64& rng, double lo, double hi,
                    bool requires_grad) {
  auto n = make_node(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : n->value) v = dist(rng);
  n->requires_grad = requires_grad;
  return Tensor::wrap(std::move(n));
}

// ---- elementwise --------------------------------------------------------

namespace {

void accumulate(Node& dst, const std::vector<double>& g) {
  dst.ensure_grad();
  for (size_t i = 0; i < g.size(); ++i) dst.grad[i] += g[i];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check(shape_eq(a.shape(), b.shape()),
        "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto out = make_node(a.shape());
  const auto av = a.data();
  const auto bv = b.data();
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = av[i] + bv[i];
  auto pa = a.node(), pb = b.node();
  return finish_op(out, {pa, pb}, [pa, pb](Node& self) {
    if (pa->requires_grad) accumulate(*pa, self.grad);
    if (pb->requires_grad) accumulate(*pb, self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check(shape_eq(a.shape(), b.shape()),
        "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto out = make_node(a.shape());
  const auto av = a.data();
  const auto bv = b.data();
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = av[i] - bv[i];
  auto pa = a.node(), pb = b.node();
  return finish_op(out, {pa, pb}, [pa, pb](Node& self) {
    if (pa->requires_grad) accumulate(*pa, self.grad);
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check(shape_eq(a.shape(), b.shape()),
        "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto out = make_node(a.shape());
  const auto av = a.data();
  const auto bv = b.data();
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = av[i] * bv[i];
  auto pa = a.node(), pb = b.node();
  return finish_op(out, {pa, pb}, [pa, pb](Node& self) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        pa->grad[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        pb->grad[i] += self.grad[i] * pa->value[i];
    }
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  auto out = make_node(a.shape());
  const auto av = a.data();
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = av[i] + s;
  auto pa = a.node();
  return finish_op(out, {pa}, [pa](Node& self) { accumulate(*pa, self.grad); });
}

Tensor mul_scalar(const Tensor& a, double s) {
  auto out = make_node(a.shape());
  const auto av = a.data();
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = av[i] * s;
  auto pa = a.node();
  return finish_op(out, {pa}, [pa, s](Node& self) {
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * s;
  });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

namespace {

template <class F, class DF>
Tensor unary_op(const Tensor& a, F f, DF df_from_in_out) {
  auto out = make_node(a.shape());
  const auto av = a.data();
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = f(av[i]);
  auto pa = a.node();
  return finish_op(out, {pa}, [pa, df_from_in_out](Node& self) {
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      pa->grad[i] += self.grad[i] * df_from_in_out(pa->value[i], self.value[i]);
  });
}

}  // namespace

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary_op(
      a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Tensor elu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0 ? x : std::expm1(x); },
      [](double x, double y) { return x > 0 ? 1.0 : y + 1.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor abs(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor clamp01_ste(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); },
      [](double x, double) { return (x >= 0.0 && x <= 1.0) ? 1.0 : 0.0; });
}

// ---- reductions ---------------------------------------------------------

Tensor sum_all(const Tensor& a) {
  auto out = make_node({1});
  double s = 0.0;
  for (double v : a.data()) s += v;
  out->value[0] = s;
  auto pa = a.node();
  return finish_op(out, {pa}, [pa](Node& self) {
    pa->ensure_grad();
    const double g = self.grad[0];
    for (auto& gv : pa->grad) gv += g;
  });
}

Tensor mean_all(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  auto out = make_node({1});
  double s = 0.0;
  for (double v : a.data()) s += v;
  out->value[0] = s * inv;
  auto pa = a.node();
  return finish_op(out, {pa}, [pa, inv](Node& self) {
    pa->ensure_grad();
    const double g = self.grad[0] * inv;
    for (auto& gv : pa->grad) gv += g;
  });
}

// ---- structure ----------------------------------------------------------

namespace {

void expect_4d(const Tensor& x, const char* what) {
  check(x.shape().size() == 4, std::string(what) + ": expected NCHW tensor, got " +
                                   shape_str(x.shape()));
}

}  // namespace

Tensor concat_channels(const std::vector<Tensor>& xs) {
  check(!xs.empty(), "concat_channels: empty input list");
  expect_4d(xs[0], "concat_channels");
  const int n = xs[0].dim(0), h = xs[0].dim(2), w = xs[0].dim(3);
  int ctot = 0;
  for (const auto& x : xs) {
    expect_4d(x, "concat_channels");
    check(x.dim(0) == n && x.dim(2) == h && x.dim(3) == w,
          "concat_channels: spatial/batch mismatch");
    ctot += x.dim(1);
  }
  auto out = make_node({n, ctot, h, w});
  const int64_t hw = static_cast<int64_t>(h) * w;
  std::vector<std::shared_ptr<Node>> parents;
  int64_t coff = 0;
  for (const auto& x : xs) {
    const int c = x.dim(1);
    const auto xv = x.data();
    for (int ni = 0; ni < n; ++ni) {
      std::memcpy(out->value.data() + (ni * ctot + coff) * hw,
                  xv.data() + static_cast<int64_t>(ni) * c * hw,
                  static_cast<size_t>(c * hw) * sizeof(double));
    }
    parents.push_back(x.node());
    coff += c;
  }
  auto parents_copy = parents;
  return finish_op(out, std::move(parents),
                   [parents_copy, n, ctot, hw](Node& self) {
                     int64_t off = 0;
                     for (const auto& p : parents_copy) {
                       const int c = p->shape[1];
                       if (p->requires_grad) {
                         p->ensure_grad();
                         for (int ni = 0; ni < n; ++ni) {
                           const double* g = self.grad.data() + (ni * ctot + off) * hw;
                           double* dst = p->grad.data() + static_cast<int64_t>(ni) * c * hw;
                           for (int64_t i = 0; i < c * hw; ++i) dst[i] += g[i];
                         }
                       }
                       off += c;
                     }
                   });
}

Tensor slice_channels(const Tensor& x, int c0, int c1) {
  expect_4d(x, "slice_channels");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  check(0 <= c0 && c0 < c1 && c1 <= c, "slice_channels: bad channel range");
  const int cs = c1 - c0;
  const int64_t hw = static_cast<int64_t>(h) * w;
  auto out = make_node({n, cs, h, w});
  const auto xv = x.data();
  for (int ni = 0; ni < n; ++ni)
    std::memcpy(out->value.data() + static_cast<int64_t>(ni) * cs * hw,
                xv.data() + (static_cast<int64_t>(ni) * c + c0) * hw,
                static_cast<size_t>(cs * hw) * sizeof(double));
  auto px = x.node();
  return finish_op(out, {px}, [px, n, c, c0, cs, hw](Node& self) {
    px->ensure_grad();
    for (int ni = 0; ni < n; ++ni) {
      const double* g = self.grad.data() + static_cast<int64_t>(ni) * cs * hw;
      double* dst = px->grad.data() + (static_cast<int64_t>(ni) * c + c0) * hw;
      for (int64_t i = 0; i < cs * hw; ++i) dst[i] += g[i];
    }
  });
}

// ---- gemm / conv --------------------------------------------------------

void gemm_rm(bool ta, bool tb, int m, int n, int k, double alpha,
             const double* a, const double* b, double beta, double* c) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a,
              ta ? m : k, b, tb ? k : n, beta, c, n);
}

namespace {

struct ConvDims {
  int n, cin, h, w, cout, k, stride, pad, dil, oh, ow;
};

int conv_out_size(int in, int k, int stride, int pad, int dil) {
  return (in + 2 * pad - dil * (k - 1) - 1) / stride + 1;
}

// col: {cin*k*k, oh*ow}, gathered from image {cin, h, w}.
void im2col(const double* img, int cin, int h, int w, int k, int stride,
            int pad, int dil, int oh, int ow, double* col) {
  for (int c = 0; c < cin; ++c) {
    const double* src = img + static_cast<int64_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        double* dst = col + ((static_cast<int64_t>(c) * k + ki) * k + kj) *
                                (static_cast<int64_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ki * dil;
          if (iy < 0 || iy >= h) {
            std::memset(dst + static_cast<int64_t>(oy) * ow, 0,
                        sizeof(double) * static_cast<size_t>(ow));
            continue;
          }
          const double* row = src + static_cast<int64_t>(iy) * w;
          double* drow = dst + static_cast<int64_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kj * dil;
            drow[ox] = (ix >= 0 && ix < w) ? row[ix] : 0.0;
          }
        }
      }
    }
  }
}

// Scatter-add of col back into image gradient (adjoint of im2col).
void col2im(const double* col, int cin, int h, int w, int k, int stride,
            int pad, int dil, int oh, int ow, double* img) {
  for (int c = 0; c < cin; ++c) {
    double* dst = img + static_cast<int64_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const double* src = col + ((static_cast<int64_t>(c) * k + ki) * k + kj) *
                                      (static_cast<int64_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ki * dil;
          if (iy < 0 || iy >= h) continue;
          double* row = dst + static_cast<int64_t>(iy) * w;
          const double* srow = src + static_cast<int64_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kj * dil;
            if (ix >= 0 && ix < w) row[ix] += srow[ox];
          }
        }
      }
    }
  }
}

thread_local std::vector<double> g_col_scratch;

double* col_scratch(size_t n) {
  if (g_col_scratch.size() < n) g_col_scratch.resize(n);
  return g_col_scratch.data();
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, ConvOpt opt) {
  expect_4d(x, "conv2d input");
  expect_4d(w, "conv2d weight");
  ConvDims d;
  d.n = x.dim(0);
  d.cin = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.cout = w.dim(0);
  d.k = w.dim(2);
  check(w.dim(1) == d.cin, "conv2d: weight expects " + std::to_string(w.dim(1)) +
                               " input channels, got " + std::to_string(d.cin));
  check(w.dim(2) == w.dim(3), "conv2d: non-square kernel");
  d.stride = opt.stride;
  d.pad = opt.pad;
  d.dil = opt.dilation;
  d.oh = conv_out_size(d.h, d.k, d.stride, d.pad, d.dil);
  d.ow = conv_out_size(d.w, d.k, d.stride, d.pad, d.dil);
  check(d.oh > 0 && d.ow > 0, "conv2d: empty output");
  if (b.defined())
    check(b.numel() == d.cout, "conv2d: bias size mismatch");

  const int kk = d.cin * d.k * d.k;
  const int64_t ohw = static_cast<int64_t>(d.oh) * d.ow;
  auto out = make_node({d.n, d.cout, d.oh, d.ow});
  const auto xv = x.data();
  const auto wv = w.data();
  double* col = col_scratch(static_cast<size_t>(kk) * ohw);
  for (int ni = 0; ni < d.n; ++ni) {
    im2col(xv.data() + static_cast<int64_t>(ni) * d.cin * d.h * d.w, d.cin, d.h,
           d.w, d.k, d.stride, d.pad, d.dil, d.oh, d.ow, col);
    gemm_rm(false, false, d.cout, static_cast<int>(ohw), kk, 1.0, wv.data(),
            col, 0.0, out->value.data() + static_cast<int64_t>(ni) * d.cout * ohw);
  }
  if (b.defined()) {
    const auto bv = b.data();
    for (int ni = 0; ni < d.n; ++ni)
      for (int c = 0; c < d.cout; ++c) {
        double* dst = out->value.data() + (static_cast<int64_t>(ni) * d.cout + c) * ohw;
        const double bias = bv[c];
        for (int64_t i = 0; i < ohw; ++i) dst[i] += bias;
      }
  }

  auto px = x.node(), pw = w.node(), pb = b.defined() ? b.node() : nullptr;
  return finish_op(out, {px, pw, pb}, [px, pw, pb, d, kk, ohw](Node& self) {
    double* col = col_scratch(static_cast<size_t>(kk) * ohw);
    if (pw->requires_grad) pw->ensure_grad();
    if (px->requires_grad) px->ensure_grad();
    for (int ni = 0; ni < d.n; ++ni) {
      const double* dy = self.grad.data() + static_cast<int64_t>(ni) * d.cout * ohw;
      if (pw->requires_grad) {
        im2col(px->value.data() + static_cast<int64_t>(ni) * d.cin * d.h * d.w,
               d.cin, d.h, d.w, d.k, d.stride, d.pad, d.dil, d.oh, d.ow, col);
        gemm_rm(false, true, d.cout, kk, static_cast<int>(ohw), 1.0, dy, col,
                1.0, pw->grad.data());
      }
      if (px->requires_grad) {
        gemm_rm(true, false, kk, static_cast<int>(ohw), d.cout, 1.0,
                pw->value.data(), dy, 0.0, col);
        col2im(col, d.cin, d.h, d.w, d.k, d.stride, d.pad, d.dil, d.oh, d.ow,
               px->grad.data() + static_cast<int64_t>(ni) * d.cin * d.h * d.w);
      }
    }
    if (pb && pb->requires_grad) {
      pb->ensure_grad();
      for (int ni = 0; ni < d.n; ++ni)
        for (int c = 0; c < d.cout; ++c) {
          const double* dy =
              self.grad.data() + (static_cast<int64_t>(ni) * d.cout + c) * ohw;
          double s = 0.0;
          for (int64_t i = 0; i < ohw; ++i) s += dy[i];
          pb->grad[c] += s;
        }
    }
  });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b,
                        int stride, int pad, int out_pad) {
  expect_4d(x, "conv_transpose2d input");
  expect_4d(w, "conv_transpose2d weight");
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  check(w.dim(0) == cin, "conv_transpose2d: weight/input channel mismatch");
  const int cout = w.dim(1), k = w.dim(2);
  const int oh = (h - 1) * stride - 2 * pad + k + out_pad;
  const int ow = (wd - 1) * stride - 2 * pad + k + out_pad;
  check(oh > 0 && ow > 0, "conv_transpose2d: empty output");
  if (b.defined()) check(b.numel() == cout, "conv_transpose2d: bias size mismatch");

  // col {cout*k*k, h*w} = W^T{cout*k*k, cin} * X{cin, h*w}; y = col2im(col).
  const int kk = cout * k * k;
  const int64_t ihw = static_cast<int64_t>(h) * wd;
  const int64_t ohw = static_cast<int64_t>(oh) * ow;
  auto out = make_node({n, cout, oh, ow});
  const auto xv = x.data();
  const auto wv = w.data();
  double* col = col_scratch(static_cast<size_t>(kk) * ihw);
  for (int ni = 0; ni < n; ++ni) {
    gemm_rm(true, false, kk, static_cast<int>(ihw), cin, 1.0, wv.data(),
            xv.data() + static_cast<int64_t>(ni) * cin * ihw, 0.0, col);
    col2im(col, cout, oh, ow, k, stride, pad, 1, h, wd,
           out->value.data() + static_cast<int64_t>(ni) * cout * ohw);
  }
  if (b.defined()) {
    const auto bv = b.data();
    for (int ni = 0; ni < n; ++ni)
      for (int c = 0; c < cout; ++c) {
        double* dst = out->value.data() + (static_cast<int64_t>(ni) * cout + c) * ohw;
        for (int64_t i = 0; i < ohw; ++i) dst[i] += bv[c];
      }
  }

  auto px = x.node(), pw = w.node(), pb = b.defined() ? b.node() : nullptr;
  return finish_op(
      out, {px, pw, pb},
      [px, pw, pb, n, cin, cout, h, wd, k, stride, pad, oh, ow, kk, ihw,
       ohw](Node& self) {
        double* col = col_scratch(static_cast<size_t>(kk) * ihw);
        if (px->requires_grad) px->ensure_grad();
        if (pw->requires_grad) pw->ensure_grad();
        for (int ni = 0; ni < n; ++ni) {
          const double* dy = self.grad.data() + static_cast<int64_t>(ni) * cout * ohw;
          // col_dy = im2col(dy) with the forward's (k, stride, pad).
          im2col(dy, cout, oh, ow, k, stride, pad, 1, h, wd, col);
          if (px->requires_grad) {
            gemm_rm(false, false, cin, static_cast<int>(ihw), kk, 1.0,
                    pw->value.data(), col, 1.0,
                    px->grad.data() + static_cast<int64_t>(ni) * cin * ihw);
          }
          if (pw->requires_grad) {
            gemm_rm(false, true, cin, kk, static_cast<int>(ihw), 1.0,
                    px->value.data() + static_cast<int64_t>(ni) * cin * ihw, col,
                    1.0, pw->grad.data());
          }
        }
        if (pb && pb->requires_grad) {
          pb->ensure_grad();
          for (int ni = 0; ni < n; ++ni)
            for (int c = 0; c < cout; ++c) {
              const double* dy =
                  self.grad.data() + (static_cast<int64_t>(ni) * cout + c) * ohw;
              double s = 0.0;
              for (int64_t i = 0; i < ohw; ++i) s += dy[i];
              pb->grad[c] += s;
            }
        }
      });
}

// ---- normalization ------------------------------------------------------

Tensor instance_norm(const Tensor& x, double eps) {
  expect_4d(x, "instance_norm");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t m = static_cast<int64_t>(h) * w;
  auto out = make_node(x.shape());
  std::vector<double> inv_sigma(static_cast<size_t>(n) * c);
  const auto xv = x.data();
  for (int i = 0; i < n * c; ++i) {
    const double* src = xv.data() + static_cast<int64_t>(i) * m;
    double mean = 0.0;
    for (int64_t j = 0; j < m; ++j) mean += src[j];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (int64_t j = 0; j < m; ++j) {
      const double d = src[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[static_cast<size_t>(i)] = is;
    double* dst = out->value.data() + static_cast<int64_t>(i) * m;
    for (int64_t j = 0; j < m; ++j) dst[j] = (src[j] - mean) * is;
  }
  auto px = x.node();
  return finish_op(out, {px}, [px, n, c, m, inv_sigma](Node& self) {
    px->ensure_grad();
    for (int i = 0; i < n * c; ++i) {
      const double* y = self.value.data() + static_cast<int64_t>(i) * m;
      const double* dy = self.grad.data() + static_cast<int64_t>(i) * m;
      double* dx = px->grad.data() + static_cast<int64_t>(i) * m;
      double mean_dy = 0.0, mean_dyy = 0.0;
      for (int64_t j = 0; j < m; ++j) {
        mean_dy += dy[j];
        mean_dyy += dy[j] * y[j];
      }
      mean_dy /= static_cast<double>(m);
      mean_dyy /= static_cast<double>(m);
      const double is = inv_sigma[static_cast<size_t>(i)];
      for (int64_t j = 0; j < m; ++j)
        dx[j] += is * (dy[j] - mean_dy - y[j] * mean_dyy);
    }
  });
}

Tensor channel_affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  expect_4d(x, "channel_affine");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  check(w.numel() == c && b.numel() == c, "channel_affine: parameter size mismatch");
  const int64_t m = static_cast<int64_t>(h) * wd;
  auto out = make_node(x.shape());
  const auto xv = x.data();
  const auto wv = w.data();
  const auto bv = b.data();
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      const double* src = xv.data() + (static_cast<int64_t>(ni) * c + ci) * m;
      double* dst = out->value.data() + (static_cast<int64_t>(ni) * c + ci) * m;
      for (int64_t j = 0; j < m; ++j) dst[j] = src[j] * wv[ci] + bv[ci];
    }
  auto px = x.node(), pw = w.node(), pb = b.node();
  return finish_op(out, {px, pw, pb}, [px, pw, pb, n, c, m](Node& self) {
    if (px->requires_grad) px->ensure_grad();
    if (pw->requires_grad) pw->ensure_grad();
    if (pb->requires_grad) pb->ensure_grad();
    for (int ni = 0; ni < n; ++ni)
      for (int ci = 0; ci < c; ++ci) {
        const int64_t off = (static_cast<int64_t>(ni) * c + ci) * m;
        const double* dy = self.grad.data() + off;
        if (px->requires_grad) {
          double* dx = px->grad.data() + off;
          const double wc = pw->value[ci];
          for (int64_t j = 0; j < m; ++j) dx[j] += dy[j] * wc;
        }
        if (pw->requires_grad) {
          const double* xv2 = px->value.data() + off;
          double s = 0.0;
          for (int64_t j = 0; j < m; ++j) s += dy[j] * xv2[j];
          pw->grad[ci] += s;
        }
        if (pb->requires_grad) {
          double s = 0.0;
          for (int64_t j = 0; j < m; ++j) s += dy[j];
          pb->grad[ci] += s;
        }
      }
  });
}

// ---- resampling ---------------------------------------------------------

Tensor upsample_nearest2(const Tensor& x) {
  expect_4d(x, "upsample_nearest2");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  auto out = make_node({n, c, h * 2, w * 2});
  const auto xv = x.data();
  for (int i = 0; i < n * c; ++i) {
    const double* src = xv.data() + static_cast<int64_t>(i) * h * w;
    double* dst = out->value.data() + static_cast<int64_t>(i) * h * w * 4;
    for (int y = 0; y < 2 * h; ++y) {
      const double* srow = src + static_cast<int64_t>(y / 2) * w;
      double* drow = dst + static_cast<int64_t>(y) * 2 * w;
      for (int xw = 0; xw < 2 * w; ++xw) drow[xw] = srow[xw / 2];
    }
  }
  auto px = x.node();
  return finish_op(out, {px}, [px, n, c, h, w](Node& self) {
    px->ensure_grad();
    for (int i = 0; i < n * c; ++i) {
      double* dx = px->grad.data() + static_cast<int64_t>(i) * h * w;
      const double* dy = self.grad.data() + static_cast<int64_t>(i) * h * w * 4;
      for (int y = 0; y < 2 * h; ++y) {
        double* drow = dx + static_cast<int64_t>(y / 2) * w;
        const double* srow = dy + static_cast<int64_t>(y) * 2 * w;
        for (int xw = 0; xw < 2 * w; ++xw) drow[xw / 2] += srow[xw];
      }
    }
  });
}

namespace {

struct BilinTap {
  int i0, i1;
  double f;  // weight of i1
};

std::vector<BilinTap> bilinear_taps(int in, int out) {
  std::vector<BilinTap> taps(static_cast<size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double s = (o + 0.5) * scale - 0.5;
    if (s < 0) s = 0;
    if (s > in - 1) s = in - 1;
    int i0 = static_cast<int>(std::floor(s));
    if (i0 > in - 1) i0 = in - 1;
    int i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<size_t>(o)] = {i0, i1, s - i0};
  }
  return taps;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, int oh, int ow) {
  expect_4d(x, "upsample_bilinear");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  auto ty = bilinear_taps(h, oh);
  auto tx = bilinear_taps(w, ow);
  auto out = make_node({n, c, oh, ow});
  const auto xv = x.data();
  for (int i = 0; i < n * c; ++i) {
    const double* src = xv.data() + static_cast<int64_t>(i) * h * w;
    double* dst = out->value.data() + static_cast<int64_t>(i) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const auto& yt = ty[static_cast<size_t>(y)];
      const double* r0 = src + static_cast<int64_t>(yt.i0) * w;
      const double* r1 = src + static_cast<int64_t>(yt.i1) * w;
      double* drow = dst + static_cast<int64_t>(y) * ow;
      for (int xo = 0; xo < ow; ++xo) {
        const auto& xt = tx[static_cast<size_t>(xo)];
        const double v0 = r0[xt.i0] * (1 - xt.f) + r0[xt.i1] * xt.f;
        const double v1 = r1[xt.i0] * (1 - xt.f) + r1[xt.i1] * xt.f;
        drow[xo] = v0 * (1 - yt.f) + v1 * yt.f;
      }
    }
  }
  auto px = x.node();
  return finish_op(out, {px}, [px, n, c, h, w, oh, ow, ty, tx](Node& self) {
    px->ensure_grad();
    for (int i = 0; i < n * c; ++i) {
      double* dx = px->grad.data() + static_cast<int64_t>(i) * h * w;
      const double* dy = self.grad.data() + static_cast<int64_t>(i) * oh * ow;
      for (int y = 0; y < oh; ++y) {
        const auto& yt = ty[static_cast<size_t>(y)];
        for (int xo = 0; xo < ow; ++xo) {
          const auto& xt = tx[static_cast<size_t>(xo)];
          const double g = dy[static_cast<int64_t>(y) * ow + xo];
          dx[static_cast<int64_t>(yt.i0) * w + xt.i0] += g * (1 - yt.f) * (1 - xt.f);
          dx[static_cast<int64_t>(yt.i0) * w + xt.i1] += g * (1 - yt.f) * xt.f;
          dx[static_cast<int64_t>(yt.i1) * w + xt.i0] += g * yt.f * (1 - xt.f);
          dx[static_cast<int64_t>(yt.i1) * w + xt.i1] += g * yt.f * xt.f;
        }
      }
    }
  });
}

Tensor adaptive_avg_pool(const Tensor& x, int oh, int ow) {
  expect_4d(x, "adaptive_avg_pool");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  auto out = make_node({n, c, oh, ow});
  auto bound = [](int o, int in, int outn) {
    return std::pair<int, int>{(o * in) / outn,
                               ((o + 1) * in + outn - 1) / outn};
  };
  const auto xv = x.data();
  for (int i = 0; i < n * c; ++i) {
    const double* src = xv.data() + static_cast<int64_t>(i) * h * w;
    double* dst = out->value.data() + static_cast<int64_t>(i) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      auto [y0, y1] = bound(oy, h, oh);
      for (int ox = 0; ox < ow; ++ox) {
        auto [x0, x1] = bound(ox, w, ow);
        double s = 0.0;
        for (int y = y0; y < y1; ++y)
          for (int xw = x0; xw < x1; ++xw) s += src[static_cast<int64_t>(y) * w + xw];
        dst[static_cast<int64_t>(oy) * ow + ox] =
            s / (static_cast<double>(y1 - y0) * (x1 - x0));
      }
    }
  }
  auto px = x.node();
  return finish_op(out, {px}, [px, n, c, h, w, oh, ow, bound](Node& self) {
    px->ensure_grad();
    for (int i = 0; i < n * c; ++i) {
      double* dx = px->grad.data() + static_cast<int64_t>(i) * h * w;
      const double* dy = self.grad.data() + static_cast<int64_t>(i) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        auto [y0, y1] = bound(oy, h, oh);
        for (int ox = 0; ox < ow; ++ox) {
          auto [x0, x1] = bound(ox, w, ow);
          const double g = dy[static_cast<int64_t>(oy) * ow + ox] /
                           (static_cast<double>(y1 - y0) * (x1 - x0));
          for (int y = y0; y < y1; ++y)
            for (int xw = x0; xw < x1; ++xw) dx[static_cast<int64_t>(y) * w + xw] += g;
        }
      }
    }
  });
}

// ---- softmax / cross-entropy -------------------------------------------

Tensor softmax_channels(const Tensor& x) {
  expect_4d(x, "softmax_channels");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t hw = static_cast<int64_t>(h) * w;
  auto out = make_node(x.shape());
  const auto xv = x.data();
  for (int ni = 0; ni < n; ++ni) {
    const double* src = xv.data() + static_cast<int64_t>(ni) * c * hw;
    double* dst = out->value.data() + static_cast<int64_t>(ni) * c * hw;
    for (int64_t j = 0; j < hw; ++j) {
      double mx = src[j];
      for (int ci = 1; ci < c; ++ci) mx = std::max(mx, src[ci * hw + j]);
      double denom = 0.0;
      for (int ci = 0; ci < c; ++ci) denom += std::exp(src[ci * hw + j] - mx);
      for (int ci = 0; ci < c; ++ci)
        dst[ci * hw + j] = std::exp(src[ci * hw + j] - mx) / denom;
    }
  }
  auto px = x.node();
  return finish_op(out, {px}, [px, n, c, hw](Node& self) {
    px->ensure_grad();
    for (int ni = 0; ni < n; ++ni) {
      const double* p = self.value.data() + static_cast<int64_t>(ni) * c * hw;
      const double* dy = self.grad.data() + static_cast<int64_t>(ni) * c * hw;
      double* dx = px->grad.data() + static_cast<int64_t>(ni) * c * hw;
      for (int64_t j = 0; j < hw; ++j) {
        double dot = 0.0;
        for (int ci = 0; ci < c; ++ci) dot += p[ci * hw + j] * dy[ci * hw + j];
        for (int ci = 0; ci < c; ++ci)
          dx[ci * hw + j] += p[ci * hw + j] * (dy[ci * hw + j] - dot);
      }
    }
  });
}

Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& labels) {
  expect_4d(logits, "cross_entropy_logits");
  const int n = logits.dim(0), c = logits.dim(1), h = logits.dim(2),
            w = logits.dim(3);
  const int64_t hw = static_cast<int64_t>(h) * w;
  check(static_cast<int64_t>(labels.size()) == static_cast<int64_t>(n) * hw,
        "cross_entropy_logits: label count mismatch");
  for (int lab : labels)
    check(lab >= 0 && lab < c, "cross_entropy_logits: class id " +
                                   std::to_string(lab) + " outside [0," +
                                   std::to_string(c) + ")");
  auto probs = std::make_shared<std::vector<double>>(
      static_cast<size_t>(logits.numel()));
  const auto xv = logits.data();
  double total = 0.0;
  for (int ni = 0; ni < n; ++ni) {
    const double* src = xv.data() + static_cast<int64_t>(ni) * c * hw;
    double* pp = probs->data() + static_cast<int64_t>(ni) * c * hw;
    for (int64_t j = 0; j < hw; ++j) {
      double mx = src[j];
      for (int ci = 1; ci < c; ++ci) mx = std::max(mx, src[ci * hw + j]);
      double denom = 0.0;
      for (int ci = 0; ci < c; ++ci) denom += std::exp(src[ci * hw + j] - mx);
      const double log_denom = std::log(denom);
      const int lab = labels[static_cast<size_t>(ni * hw + j)];
      total -= src[lab * hw + j] - mx - log_denom;
      for (int ci = 0; ci < c; ++ci)
        pp[ci * hw + j] = std::exp(src[ci * hw + j] - mx) / denom;
    }
  }
  const double inv = 1.0 / (static_cast<double>(n) * hw);
  auto out = make_node({1});
  out->value[0] = total * inv;
  auto px = logits.node();
  auto labs = std::make_shared<std::vector<int>>(labels);
  return finish_op(out, {px}, [px, probs, labs, n, c, hw, inv](Node& self) {
    px->ensure_grad();
    const double g = self.grad[0] * inv;
    for (int ni = 0; ni < n; ++ni) {
      const double* pp = probs->data() + static_cast<int64_t>(ni) * c * hw;
      double* dx = px->grad.data() + static_cast<int64_t>(ni) * c * hw;
      for (int64_t j = 0; j < hw; ++j) {
        const int lab = (*labs)[static_cast<size_t>(ni * hw + j)];
        for (int ci = 0; ci < c; ++ci) {
          const double delta = (ci == lab) ? 1.0 : 0.0;
          dx[ci * hw + j] += g * (pp[ci * hw + j] - delta);
        }
      }
    }
  });
}

// ---- warping ------------------------------------------------------------

Tensor warp_bilinear(const Tensor& img, const Tensor& flow) {
  expect_4d(img, "warp_bilinear image");
  expect_4d(flow, "warp_bilinear flow");
  const int n = img.dim(0), c = img.dim(1), h = img.dim(2), w = img.dim(3);
  check(flow.dim(0) == n && flow.dim(1) == 2 && flow.dim(2) == h &&
            flow.dim(3) == w,
        "warp_bilinear: flow must be {N,2,H,W} matching the image");
  const int64_t hw = static_cast<int64_t>(h) * w;
  auto out = make_node(img.shape());
  const auto iv = img.data();
  const auto fv = flow.data();
  for (int ni = 0; ni < n; ++ni) {
    const double* fx = fv.data() + static_cast<int64_t>(ni) * 2 * hw;
    const double* fy = fx + hw;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double sx = x + fx[static_cast<int64_t>(y) * w + x];
        double sy = y + fy[static_cast<int64_t>(y) * w + x];
        sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
        sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const int x1 = std::min(x0 + 1, w - 1);
        const int y1 = std::min(y0 + 1, h - 1);
        const double ax = sx - x0, ay = sy - y0;
        for (int ci = 0; ci < c; ++ci) {
          const double* src = iv.data() + (static_cast<int64_t>(ni) * c + ci) * hw;
          const double v =
              (1 - ay) * ((1 - ax) * src[static_cast<int64_t>(y0) * w + x0] +
                          ax * src[static_cast<int64_t>(y0) * w + x1]) +
              ay * ((1 - ax) * src[static_cast<int64_t>(y1) * w + x0] +
                    ax * src[static_cast<int64_t>(y1) * w + x1]);
          out->value[(static_cast<int64_t>(ni) * c + ci) * hw +
                     static_cast<int64_t>(y) * w + x] = v;
        }
      }
  }
  auto pimg = img.node();
  auto pflow = flow.node();
  return finish_op(out, {pimg}, [pimg, pflow, n, c, h, w, hw](Node& self) {
    pimg->ensure_grad();
    const double* fv = pflow->value.data();
    for (int ni = 0; ni < n; ++ni) {
      const double* fx = fv + static_cast<int64_t>(ni) * 2 * hw;
      const double* fy = fx + hw;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double sx = x + fx[static_cast<int64_t>(y) * w + x];
          double sy = y + fy[static_cast<int64_t>(y) * w + x];
          sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
          sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
          const int x0 = static_cast<int>(std::floor(sx));
          const int y0 = static_cast<int>(std::floor(sy));
          const int x1 = std::min(x0 + 1, w - 1);
          const int y1 = std::min(y0 + 1, h - 1);
          const double ax = sx - x0, ay = sy - y0;
          for (int ci = 0; ci < c; ++ci) {
            const double g = self.grad[(static_cast<int64_t>(ni) * c + ci) * hw +
                                       static_cast<int64_t>(y) * w + x];
            double* dst = pimg->grad.data() + (static_cast<int64_t>(ni) * c + ci) * hw;
            dst[static_cast<int64_t>(y0) * w + x0] += g * (1 - ay) * (1 - ax);
            dst[static_cast<int64_t>(y0) * w + x1] += g * (1 - ay) * ax;
            dst[static_cast<int64_t>(y1) * w + x0] += g * ay * (1 - ax);
            dst[static_cast<int64_t>(y1) * w + x1] += g * ay * ax;
          }
        }
    }
  });
}

Tensor replicate_pad(const Tensor& x, int p) {
  expect_4d(x, "replicate_pad");
  check(p >= 0, "replicate_pad: negative padding");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = h + 2 * p, ow = w + 2 * p;
  auto out = make_node({n, c, oh, ow});
  const auto xv = x.data();
  auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
  for (int i = 0; i < n * c; ++i) {
    const double* src = xv.data() + static_cast<int64_t>(i) * h * w;
    double* dst = out->value.data() + static_cast<int64_t>(i) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const int sy = clampi(y - p, 0, h - 1);
      for (int xw = 0; xw < ow; ++xw) {
        const int sx = clampi(xw - p, 0, w - 1);
        dst[static_cast<int64_t>(y) * ow + xw] = src[static_cast<int64_t>(sy) * w + sx];
      }
    }
  }
  auto px = x.node();
  return finish_op(out, {px}, [px, n, c, h, w, p, oh, ow](Node& self) {
    px->ensure_grad();
    auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
    for (int i = 0; i < n * c; ++i) {
      double* dx = px->grad.data() + static_cast<int64_t>(i) * h * w;
      const double* dy = self.grad.data() + static_cast<int64_t>(i) * oh * ow;
      for (int y = 0; y < oh; ++y) {
        const int sy = clampi(y - p, 0, h - 1);
        for (int xw = 0; xw < ow; ++xw) {
          const int sx = clampi(xw - p, 0, w - 1);
          dx[static_cast<int64_t>(sy) * w + sx] += dy[static_cast<int64_t>(y) * ow + xw];
        }
      }
    }
  });
}

// ---- gram ----------------------------------------------------------------

Tensor gram(const Tensor& x) {
  expect_4d(x, "gram");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t hw = static_cast<int64_t>(h) * w;
  const double norm = 1.0 / (static_cast<double>(c) * h * w);
  auto out = make_node({n, c, c});
  const auto xv = x.data();
  for (int ni = 0; ni < n; ++ni) {
    gemm_rm(false, true, c, c, static_cast<int>(hw), norm,
            xv.data() + static_cast<int64_t>(ni) * c * hw,
            xv.data() + static_cast<int64_t>(ni) * c * hw, 0.0,
            out->value.data() + static_cast<int64_t>(ni) * c * c);
  }
  auto px = x.node();
  return finish_op(out, {px}, [px, n, c, hw, norm](Node& self) {
    px->ensure_grad();
    // dF = (dG + dG^T) F * norm
    std::vector<double> sym(static_cast<size_t>(c) * c);
    for (int ni = 0; ni < n; ++ni) {
      const double* dg = self.grad.data() + static_cast<int64_t>(ni) * c * c;
      for (int i = 0; i < c; ++i)
        for (int j = 0; j < c; ++j)
          sym[static_cast<size_t>(i) * c + j] =
              (dg[static_cast<int64_t>(i) * c + j] + dg[static_cast<int64_t>(j) * c + i]) * norm;
      gemm_rm(false, false, c, static_cast<int>(hw), c, 1.0, sym.data(),
              px->value.data() + static_cast<int64_t>(ni) * c * hw, 1.0,
              px->grad.data() + static_cast<int64_t>(ni) * c * hw);
    }
  });
}

// ---- spectral normalization ----------------------------------------------

double spectral_sigma(const Tensor& w, const std::vector<double>& u,
                      const std::vector<double>& v) {
  const int rows = w.dim(0);
  const int cols = static_cast<int>(w.numel() / rows);
  check(static_cast<int>(u.size()) == rows && static_cast<int>(v.size()) == cols,
        "spectral_sigma: u/v size mismatch");
  const auto wv = w.data();
  double sigma = 0.0;
  for (int i = 0; i < rows; ++i) {
    double dot = 0.0;
    const double* row = wv.data() + static_cast<int64_t>(i) * cols;
    for (int j = 0; j < cols; ++j) dot += row[j] * v[static_cast<size_t>(j)];
    sigma += u[static_cast<size_t>(i)] * dot;
  }
  return sigma;
}

void power_iteration_step(const Tensor& w, std::vector<double>& u,
                          std::vector<double>& v) {
  const int rows = w.dim(0);
  const int cols = static_cast<int>(w.numel() / rows);
  const auto wv = w.data();
  // v <- normalize(W^T u)
  std::vector<double> nv(static_cast<size_t>(cols), 0.0);
  for (int i = 0; i < rows; ++i) {
    const double* row = wv.data() + static_cast<int64_t>(i) * cols;
    const double ui = u[static_cast<size_t>(i)];
    for (int j = 0; j < cols; ++j) nv[static_cast<size_t>(j)] += row[j] * ui;
  }
  double nrm = 0.0;
  for (double x : nv) nrm += x * x;
  nrm = std::sqrt(nrm) + 1e-12;
  for (auto& x : nv) x /= nrm;
  // u <- normalize(W v)
  std::vector<double> nu(static_cast<size_t>(rows), 0.0);
  for (int i = 0; i < rows; ++i) {
    const double* row = wv.data() + static_cast<int64_t>(i) * cols;
    double dot = 0.0;
    for (int j = 0; j < cols; ++j) dot += row[j] * nv[static_cast<size_t>(j)];
    nu[static_cast<size_t>(i)] = dot;
  }
  nrm = 0.0;
  for (double x : nu) nrm += x * x;
  nrm = std::sqrt(nrm) + 1e-12;
  for (auto& x : nu) x /= nrm;
  u = std::move(nu);
  v = std::move(nv);
}

Tensor spectral_scale(const Tensor& w, const std::vector<double>& u,
                      const std::vector<double>& v) {
  const double sigma = spectral_sigma(w, u, v);
  check(std::fabs(sigma) > 1e-12, "spectral_scale: vanishing sigma estimate");
  auto out = make_node(w.shape());
  const auto wv = w.data();
  const double inv = 1.0 / sigma;
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = wv[i] * inv;
  auto pw = w.node();
  auto uc = std::make_shared<std::vector<double>>(u);
  auto vc = std::make_shared<std::vector<double>>(v);
  return finish_op(out, {pw}, [pw, uc, vc, sigma](Node& self) {
    pw->ensure_grad();
    const int rows = pw->shape[0];
    const int cols = static_cast<int>(pw->value.size()) / rows;
    // y = W/sigma, sigma = u^T W v:
    // dW = dY/sigma - (sum(dY .* W) / sigma^2) * u v^T
    double dot = 0.0;
    for (size_t i = 0; i < self.grad.size(); ++i) dot += self.grad[i] * pw->value[i];
    const double inv = 1.0 / sigma;
    const double coeff = dot * inv * inv;
    for (int i = 0; i < rows; ++i) {
      const double ui = (*uc)[static_cast<size_t>(i)];
      double* gr = pw->grad.data() + static_cast<int64_t>(i) * cols;
      const double* dy = self.grad.data() + static_cast<int64_t>(i) * cols;
      for (int j = 0; j < cols; ++j)
        gr[j] += dy[j] * inv - coeff * ui * (*vc)[static_cast<size_t>(j)];
    }
  });
}

}  // namespace rdi
