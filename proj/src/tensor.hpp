#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

// Reverse-mode autodiff over dense double tensors (NCHW for conv ops).
// Graphs are dynamic: every op allocates a Node holding the value and a
// closure that scatters the node's gradient into its parents. Single
// threaded by design; determinism is part of the contract.

namespace rdi {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool shape_eq(const Shape& a, const Shape& b);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily by ensure_grad()
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad();
};

// RAII switch that disables graph recording (inference / data paths).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

class Tensor {
 public:
  Tensor() = default;

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int dim(int i) const;  // negative i counts from the back
  int64_t numel() const;
  bool requires_grad() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();  // leaf tensors only (params, buffers)
  std::span<const double> grad() const;
  bool has_grad() const;
  void zero_grad();
  void set_requires_grad(bool rg);  // leaf tensors only

  double item() const;

  // Leaf copy of the value; no graph history, no grad requirement.
  Tensor detach() const;
  Tensor clone_leaf(bool requires_grad) const;

  void backward() const;  // root must be scalar

  std::shared_ptr<Node> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<Node> n) { return Tensor(std::move(n)); }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;
};

// ---- factories ----------------------------------------------------------
Tensor zeros(Shape shape, bool requires_grad = false);
Tensor full(Shape shape, double v, bool requires_grad = false);
Tensor ones(Shape shape);
Tensor from_vec(Shape shape, std::vector<double> values, bool requires_grad = false);
Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0,
             bool requires_grad = false);
Tensor rand_uniform(Shape shape, std::mt19937_64& rng, double lo, double hi,
                    bool requires_grad = false);

// ---- elementwise --------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor elu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);
// Hard clamp to [0,1]; gradient passes where 0 <= x <= 1, zero outside.
Tensor clamp01_ste(const Tensor& a);

// ---- reductions ---------------------------------------------------------
Tensor mean_all(const Tensor& a);
Tensor sum_all(const Tensor& a);

// ---- structure ----------------------------------------------------------
Tensor concat_channels(const std::vector<Tensor>& xs);
Tensor slice_channels(const Tensor& x, int c0, int c1);

// ---- NN ops (NCHW) ------------------------------------------------------
struct ConvOpt {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
};

// w: {Cout, Cin, k, k}; b: {Cout} or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, ConvOpt opt);
// w: {Cin, Cout, k, k}; out = (H-1)*stride - 2*pad + k + out_pad.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b,
                        int stride, int pad, int out_pad);
Tensor instance_norm(const Tensor& x, double eps = 1e-5);
// y[n,c,h,w] = x[n,c,h,w] * w[c] + b[c]
Tensor channel_affine(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor upsample_nearest2(const Tensor& x);
Tensor upsample_bilinear(const Tensor& x, int oh, int ow);
Tensor adaptive_avg_pool(const Tensor& x, int oh, int ow);
Tensor softmax_channels(const Tensor& x);
// labels: one class id per (n,h,w), row-major; mean cross-entropy.
Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& labels);
// flow: {N,2,H,W} (dx, dy). Bilinear gather at (x+dx, y+dy) with border
// clamp. Differentiable w.r.t. img only; flow is treated as a constant.
Tensor warp_bilinear(const Tensor& img, const Tensor& flow);
Tensor replicate_pad(const Tensor& x, int p);
// {N,C,H,W} -> {N,C,C}; G = F F^T / (C*H*W), F = flattened per-sample map.
Tensor gram(const Tensor& x);
// w / sigma with sigma = u^T W v over the {Cout, rest} matricization of w.
// u, v are constants maintained by power iteration.
Tensor spectral_scale(const Tensor& w, const std::vector<double>& u,
                      const std::vector<double>& v);

// One power-iteration update of (u, v) on the current w value.
void power_iteration_step(const Tensor& w, std::vector<double>& u,
                          std::vector<double>& v);
double spectral_sigma(const Tensor& w, const std::vector<double>& u,
                      const std::vector<double>& v);

// Row-major dgemm: C = alpha * op(A) op(B) + beta * C.
void gemm_rm(bool ta, bool tb, int m, int n, int k, double alpha,
             const double* a, const double* b, double beta, double* c);

}  // namespace rdi
