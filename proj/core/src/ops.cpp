#include "cardioseq/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cardioseq {

void set_compute_threads(std::size_t threads) {
  if (threads == 0) throw ConfigError("thread count must be at least 1");
#ifdef CARDIOSEQ_OPENBLAS
  openblas_set_num_threads(static_cast<int>(threads));
#endif
}

namespace {

template <typename T>
using NodeT = detail::Node<T>;

template <typename T>
std::span<T> grad_if(NodeT<T>& n) {
  return n.requires_grad ? n.grad_buffer() : std::span<T>{};
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda, const float* b,
          int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans, m, n, k,
              alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda, const double* b,
          int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans, m, n, k,
              alpha, a, lda, b, ldb, beta, c, ldc);
}

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw ShapeError(std::string(what) + " must have rank " + std::to_string(rank) + ", got " + to_string(s));
  }
}

Dims3 spatial(const Shape& s) { return {s[1], s[2], s[3]}; }

struct ConvGeometry {
  std::size_t channels_in;
  Dims3 in;
  Dims3 kernel;
  Dims3 out;
  ConvSpec spec;

  std::size_t col_rows() const { return channels_in * kernel.product(); }
  std::size_t col_cols() const { return out.product(); }
  bool is_pointwise() const {
    return kernel.product() == 1 && spec.stride == Dims3{1, 1, 1} && spec.padding == Dims3{0, 0, 0};
  }
};

// Range [lo, hi) of output positions whose input coordinate o*stride - pad + k
// lies inside [0, n).
std::pair<std::size_t, std::size_t> valid_range(std::size_t n, std::size_t out, std::size_t stride, std::size_t pad,
                                                std::size_t k) {
  const long long offset = static_cast<long long>(k) - static_cast<long long>(pad);
  long long lo = 0;
  if (offset < 0) lo = (-offset + static_cast<long long>(stride) - 1) / static_cast<long long>(stride);
  const long long last = static_cast<long long>(n) - 1 - offset;
  long long hi = last < 0 ? 0 : last / static_cast<long long>(stride) + 1;
  hi = std::min<long long>(hi, static_cast<long long>(out));
  lo = std::min(lo, hi);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const auto& [D, H, W] = g.in;
  const auto& [Do, Ho, Wo] = g.out;
  const auto& st = g.spec.stride;
  const auto& pd = g.spec.padding;
  const std::size_t plane = Ho * Wo;
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels_in; ++c) {
    const T* xc = x + c * D * H * W;
    for (std::size_t a = 0; a < g.kernel.d; ++a) {
      const auto [dlo, dhi] = valid_range(D, Do, st.d, pd.d, a);
      for (std::size_t b = 0; b < g.kernel.h; ++b) {
        const auto [hlo, hhi] = valid_range(H, Ho, st.h, pd.h, b);
        for (std::size_t e = 0; e < g.kernel.w; ++e, ++row) {
          const auto [wlo, whi] = valid_range(W, Wo, st.w, pd.w, e);
          T* dst = col + row * Do * plane;
          std::fill(dst, dst + Do * plane, T(0));
          for (std::size_t od = dlo; od < dhi; ++od) {
            const std::size_t id = od * st.d + a - pd.d;
            for (std::size_t oh = hlo; oh < hhi; ++oh) {
              const std::size_t ih = oh * st.h + b - pd.h;
              const T* src = xc + (id * H + ih) * W;
              T* out = dst + od * plane + oh * Wo;
              if (st.w == 1) {
                const std::size_t iw0 = wlo + e - pd.w;
                std::copy(src + iw0, src + iw0 + (whi - wlo), out + wlo);
              } else {
                for (std::size_t ow = wlo; ow < whi; ++ow) out[ow] = src[ow * st.w + e - pd.w];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* dx) {
  const auto& [D, H, W] = g.in;
  const auto& [Do, Ho, Wo] = g.out;
  const auto& st = g.spec.stride;
  const auto& pd = g.spec.padding;
  const std::size_t plane = Ho * Wo;
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels_in; ++c) {
    T* xc = dx + c * D * H * W;
    for (std::size_t a = 0; a < g.kernel.d; ++a) {
      const auto [dlo, dhi] = valid_range(D, Do, st.d, pd.d, a);
      for (std::size_t b = 0; b < g.kernel.h; ++b) {
        const auto [hlo, hhi] = valid_range(H, Ho, st.h, pd.h, b);
        for (std::size_t e = 0; e < g.kernel.w; ++e, ++row) {
          const auto [wlo, whi] = valid_range(W, Wo, st.w, pd.w, e);
          const T* src_row = col + row * Do * plane;
          for (std::size_t od = dlo; od < dhi; ++od) {
            const std::size_t id = od * st.d + a - pd.d;
            for (std::size_t oh = hlo; oh < hhi; ++oh) {
              const std::size_t ih = oh * st.h + b - pd.h;
              T* dst = xc + (id * H + ih) * W;
              const T* src = src_row + od * plane + oh * Wo;
              for (std::size_t ow = wlo; ow < whi; ++ow) dst[ow * st.w + e - pd.w] += src[ow];
            }
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> conv_impl(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>* bias, const ConvSpec& spec) {
  require_rank(input.shape(), 4, "conv input");
  require_rank(kernel.shape(), 5, "conv kernel");
  const auto& ks = kernel.shape();
  if (ks[1] != input.extent(0)) {
    throw ShapeError("conv channel mismatch: input " + to_string(input.shape()) + " vs kernel " + to_string(ks));
  }
  if (ks[2] % 2 == 0 || ks[3] % 2 == 0 || ks[4] % 2 == 0) {
    throw ShapeError("conv kernel spatial extents must be odd, got " + to_string(ks));
  }
  if (spec.stride.d == 0 || spec.stride.h == 0 || spec.stride.w == 0) {
    throw ShapeError("conv stride must be >= 1, got " + to_string(spec.stride));
  }
  if (bias) {
    if (bias->rank() != 1 || bias->extent(0) != ks[0]) {
      throw ShapeError("conv bias shape " + to_string(bias->shape()) + " does not match kernel " + to_string(ks));
    }
  }
  ConvGeometry g;
  g.channels_in = input.extent(0);
  g.in = spatial(input.shape());
  g.kernel = {ks[2], ks[3], ks[4]};
  g.spec = spec;
  g.out = {conv_output_extent(g.in.d, g.kernel.d, spec.stride.d, spec.padding.d),
           conv_output_extent(g.in.h, g.kernel.h, spec.stride.h, spec.padding.h),
           conv_output_extent(g.in.w, g.kernel.w, spec.stride.w, spec.padding.w)};

  const std::size_t cout = ks[0];
  const std::size_t K = g.col_rows();
  const std::size_t P = g.col_cols();

  std::vector<T> out(cout * P);
  std::vector<T> col;
  const T* colp = input.data().data();
  if (!g.is_pointwise()) {
    col.resize(K * P);
    im2col(input.data().data(), g, col.data());
    colp = col.data();
  }
  gemm(false, false, static_cast<int>(cout), static_cast<int>(P), static_cast<int>(K), T(1), kernel.data().data(),
       static_cast<int>(K), colp, static_cast<int>(P), T(0), out.data(), static_cast<int>(P));
  if (bias) {
    const auto b = bias->data();
    for (std::size_t o = 0; o < cout; ++o) {
      T* row = out.data() + o * P;
      for (std::size_t p = 0; p < P; ++p) row[p] += b[o];
    }
  }

  std::vector<Tensor<T>> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  return make_result<T>(
      "conv", {cout, g.out.d, g.out.h, g.out.w}, std::move(out), inputs, [g, cout, K, P](NodeT<T>& self) {
        auto& x = *self.inputs[0];
        auto& w = *self.inputs[1];
        const T* dy = self.grad.data();
        std::vector<T> col;
        const T* colp = x.value.data();
        if (!g.is_pointwise() && w.requires_grad) {
          col.resize(K * P);
          im2col(x.value.data(), g, col.data());
          colp = col.data();
        }
        if (w.requires_grad) {
          gemm(false, true, static_cast<int>(cout), static_cast<int>(K), static_cast<int>(P), T(1), dy,
               static_cast<int>(P), colp, static_cast<int>(P), T(1), w.grad_buffer().data(), static_cast<int>(K));
        }
        if (x.requires_grad) {
          auto dx = x.grad_buffer();
          if (g.is_pointwise()) {
            gemm(true, false, static_cast<int>(K), static_cast<int>(P), static_cast<int>(cout), T(1),
                 w.value.data(), static_cast<int>(K), dy, static_cast<int>(P), T(1), dx.data(), static_cast<int>(P));
          } else {
            if (col.empty()) col.resize(K * P);
            gemm(true, false, static_cast<int>(K), static_cast<int>(P), static_cast<int>(cout), T(1),
                 w.value.data(), static_cast<int>(K), dy, static_cast<int>(P), T(0), col.data(),
                 static_cast<int>(P));
            col2im(col.data(), g, dx.data());
          }
        }
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
          auto db = self.inputs[2]->grad_buffer();
          for (std::size_t o = 0; o < cout; ++o) {
            const T* row = dy + o * P;
            T acc = 0;
            for (std::size_t p = 0; p < P; ++p) acc += row[p];
            db[o] += acc;
          }
        }
      });
}

enum class BinaryOp { add, sub, mul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinaryOp op) {
  static constexpr const char* names[] = {"add", "sub", "mul"};
  const char* name = names[static_cast<int>(op)];
  const bool same = a.shape() == b.shape();
  const bool b_scalar = !same && b.numel() == 1;
  const bool a_scalar = !same && !b_scalar && a.numel() == 1;
  if (!same && !a_scalar && !b_scalar) {
    throw ShapeError(std::string(name) + " shape mismatch: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const Shape& out_shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = numel(out_shape);
  const auto av = a.data();
  const auto bv = b.data();
  const std::size_t sa = a_scalar ? 0 : 1;
  const std::size_t sb = b_scalar ? 0 : 1;
  std::vector<T> out(n);
  switch (op) {
    case BinaryOp::add:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i * sa] + bv[i * sb];
      break;
    case BinaryOp::sub:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i * sa] - bv[i * sb];
      break;
    case BinaryOp::mul:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i * sa] * bv[i * sb];
      break;
  }
  return make_result<T>(name, out_shape, std::move(out), {a, b}, [op, n, sa, sb](NodeT<T>& self) {
    auto& an = *self.inputs[0];
    auto& bn = *self.inputs[1];
    const auto& g = self.grad;
    if (an.requires_grad) {
      auto ga = an.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        ga[i * sa] += op == BinaryOp::mul ? g[i] * bn.value[i * sb] : g[i];
      }
    }
    if (bn.requires_grad) {
      auto gb = bn.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        switch (op) {
          case BinaryOp::add: gb[i * sb] += g[i]; break;
          case BinaryOp::sub: gb[i * sb] -= g[i]; break;
          case BinaryOp::mul: gb[i * sb] += g[i] * an.value[i * sa]; break;
        }
      }
    }
  });
}

// Unary op whose derivative is expressed through input x and output y.
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const char* name, const Tensor<T>& a, Fwd fwd, Deriv deriv) {
  const auto av = a.data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return make_result<T>(name, a.shape(), std::move(out), {a}, [deriv](NodeT<T>& self) {
    auto& in = *self.inputs[0];
    auto g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(in.value[i], self.value[i]);
  });
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

void check_factors(const Dims3& f, const char* what) {
  if (f.d == 0 || f.h == 0 || f.w == 0) throw ShapeError(std::string(what) + " factors must be >= 1, got " + to_string(f));
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  const std::size_t padded = in + 2 * pad;
  if (padded < kernel) {
    throw ShapeError("padded extent " + std::to_string(padded) + " is smaller than kernel extent " +
                     std::to_string(kernel));
  }
  if ((padded - kernel) % stride != 0) {
    throw ShapeError("non-integer conv output extent: (" + std::to_string(in) + " + 2*" + std::to_string(pad) + " - " +
                     std::to_string(kernel) + ") is not divisible by stride " + std::to_string(stride));
  }
  return (padded - kernel) / stride + 1;
}

template <typename T>
Tensor<T> conv(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, const ConvSpec& spec) {
  return conv_impl(input, kernel, &bias, spec);
}

template <typename T>
Tensor<T> conv(const Tensor<T>& input, const Tensor<T>& kernel, const ConvSpec& spec) {
  return conv_impl<T>(input, kernel, nullptr, spec);
}

template <typename T>
Tensor<T> max_pool(const Tensor<T>& input, const Dims3& f) {
  require_rank(input.shape(), 4, "max_pool input");
  check_factors(f, "max_pool");
  const std::size_t C = input.extent(0);
  const Dims3 in = spatial(input.shape());
  if (in.d % f.d || in.h % f.h || in.w % f.w) {
    throw ShapeError("max_pool extents " + to_string(in) + " are not divisible by factors " + to_string(f));
  }
  const Dims3 out{in.d / f.d, in.h / f.h, in.w / f.w};
  const auto x = input.data();
  std::vector<T> y(C * out.product());
  std::vector<std::size_t> argmax(y.size());
  std::size_t o = 0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t od = 0; od < out.d; ++od) {
      for (std::size_t oh = 0; oh < out.h; ++oh) {
        for (std::size_t ow = 0; ow < out.w; ++ow, ++o) {
          std::size_t best = 0;
          T best_v = -std::numeric_limits<T>::infinity();
          bool first = true;
          for (std::size_t a = 0; a < f.d; ++a) {
            for (std::size_t b = 0; b < f.h; ++b) {
              for (std::size_t e = 0; e < f.w; ++e) {
                const std::size_t idx = ((c * in.d + od * f.d + a) * in.h + oh * f.h + b) * in.w + ow * f.w + e;
                if (first || x[idx] > best_v) {
                  best_v = x[idx];
                  best = idx;
                  first = false;
                }
              }
            }
          }
          y[o] = best_v;
          argmax[o] = best;
        }
      }
    }
  }
  return make_result<T>("max_pool", {C, out.d, out.h, out.w}, std::move(y), {input},
                        [argmax = std::move(argmax)](NodeT<T>& self) {
                          auto g = self.inputs[0]->grad_buffer();
                          for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += self.grad[i];
                        });
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& input, const Dims3& f) {
  require_rank(input.shape(), 4, "upsample input");
  check_factors(f, "upsample");
  const std::size_t C = input.extent(0);
  const Dims3 in = spatial(input.shape());
  const Dims3 out{in.d * f.d, in.h * f.h, in.w * f.w};
  const auto x = input.data();
  std::vector<T> y(C * out.product());
  std::size_t o = 0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t d = 0; d < out.d; ++d) {
      for (std::size_t h = 0; h < out.h; ++h) {
        const T* src = x.data() + ((c * in.d + d / f.d) * in.h + h / f.h) * in.w;
        for (std::size_t w = 0; w < out.w; ++w, ++o) y[o] = src[w / f.w];
      }
    }
  }
  return make_result<T>("upsample_nearest", {C, out.d, out.h, out.w}, std::move(y), {input},
                        [C, in, out, f](NodeT<T>& self) {
                          auto g = self.inputs[0]->grad_buffer();
                          std::size_t o = 0;
                          for (std::size_t c = 0; c < C; ++c) {
                            for (std::size_t d = 0; d < out.d; ++d) {
                              for (std::size_t h = 0; h < out.h; ++h) {
                                T* dst = g.data() + ((c * in.d + d / f.d) * in.h + h / f.h) * in.w;
                                for (std::size_t w = 0; w < out.w; ++w, ++o) dst[w / f.w] += self.grad[o];
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryOp::add);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryOp::sub);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryOp::mul);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary<T>(
      "scale", a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary<T>(
      "relu", a, [](T x) { return x > 0 ? x : T(0); }, [](T x, T) { return x > 0 ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary<T>(
      "sigmoid", a, [](T x) { return stable_sigmoid(x); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return unary<T>(
      "tanh", a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  return unary<T>(
      "neg", a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  for (auto v : a.data()) {
    if (!(v > 0)) throw ValueError("log of non-positive value " + std::to_string(v));
  }
  return unary<T>(
      "log", a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != b.rank() || !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
    throw ShapeError("concat_channels spatial mismatch: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[0] += b.extent(0);
  std::vector<T> out;
  out.reserve(a.numel() + b.numel());
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  const std::size_t na = a.numel();
  return make_result<T>("concat_channels", std::move(out_shape), std::move(out), {a, b}, [na](NodeT<T>& self) {
    auto& an = *self.inputs[0];
    auto& bn = *self.inputs[1];
    if (an.requires_grad) {
      auto g = an.grad_buffer();
      for (std::size_t i = 0; i < na; ++i) g[i] += self.grad[i];
    }
    if (bn.requires_grad) {
      auto g = bn.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[na + i];
    }
  });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& a, std::size_t begin, std::size_t count) {
  if (count == 0 || begin + count > a.extent(0)) {
    throw ShapeError("slice_channels [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for shape " + to_string(a.shape()));
  }
  const std::size_t plane = a.numel() / a.extent(0);
  Shape out_shape = a.shape();
  out_shape[0] = count;
  const auto first = a.data().begin() + static_cast<std::ptrdiff_t>(begin * plane);
  std::vector<T> out(first, first + static_cast<std::ptrdiff_t>(count * plane));
  const std::size_t offset = begin * plane;
  return make_result<T>("slice_channels", std::move(out_shape), std::move(out), {a}, [offset](NodeT<T>& self) {
    auto g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[offset + i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits) {
  const std::size_t C = logits.extent(0);
  if (C < 2) throw ShapeError("softmax_channels needs at least 2 channels, got " + to_string(logits.shape()));
  const std::size_t V = logits.numel() / C;
  const auto x = logits.data();
  std::vector<T> y(x.size());
  for (std::size_t v = 0; v < V; ++v) {
    T m = x[v];
    for (std::size_t c = 1; c < C; ++c) m = std::max(m, x[c * V + v]);
    T s = 0;
    for (std::size_t c = 0; c < C; ++c) {
      y[c * V + v] = std::exp(x[c * V + v] - m);
      s += y[c * V + v];
    }
    for (std::size_t c = 0; c < C; ++c) y[c * V + v] /= s;
  }
  return make_result<T>("softmax_channels", logits.shape(), std::move(y), {logits}, [C, V](NodeT<T>& self) {
    auto g = self.inputs[0]->grad_buffer();
    const auto& y = self.value;
    const auto& dy = self.grad;
    for (std::size_t v = 0; v < V; ++v) {
      T dot = 0;
      for (std::size_t c = 0; c < C; ++c) dot += dy[c * V + v] * y[c * V + v];
      for (std::size_t c = 0; c < C; ++c) g[c * V + v] += y[c * V + v] * (dy[c * V + v] - dot);
    }
  });
}

template <typename T>
Tensor<T> instance_norm(const Tensor<T>& a, T eps) {
  const std::size_t C = a.extent(0);
  const std::size_t V = a.numel() / C;
  const auto x = a.data();
  std::vector<T> y(x.size());
  std::vector<T> inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    const T* xc = x.data() + c * V;
    T m = 0;
    for (std::size_t v = 0; v < V; ++v) m += xc[v];
    m /= static_cast<T>(V);
    T var = 0;
    for (std::size_t v = 0; v < V; ++v) var += (xc[v] - m) * (xc[v] - m);
    var /= static_cast<T>(V);
    inv_std[c] = T(1) / std::sqrt(var + eps);
    for (std::size_t v = 0; v < V; ++v) y[c * V + v] = (xc[v] - m) * inv_std[c];
  }
  return make_result<T>("instance_norm", a.shape(), std::move(y), {a},
                        [C, V, inv_std = std::move(inv_std)](NodeT<T>& self) {
                          auto g = self.inputs[0]->grad_buffer();
                          const auto& y = self.value;
                          const auto& dy = self.grad;
                          for (std::size_t c = 0; c < C; ++c) {
                            T mean_dy = 0;
                            T mean_dy_y = 0;
                            for (std::size_t v = 0; v < V; ++v) {
                              mean_dy += dy[c * V + v];
                              mean_dy_y += dy[c * V + v] * y[c * V + v];
                            }
                            mean_dy /= static_cast<T>(V);
                            mean_dy_y /= static_cast<T>(V);
                            for (std::size_t v = 0; v < V; ++v) {
                              const std::size_t i = c * V + v;
                              g[i] += inv_std[c] * (dy[i] - mean_dy - y[i] * mean_dy_y);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = 0;
  for (auto v : a.data()) s += v;
  return make_result<T>("sum", {1}, {s}, {a}, [](NodeT<T>& self) {
    auto g = self.inputs[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  T s = 0;
  for (auto v : a.data()) s += v;
  const T n = static_cast<T>(a.numel());
  return make_result<T>("mean", {1}, {s / n}, {a}, [n](NodeT<T>& self) {
    auto g = self.inputs[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0] / n;
  });
}

#define CARDIOSEQ_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> conv(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const ConvSpec&);     \
  template Tensor<T> conv(const Tensor<T>&, const Tensor<T>&, const ConvSpec&);                       \
  template Tensor<T> max_pool(const Tensor<T>&, const Dims3&);                                        \
  template Tensor<T> upsample_nearest(const Tensor<T>&, const Dims3&);                                \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> scale(const Tensor<T>&, T);                                                      \
  template Tensor<T> relu(const Tensor<T>&);                                                          \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                       \
  template Tensor<T> tanh(const Tensor<T>&);                                                          \
  template Tensor<T> neg(const Tensor<T>&);                                                           \
  template Tensor<T> log(const Tensor<T>&);                                                           \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> slice_channels(const Tensor<T>&, std::size_t, std::size_t);                      \
  template Tensor<T> softmax_channels(const Tensor<T>&);                                              \
  template Tensor<T> instance_norm(const Tensor<T>&, T);                                              \
  template Tensor<T> sum(const Tensor<T>&);                                                           \
  template Tensor<T> mean(const Tensor<T>&);

CARDIOSEQ_INSTANTIATE_OPS(float)
CARDIOSEQ_INSTANTIATE_OPS(double)

#undef CARDIOSEQ_INSTANTIATE_OPS

}  // namespace cardioseq
