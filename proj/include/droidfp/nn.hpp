#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace droidfp::nn {

// Dense buffers with explicit dimensions. Layouts:
//   sequence batch  x[N][C][L]  -> ((n*C + c)*L + l)
//   feature batch   x[N][D]     -> (n*D + d)
//   conv weights    W[Co][Ci][K], linear weights W[Out][In]

// ---------------------------------------------------------------------------
// 1-D convolution (cross-correlation), stride s, no padding.
// ---------------------------------------------------------------------------

inline std::size_t conv1d_out_len(std::size_t len, std::size_t kernel,
                                  std::size_t stride) {
  if (len < kernel) throw std::invalid_argument("conv1d: length < kernel");
  return (len - kernel) / stride + 1;
}

template <typename T>
void conv1d_forward(const std::vector<T>& x, std::size_t n, std::size_t ci,
                    std::size_t len, const std::vector<T>& w,
                    const std::vector<T>& b, std::size_t co, std::size_t k,
                    std::size_t stride, std::vector<T>& y) {
  const std::size_t lo = conv1d_out_len(len, k, stride);
  if (x.size() != n * ci * len || w.size() != co * ci * k || b.size() != co)
    throw std::invalid_argument("conv1d: shape mismatch");
  y.assign(n * co * lo, T(0));
  for (std::size_t in = 0; in < n; ++in) {
    for (std::size_t oc = 0; oc < co; ++oc) {
      T* yrow = y.data() + (in * co + oc) * lo;
      for (std::size_t p = 0; p < lo; ++p) yrow[p] = b[oc];
      for (std::size_t ic = 0; ic < ci; ++ic) {
        const T* xrow = x.data() + (in * ci + ic) * len;
        const T* wrow = w.data() + (oc * ci + ic) * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const T wv = wrow[kk];
          if (stride == 1) {
            const T* xs = xrow + kk;
            for (std::size_t p = 0; p < lo; ++p) yrow[p] += wv * xs[p];
          } else {
            for (std::size_t p = 0; p < lo; ++p)
              yrow[p] += wv * xrow[p * stride + kk];
          }
        }
      }
    }
  }
}

template <typename T>
void conv1d_backward(const std::vector<T>& grad_y, const std::vector<T>& x,
                     std::size_t n, std::size_t ci, std::size_t len,
                     const std::vector<T>& w, std::size_t co, std::size_t k,
                     std::size_t stride, std::vector<T>& grad_x,
                     std::vector<T>& grad_w, std::vector<T>& grad_b) {
  const std::size_t lo = conv1d_out_len(len, k, stride);
  grad_x.assign(n * ci * len, T(0));
  grad_w.assign(co * ci * k, T(0));
  grad_b.assign(co, T(0));
  for (std::size_t in = 0; in < n; ++in) {
    for (std::size_t oc = 0; oc < co; ++oc) {
      const T* gy = grad_y.data() + (in * co + oc) * lo;
      T acc = T(0);
      for (std::size_t p = 0; p < lo; ++p) acc += gy[p];
      grad_b[oc] += acc;
      for (std::size_t ic = 0; ic < ci; ++ic) {
        const T* xrow = x.data() + (in * ci + ic) * len;
        T* gxrow = grad_x.data() + (in * ci + ic) * len;
        const T* wrow = w.data() + (oc * ci + ic) * k;
        T* gwrow = grad_w.data() + (oc * ci + ic) * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
          T gw = T(0);
          const T wv = wrow[kk];
          if (stride == 1) {
            const T* xs = xrow + kk;
            T* gxs = gxrow + kk;
            for (std::size_t p = 0; p < lo; ++p) {
              gw += gy[p] * xs[p];
              gxs[p] += wv * gy[p];
            }
          } else {
            for (std::size_t p = 0; p < lo; ++p) {
              gw += gy[p] * xrow[p * stride + kk];
              gxrow[p * stride + kk] += wv * gy[p];
            }
          }
          gwrow[kk] += gw;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Batch normalization over [N, C, L]; statistics per channel.
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNormCache {
  std::vector<T> x_hat;
  std::vector<T> inv_std;  // per channel
  std::vector<T> mean;     // per channel
  std::size_t n = 0, c = 0, l = 0;
};

template <typename T>
struct BatchNorm1d {
  std::vector<T> gamma, beta;
  std::vector<T> running_mean, running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  explicit BatchNorm1d(std::size_t channels = 0)
      : gamma(channels, T(1)),
        beta(channels, T(0)),
        running_mean(channels, T(0)),
        running_var(channels, T(1)) {}

  std::size_t channels() const { return gamma.size(); }

  void forward_train(const std::vector<T>& x, std::size_t n, std::size_t l,
                     std::vector<T>& y, BatchNormCache<T>& cache) {
    const std::size_t c = channels();
    if (n < 2)
      throw std::invalid_argument(
          "batchnorm: training mode requires batch size >= 2");
    if (x.size() != n * c * l)
      throw std::invalid_argument("batchnorm: shape mismatch");
    y.resize(x.size());
    cache.x_hat.resize(x.size());
    cache.inv_std.resize(c);
    cache.mean.resize(c);
    cache.n = n;
    cache.c = c;
    cache.l = l;
    const T m = static_cast<T>(n * l);
    for (std::size_t ch = 0; ch < c; ++ch) {
      T mean = T(0);
      for (std::size_t in = 0; in < n; ++in) {
        const T* row = x.data() + (in * c + ch) * l;
        for (std::size_t p = 0; p < l; ++p) mean += row[p];
      }
      mean /= m;
      T var = T(0);
      for (std::size_t in = 0; in < n; ++in) {
        const T* row = x.data() + (in * c + ch) * l;
        for (std::size_t p = 0; p < l; ++p) {
          const T d = row[p] - mean;
          var += d * d;
        }
      }
      var /= m;
      const T inv_std = T(1) / std::sqrt(var + eps);
      cache.mean[ch] = mean;
      cache.inv_std[ch] = inv_std;
      running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * mean;
      running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * var;
      for (std::size_t in = 0; in < n; ++in) {
        const T* row = x.data() + (in * c + ch) * l;
        T* xh = cache.x_hat.data() + (in * c + ch) * l;
        T* yr = y.data() + (in * c + ch) * l;
        for (std::size_t p = 0; p < l; ++p) {
          xh[p] = (row[p] - mean) * inv_std;
          yr[p] = gamma[ch] * xh[p] + beta[ch];
        }
      }
    }
  }

  void forward_eval(const std::vector<T>& x, std::size_t n, std::size_t l,
                    std::vector<T>& y) const {
    const std::size_t c = channels();
    if (x.size() != n * c * l)
      throw std::invalid_argument("batchnorm: shape mismatch");
    y.resize(x.size());
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T inv_std = T(1) / std::sqrt(running_var[ch] + eps);
      const T mu = running_mean[ch];
      for (std::size_t in = 0; in < n; ++in) {
        const T* row = x.data() + (in * c + ch) * l;
        T* yr = y.data() + (in * c + ch) * l;
        for (std::size_t p = 0; p < l; ++p)
          yr[p] = gamma[ch] * (row[p] - mu) * inv_std + beta[ch];
      }
    }
  }

  void backward(const std::vector<T>& grad_y, const BatchNormCache<T>& cache,
                std::vector<T>& grad_x, std::vector<T>& grad_gamma,
                std::vector<T>& grad_beta) const {
    const std::size_t n = cache.n, c = cache.c, l = cache.l;
    const T m = static_cast<T>(n * l);
    grad_x.assign(grad_y.size(), T(0));
    grad_gamma.assign(c, T(0));
    grad_beta.assign(c, T(0));
    for (std::size_t ch = 0; ch < c; ++ch) {
      T sum_gy = T(0), sum_gy_xhat = T(0);
      for (std::size_t in = 0; in < n; ++in) {
        const T* gy = grad_y.data() + (in * c + ch) * l;
        const T* xh = cache.x_hat.data() + (in * c + ch) * l;
        for (std::size_t p = 0; p < l; ++p) {
          sum_gy += gy[p];
          sum_gy_xhat += gy[p] * xh[p];
        }
      }
      grad_beta[ch] = sum_gy;
      grad_gamma[ch] = sum_gy_xhat;
      const T scale = gamma[ch] * cache.inv_std[ch] / m;
      for (std::size_t in = 0; in < n; ++in) {
        const T* gy = grad_y.data() + (in * c + ch) * l;
        const T* xh = cache.x_hat.data() + (in * c + ch) * l;
        T* gx = grad_x.data() + (in * c + ch) * l;
        for (std::size_t p = 0; p < l; ++p)
          gx[p] = scale * (m * gy[p] - sum_gy - xh[p] * sum_gy_xhat);
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Global max pooling over the sequence axis: [N, C, L] -> [N, C].
// ---------------------------------------------------------------------------

template <typename T>
void global_max_pool_forward(const std::vector<T>& x, std::size_t n,
                             std::size_t c, std::size_t l, std::vector<T>& y,
                             std::vector<std::size_t>& argmax) {
  if (l == 0) throw std::invalid_argument("global_max_pool: empty axis");
  y.resize(n * c);
  argmax.resize(n * c);
  for (std::size_t i = 0; i < n * c; ++i) {
    const T* row = x.data() + i * l;
    std::size_t best = 0;
    for (std::size_t p = 1; p < l; ++p)
      if (row[p] > row[best]) best = p;
    y[i] = row[best];
    argmax[i] = best;
  }
}

template <typename T>
void global_max_pool_backward(const std::vector<T>& grad_y,
                              const std::vector<std::size_t>& argmax,
                              std::size_t n, std::size_t c, std::size_t l,
                              std::vector<T>& grad_x) {
  grad_x.assign(n * c * l, T(0));
  for (std::size_t i = 0; i < n * c; ++i)
    grad_x[i * l + argmax[i]] = grad_y[i];
}

// ---------------------------------------------------------------------------
// Linear layer: y = x W^T + b, x[N][In], W[Out][In].
// ---------------------------------------------------------------------------

template <typename T>
void linear_forward(const std::vector<T>& x, std::size_t n, std::size_t in,
                    const std::vector<T>& w, const std::vector<T>& b,
                    std::size_t out, std::vector<T>& y) {
  if (x.size() != n * in || w.size() != out * in || b.size() != out)
    throw std::invalid_argument("linear: shape mismatch");
  y.resize(n * out);
  for (std::size_t i = 0; i < n; ++i) {
    const T* xr = x.data() + i * in;
    T* yr = y.data() + i * out;
    for (std::size_t o = 0; o < out; ++o) {
      const T* wr = w.data() + o * in;
      T acc = b[o];
      for (std::size_t j = 0; j < in; ++j) acc += wr[j] * xr[j];
      yr[o] = acc;
    }
  }
}

template <typename T>
void linear_backward(const std::vector<T>& grad_y, const std::vector<T>& x,
                     std::size_t n, std::size_t in, const std::vector<T>& w,
                     std::size_t out, std::vector<T>& grad_x,
                     std::vector<T>& grad_w, std::vector<T>& grad_b) {
  grad_x.assign(n * in, T(0));
  grad_w.assign(out * in, T(0));
  grad_b.assign(out, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    const T* xr = x.data() + i * in;
    const T* gy = grad_y.data() + i * out;
    T* gx = grad_x.data() + i * in;
    for (std::size_t o = 0; o < out; ++o) {
      const T g = gy[o];
      grad_b[o] += g;
      const T* wr = w.data() + o * in;
      T* gw = grad_w.data() + o * in;
      for (std::size_t j = 0; j < in; ++j) {
        gw[j] += g * xr[j];
        gx[j] += g * wr[j];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise activations.
// ---------------------------------------------------------------------------

template <typename T>
void relu_forward(const std::vector<T>& x, std::vector<T>& y) {
  y.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(const std::vector<T>& grad_y, const std::vector<T>& x,
                   std::vector<T>& grad_x) {
  grad_x.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    grad_x[i] = x[i] > T(0) ? grad_y[i] : T(0);
}

template <typename T>
void tanh_forward(const std::vector<T>& x, std::vector<T>& y) {
  y.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
}

template <typename T>
void tanh_backward(const std::vector<T>& grad_y, const std::vector<T>& y,
                   std::vector<T>& grad_x) {
  grad_x.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    grad_x[i] = grad_y[i] * (T(1) - y[i] * y[i]);
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
void sigmoid_forward(const std::vector<T>& x, std::vector<T>& y) {
  y.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
}

template <typename T>
void sigmoid_backward(const std::vector<T>& grad_y, const std::vector<T>& y,
                      std::vector<T>& grad_x) {
  grad_x.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    grad_x[i] = grad_y[i] * y[i] * (T(1) - y[i]);
}

// Shift-invariant softmax over one vector.
template <typename T>
std::vector<T> softmax(const std::vector<T>& logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  const T mx = *std::max_element(logits.begin(), logits.end());
  std::vector<T> out(logits.size());
  T sum = T(0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

// ---------------------------------------------------------------------------
// Losses.
// ---------------------------------------------------------------------------

template <typename T>
T clamp_prob(T p) {
  const T lo = T(1e-7);
  return std::min(std::max(p, lo), T(1) - lo);
}

// loss(y, p) = -(y log p + (1-y) log(1-p)), p clamped to [1e-7, 1-1e-7].
template <typename T>
T log_loss(int y, T p) {
  p = clamp_prob(p);
  return y != 0 ? -std::log(p) : -std::log(T(1) - p);
}

// d loss / d p (zero outside the clamp band, matching the clamped forward).
template <typename T>
T log_loss_grad(int y, T p) {
  const T lo = T(1e-7);
  if (p < lo || p > T(1) - lo) return T(0);
  return y != 0 ? -T(1) / p : T(1) / (T(1) - p);
}

template <typename T>
T squared_error(const std::vector<T>& target, const std::vector<T>& recon) {
  if (target.size() != recon.size())
    throw std::invalid_argument("squared_error: size mismatch");
  T acc = T(0);
  for (std::size_t i = 0; i < target.size(); ++i) {
    const T d = recon[i] - target[i];
    acc += d * d;
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Adam with bias correction; one optimizer state per model.
// ---------------------------------------------------------------------------

template <typename T>
struct AdamState {
  T lr = T(3e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m, v;

  void init(const std::vector<std::vector<T>*>& params) {
    m.clear();
    v.clear();
    for (auto* p : params) {
      m.emplace_back(p->size(), T(0));
      v.emplace_back(p->size(), T(0));
    }
    step = 0;
  }

  void apply(const std::vector<std::vector<T>*>& params,
             const std::vector<const std::vector<T>*>& grads) {
    if (m.size() != params.size() || grads.size() != params.size())
      throw std::invalid_argument("adam: state/parameter mismatch");
    ++step;
    const T bc1 = T(1) - std::pow(beta1, static_cast<T>(step));
    const T bc2 = T(1) - std::pow(beta2, static_cast<T>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i];
      const auto& g = *grads[i];
      auto& mi = m[i];
      auto& vi = v[i];
      if (p.size() != g.size() || p.size() != mi.size())
        throw std::invalid_argument("adam: buffer size mismatch");
      for (std::size_t j = 0; j < p.size(); ++j) {
        mi[j] = beta1 * mi[j] + (T(1) - beta1) * g[j];
        vi[j] = beta2 * vi[j] + (T(1) - beta2) * g[j] * g[j];
        const T mhat = mi[j] / bc1;
        const T vhat = vi[j] / bc2;
        p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
};

// Kaiming-style init helper used by the model builders.
template <typename T, typename RngT>
void init_uniform(std::vector<T>& w, std::size_t fan_in, RngT& rng) {
  const T bound = std::sqrt(T(1) / static_cast<T>(fan_in));
  for (auto& v : w)
    v = static_cast<T>((rng.real() * 2.0 - 1.0)) * bound;
}

}  // namespace droidfp::nn
