#include "hingenet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

namespace hingenet {

namespace {

thread_local bool g_grad_enabled = true;

constexpr double kBceClamp = 1e-7;
constexpr double kLayernormEpsilon = 1e-5;

void require(bool cond, const std::string& msg) {
  if (!cond) throw_invalid(msg);
}

bool track(std::initializer_list<const TensorPtr*> inputs) {
  if (!g_grad_enabled) return false;
  for (const TensorPtr* p : inputs) {
    if (*p && (*p)->requires_grad) return true;
  }
  return false;
}

}  // namespace

std::string Shape::str() const {
  return "(" + std::to_string(b) + ", " + std::to_string(c) + ", " + std::to_string(t) + ")";
}

TensorPtr Tensor::create(Shape shape) {
  require(shape.b >= 1 && shape.c >= 1 && shape.t >= 1,
          "tensor shape must be positive, got " + shape.str());
  auto t = std::make_shared<Tensor>();
  t->shape = shape;
  t->data.assign(static_cast<size_t>(shape.size()), 0.0);
  return t;
}

TensorPtr Tensor::create(Shape shape, std::vector<double> values) {
  require(static_cast<int64_t>(values.size()) == shape.size(),
          "value count does not match shape " + shape.str());
  auto t = create(shape);
  t->data = std::move(values);
  return t;
}

TensorPtr Tensor::scalar(double v) { return create({1, 1, 1}, {v}); }

void Tensor::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() { grad.assign(data.size(), 0.0); }

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// --- conv1d ---------------------------------------------------------------

TensorPtr conv1d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& bias,
                 int64_t dilation, Axis axis) {
  require(x != nullptr && w != nullptr, "conv1d: null input");
  require(dilation >= 1, "conv1d: dilation must be >= 1, got " + std::to_string(dilation));
  const int64_t k = w->shape.t;
  require(k >= 1 && k % 2 == 1, "conv1d: kernel size must be odd, got " + std::to_string(k));
  const int64_t half = k / 2;

  TensorPtr out;
  if (axis == Axis::time) {
    require(x->shape.t >= 1, "conv1d: time axis is empty");
    require(w->shape.c == x->shape.c,
            "conv1d: kernel input channels " + std::to_string(w->shape.c) +
                " do not match input channels " + std::to_string(x->shape.c));
    const int64_t co = w->shape.b, ci = x->shape.c, t = x->shape.t, b = x->shape.b;
    if (bias) require(bias->shape == Shape{1, co, 1}, "conv1d: bias shape mismatch");
    out = Tensor::create({b, co, t});
    for (int64_t bi = 0; bi < b; ++bi) {
      for (int64_t o = 0; o < co; ++o) {
        double* dst = &out->at(bi, o, 0);
        if (bias) {
          const double bv = bias->data[o];
          for (int64_t u = 0; u < t; ++u) dst[u] = bv;
        }
        for (int64_t c = 0; c < ci; ++c) {
          const double* src = &x->at(bi, c, 0);
          for (int64_t j = 0; j < k; ++j) {
            const double wv = w->at(o, c, j);
            const int64_t off = (j - half) * dilation;
            const int64_t lo = std::max<int64_t>(0, -off);
            const int64_t hi = std::min<int64_t>(t, t - off);
            for (int64_t u = lo; u < hi; ++u) dst[u] += wv * src[u + off];
          }
        }
      }
    }
  } else {
    require(x->shape.c >= 1, "conv1d: channel axis is empty");
    require(w->shape.b == 1 && w->shape.c == 1,
            "conv1d: channel-axis kernel must have shape (1,1,k)");
    if (bias) require(bias->shape == Shape{1, 1, 1}, "conv1d: bias shape mismatch");
    const int64_t b = x->shape.b, c = x->shape.c, t = x->shape.t;
    out = Tensor::create({b, c, t});
    const double bv = bias ? bias->data[0] : 0.0;
    for (int64_t bi = 0; bi < b; ++bi) {
      for (int64_t ci = 0; ci < c; ++ci) {
        double* dst = &out->at(bi, ci, 0);
        for (int64_t j = 0; j < k; ++j) {
          const int64_t src_c = ci + (j - half) * dilation;
          if (src_c < 0 || src_c >= c) continue;
          const double wv = w->data[j];
          const double* src = &x->at(bi, src_c, 0);
          for (int64_t u = 0; u < t; ++u) dst[u] += wv * src[u];
        }
        if (bias) {
          for (int64_t u = 0; u < t; ++u) dst[u] += bv;
        }
      }
    }
  }

  if (track({&x, &w, &bias})) {
    out->requires_grad = true;
    out->parents = bias ? std::vector<TensorPtr>{x, w, bias} : std::vector<TensorPtr>{x, w};
    TensorPtr xb = bias;
    out->backward_fn = [x, w, xb, dilation, axis, half, k](Tensor& self) {
      const std::vector<double>& g = self.grad;
      if (axis == Axis::time) {
        const int64_t co = w->shape.b, ci = x->shape.c, t = x->shape.t, b = x->shape.b;
        if (x->requires_grad) {
          x->ensure_grad();
          for (int64_t bi = 0; bi < b; ++bi) {
            for (int64_t o = 0; o < co; ++o) {
              const double* gs = &g[(bi * co + o) * t];
              for (int64_t c = 0; c < ci; ++c) {
                double* gx = &x->grad[(bi * ci + c) * t];
                for (int64_t j = 0; j < k; ++j) {
                  const double wv = w->at(o, c, j);
                  const int64_t off = (j - half) * dilation;
                  const int64_t lo = std::max<int64_t>(0, -off);
                  const int64_t hi = std::min<int64_t>(t, t - off);
                  for (int64_t u = lo; u < hi; ++u) gx[u + off] += wv * gs[u];
                }
              }
            }
          }
        }
        if (w->requires_grad) {
          w->ensure_grad();
          for (int64_t bi = 0; bi < b; ++bi) {
            for (int64_t o = 0; o < co; ++o) {
              const double* gs = &g[(bi * co + o) * t];
              for (int64_t c = 0; c < ci; ++c) {
                const double* src = &x->at(bi, c, 0);
                for (int64_t j = 0; j < k; ++j) {
                  const int64_t off = (j - half) * dilation;
                  const int64_t lo = std::max<int64_t>(0, -off);
                  const int64_t hi = std::min<int64_t>(t, t - off);
                  double acc = 0.0;
                  for (int64_t u = lo; u < hi; ++u) acc += gs[u] * src[u + off];
                  w->grad[(o * ci + c) * k + j] += acc;
                }
              }
            }
          }
        }
        if (xb && xb->requires_grad) {
          xb->ensure_grad();
          for (int64_t bi = 0; bi < b; ++bi) {
            for (int64_t o = 0; o < co; ++o) {
              const double* gs = &g[(bi * co + o) * t];
              double acc = 0.0;
              for (int64_t u = 0; u < t; ++u) acc += gs[u];
              xb->grad[o] += acc;
            }
          }
        }
      } else {
        const int64_t b = x->shape.b, c = x->shape.c, t = x->shape.t;
        if (x->requires_grad) {
          x->ensure_grad();
          for (int64_t bi = 0; bi < b; ++bi) {
            for (int64_t ci = 0; ci < c; ++ci) {
              const double* gs = &g[(bi * c + ci) * t];
              for (int64_t j = 0; j < k; ++j) {
                const int64_t src_c = ci + (j - half) * dilation;
                if (src_c < 0 || src_c >= c) continue;
                const double wv = w->data[j];
                double* gx = &x->grad[(bi * c + src_c) * t];
                for (int64_t u = 0; u < t; ++u) gx[u] += wv * gs[u];
              }
            }
          }
        }
        if (w->requires_grad) {
          w->ensure_grad();
          for (int64_t bi = 0; bi < b; ++bi) {
            for (int64_t ci = 0; ci < c; ++ci) {
              const double* gs = &g[(bi * c + ci) * t];
              for (int64_t j = 0; j < k; ++j) {
                const int64_t src_c = ci + (j - half) * dilation;
                if (src_c < 0 || src_c >= c) continue;
                const double* src = &x->at(bi, src_c, 0);
                double acc = 0.0;
                for (int64_t u = 0; u < t; ++u) acc += gs[u] * src[u];
                w->grad[j] += acc;
              }
            }
          }
        }
        if (xb && xb->requires_grad) {
          xb->ensure_grad();
          double acc = 0.0;
          for (double gv : g) acc += gv;
          xb->grad[0] += acc;
        }
      }
    };
  }
  return out;
}

// --- linear ----------------------------------------------------------------

TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& bias) {
  require(x != nullptr && w != nullptr, "linear: null input");
  require(w->shape.b == 1, "linear: weight must have shape (1, out, in)");
  const int64_t ci = x->shape.c, co = w->shape.c, b = x->shape.b, t = x->shape.t;
  require(w->shape.t == ci, "linear: weight expects " + std::to_string(w->shape.t) +
                                " input channels, got " + std::to_string(ci));
  if (bias) require(bias->shape == Shape{1, co, 1}, "linear: bias shape mismatch");

  auto out = Tensor::create({b, co, t});
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t o = 0; o < co; ++o) {
      double* dst = &out->at(bi, o, 0);
      if (bias) {
        const double bv = bias->data[o];
        for (int64_t u = 0; u < t; ++u) dst[u] = bv;
      }
      const double* wrow = &w->data[o * ci];
      for (int64_t c = 0; c < ci; ++c) {
        const double wv = wrow[c];
        if (wv == 0.0) continue;
        const double* src = &x->at(bi, c, 0);
        for (int64_t u = 0; u < t; ++u) dst[u] += wv * src[u];
      }
    }
  }

  if (track({&x, &w, &bias})) {
    out->requires_grad = true;
    out->parents = bias ? std::vector<TensorPtr>{x, w, bias} : std::vector<TensorPtr>{x, w};
    TensorPtr xb = bias;
    out->backward_fn = [x, w, xb](Tensor& self) {
      const int64_t ci = x->shape.c, co = w->shape.c, b = x->shape.b, t = x->shape.t;
      const std::vector<double>& g = self.grad;
      if (x->requires_grad) {
        x->ensure_grad();
        for (int64_t bi = 0; bi < b; ++bi) {
          for (int64_t o = 0; o < co; ++o) {
            const double* gs = &g[(bi * co + o) * t];
            const double* wrow = &w->data[o * ci];
            for (int64_t c = 0; c < ci; ++c) {
              const double wv = wrow[c];
              if (wv == 0.0) continue;
              double* gx = &x->grad[(bi * ci + c) * t];
              for (int64_t u = 0; u < t; ++u) gx[u] += wv * gs[u];
            }
          }
        }
      }
      if (w->requires_grad) {
        w->ensure_grad();
        for (int64_t bi = 0; bi < b; ++bi) {
          for (int64_t o = 0; o < co; ++o) {
            const double* gs = &g[(bi * co + o) * t];
            double* gw = &w->grad[o * ci];
            for (int64_t c = 0; c < ci; ++c) {
              const double* src = &x->at(bi, c, 0);
              double acc = 0.0;
              for (int64_t u = 0; u < t; ++u) acc += gs[u] * src[u];
              gw[c] += acc;
            }
          }
        }
      }
      if (xb && xb->requires_grad) {
        xb->ensure_grad();
        for (int64_t bi = 0; bi < b; ++bi) {
          for (int64_t o = 0; o < co; ++o) {
            const double* gs = &g[(bi * co + o) * t];
            double acc = 0.0;
            for (int64_t u = 0; u < t; ++u) acc += gs[u];
            xb->grad[o] += acc;
          }
        }
      }
    };
  }
  return out;
}

// --- elementwise -----------------------------------------------------------

TensorPtr sigmoid(const TensorPtr& x) {
  require(x != nullptr, "sigmoid: null input");
  auto out = Tensor::create(x->shape);
  for (size_t i = 0; i < x->data.size(); ++i) {
    out->data[i] = 1.0 / (1.0 + std::exp(-x->data[i]));
  }
  if (track({&x})) {
    out->requires_grad = true;
    out->parents = {x};
    out->backward_fn = [x](Tensor& self) {
      if (!x->requires_grad) return;
      x->ensure_grad();
      for (size_t i = 0; i < self.data.size(); ++i) {
        const double y = self.data[i];
        x->grad[i] += self.grad[i] * y * (1.0 - y);
      }
    };
  }
  return out;
}

TensorPtr relu(const TensorPtr& x) {
  require(x != nullptr, "relu: null input");
  auto out = Tensor::create(x->shape);
  for (size_t i = 0; i < x->data.size(); ++i) {
    out->data[i] = x->data[i] > 0.0 ? x->data[i] : 0.0;
  }
  if (track({&x})) {
    out->requires_grad = true;
    out->parents = {x};
    out->backward_fn = [x](Tensor& self) {
      if (!x->requires_grad) return;
      x->ensure_grad();
      for (size_t i = 0; i < self.data.size(); ++i) {
        if (x->data[i] > 0.0) x->grad[i] += self.grad[i];
      }
    };
  }
  return out;
}

// --- softmax ---------------------------------------------------------------

namespace {

// Applies f(line_base_index, stride, count) to every 1-D line along `axis`.
template <typename F>
void for_each_line(const Shape& s, Axis axis, F f) {
  if (axis == Axis::time) {
    for (int64_t bi = 0; bi < s.b; ++bi)
      for (int64_t c = 0; c < s.c; ++c) f((bi * s.c + c) * s.t, 1, s.t);
  } else {
    for (int64_t bi = 0; bi < s.b; ++bi)
      for (int64_t u = 0; u < s.t; ++u) f(bi * s.c * s.t + u, s.t, s.c);
  }
}

}  // namespace

TensorPtr softmax(const TensorPtr& x, Axis axis) {
  require(x != nullptr, "softmax: null input");
  auto out = Tensor::create(x->shape);
  for_each_line(x->shape, axis, [&](int64_t base, int64_t stride, int64_t n) {
    double mx = x->data[base];
    for (int64_t i = 1; i < n; ++i) mx = std::max(mx, x->data[base + i * stride]);
    double z = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const double e = std::exp(x->data[base + i * stride] - mx);
      out->data[base + i * stride] = e;
      z += e;
    }
    const double inv = 1.0 / z;
    for (int64_t i = 0; i < n; ++i) out->data[base + i * stride] *= inv;
  });
  if (track({&x})) {
    out->requires_grad = true;
    out->parents = {x};
    out->backward_fn = [x, axis](Tensor& self) {
      if (!x->requires_grad) return;
      x->ensure_grad();
      for_each_line(x->shape, axis, [&](int64_t base, int64_t stride, int64_t n) {
        double dot = 0.0;
        for (int64_t i = 0; i < n; ++i) {
          dot += self.grad[base + i * stride] * self.data[base + i * stride];
        }
        for (int64_t i = 0; i < n; ++i) {
          const int64_t idx = base + i * stride;
          x->grad[idx] += self.data[idx] * (self.grad[idx] - dot);
        }
      });
    };
  }
  return out;
}

// --- layernorm ---------------------------------------------------------------

TensorPtr layernorm(const TensorPtr& x, const TensorPtr& gain, const TensorPtr& shift) {
  require(x != nullptr && gain != nullptr && shift != nullptr, "layernorm: null input");
  const int64_t b = x->shape.b, c = x->shape.c, t = x->shape.t;
  require(gain->shape == Shape{1, c, 1} && shift->shape == Shape{1, c, 1},
          "layernorm: gain/shift must have shape (1, c, 1)");
  auto out = Tensor::create(x->shape);
  // normalized values are re-derived in backward; keep only the forward output
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t u = 0; u < t; ++u) {
      double mean = 0.0;
      for (int64_t ci = 0; ci < c; ++ci) mean += x->at(bi, ci, u);
      mean /= static_cast<double>(c);
      double var = 0.0;
      for (int64_t ci = 0; ci < c; ++ci) {
        const double d = x->at(bi, ci, u) - mean;
        var += d * d;
      }
      var /= static_cast<double>(c);
      const double inv = 1.0 / std::sqrt(var + kLayernormEpsilon);
      for (int64_t ci = 0; ci < c; ++ci) {
        const double xn = (x->at(bi, ci, u) - mean) * inv;
        out->at(bi, ci, u) = gain->data[ci] * xn + shift->data[ci];
      }
    }
  }
  if (track({&x, &gain, &shift})) {
    out->requires_grad = true;
    out->parents = {x, gain, shift};
    out->backward_fn = [x, gain, shift](Tensor& self) {
      const int64_t b = x->shape.b, c = x->shape.c, t = x->shape.t;
      const bool need_x = x->requires_grad;
      const bool need_g = gain->requires_grad;
      const bool need_s = shift->requires_grad;
      if (need_x) x->ensure_grad();
      if (need_g) gain->ensure_grad();
      if (need_s) shift->ensure_grad();
      std::vector<double> xn(static_cast<size_t>(c));
      std::vector<double> gxn(static_cast<size_t>(c));
      for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t u = 0; u < t; ++u) {
          double mean = 0.0;
          for (int64_t ci = 0; ci < c; ++ci) mean += x->at(bi, ci, u);
          mean /= static_cast<double>(c);
          double var = 0.0;
          for (int64_t ci = 0; ci < c; ++ci) {
            const double d = x->at(bi, ci, u) - mean;
            var += d * d;
          }
          var /= static_cast<double>(c);
          const double inv = 1.0 / std::sqrt(var + kLayernormEpsilon);
          for (int64_t ci = 0; ci < c; ++ci) {
            xn[ci] = (x->at(bi, ci, u) - mean) * inv;
          }
          double mean_gxn = 0.0, mean_gxn_xn = 0.0;
          for (int64_t ci = 0; ci < c; ++ci) {
            const double gy = self.grad[(bi * c + ci) * t + u];
            gxn[ci] = gy * gain->data[ci];
            mean_gxn += gxn[ci];
            mean_gxn_xn += gxn[ci] * xn[ci];
            if (need_g) gain->grad[ci] += gy * xn[ci];
            if (need_s) shift->grad[ci] += gy;
          }
          if (need_x) {
            mean_gxn /= static_cast<double>(c);
            mean_gxn_xn /= static_cast<double>(c);
            for (int64_t ci = 0; ci < c; ++ci) {
              x->grad[(bi * c + ci) * t + u] +=
                  inv * (gxn[ci] - mean_gxn - xn[ci] * mean_gxn_xn);
            }
          }
        }
      }
    };
  }
  return out;
}

// --- concat / slice ----------------------------------------------------------

TensorPtr concat(const std::vector<TensorPtr>& xs, Axis axis) {
  require(axis == Axis::channel, "concat: only the channel axis is supported");
  require(!xs.empty(), "concat: empty input list");
  const int64_t b = xs[0]->shape.b, t = xs[0]->shape.t;
  int64_t total_c = 0;
  for (const auto& x : xs) {
    require(x != nullptr, "concat: null input");
    require(x->shape.b == b && x->shape.t == t,
            "concat: inputs must agree on batch and frames");
    total_c += x->shape.c;
  }
  auto out = Tensor::create({b, total_c, t});
  int64_t c0 = 0;
  for (const auto& x : xs) {
    for (int64_t bi = 0; bi < b; ++bi) {
      std::copy_n(&x->at(bi, 0, 0), x->shape.c * t, &out->at(bi, c0, 0));
    }
    c0 += x->shape.c;
  }
  bool any = false;
  for (const auto& x : xs) any = any || x->requires_grad;
  if (g_grad_enabled && any) {
    out->requires_grad = true;
    out->parents = xs;
    out->backward_fn = [xs](Tensor& self) {
      const int64_t b = self.shape.b, t = self.shape.t, total_c = self.shape.c;
      int64_t c0 = 0;
      for (const auto& x : xs) {
        if (x->requires_grad) {
          x->ensure_grad();
          for (int64_t bi = 0; bi < b; ++bi) {
            const double* g = &self.grad[(bi * total_c + c0) * t];
            double* gx = &x->grad[bi * x->shape.c * t];
            for (int64_t i = 0; i < x->shape.c * t; ++i) gx[i] += g[i];
          }
        }
        c0 += x->shape.c;
      }
    };
  }
  return out;
}

TensorPtr slice(const TensorPtr& x, Axis axis, int64_t start, int64_t count) {
  require(x != nullptr, "slice: null input");
  require(axis == Axis::channel, "slice: only the channel axis is supported");
  require(start >= 0 && count >= 1 && start + count <= x->shape.c,
          "slice: range out of bounds");
  const int64_t b = x->shape.b, t = x->shape.t;
  auto out = Tensor::create({b, count, t});
  for (int64_t bi = 0; bi < b; ++bi) {
    std::copy_n(&x->at(bi, start, 0), count * t, &out->at(bi, 0, 0));
  }
  if (track({&x})) {
    out->requires_grad = true;
    out->parents = {x};
    out->backward_fn = [x, start, count](Tensor& self) {
      if (!x->requires_grad) return;
      x->ensure_grad();
      const int64_t b = x->shape.b, t = x->shape.t;
      for (int64_t bi = 0; bi < b; ++bi) {
        const double* g = &self.grad[bi * count * t];
        double* gx = &x->grad[(bi * x->shape.c + start) * t];
        for (int64_t i = 0; i < count * t; ++i) gx[i] += g[i];
      }
    };
  }
  return out;
}

// --- arithmetic ---------------------------------------------------------------

TensorPtr add_scaled(const TensorPtr& a, const TensorPtr& b, double s1, double s2) {
  require(a != nullptr && b != nullptr, "add_scaled: null input");
  require(a->shape == b->shape, "add_scaled: shape mismatch " + a->shape.str() +
                                    " vs " + b->shape.str());
  auto out = Tensor::create(a->shape);
  for (size_t i = 0; i < a->data.size(); ++i) {
    out->data[i] = s1 * a->data[i] + s2 * b->data[i];
  }
  if (track({&a, &b})) {
    out->requires_grad = true;
    out->parents = {a, b};
    out->backward_fn = [a, b, s1, s2](Tensor& self) {
      if (a->requires_grad) {
        a->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += s1 * self.grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) b->grad[i] += s2 * self.grad[i];
      }
    };
  }
  return out;
}

TensorPtr time_gram(const TensorPtr& a, const TensorPtr& b, double scale) {
  require(a != nullptr && b != nullptr, "time_gram: null input");
  require(a->shape.b == b->shape.b && a->shape.c == b->shape.c,
          "time_gram: batch/channel mismatch");
  const int64_t nb = a->shape.b, c = a->shape.c, ts = a->shape.t, tu = b->shape.t;
  auto out = Tensor::create({nb, ts, tu});
  for (int64_t bi = 0; bi < nb; ++bi) {
    for (int64_t ci = 0; ci < c; ++ci) {
      const double* pa = &a->at(bi, ci, 0);
      const double* pb = &b->at(bi, ci, 0);
      for (int64_t s = 0; s < ts; ++s) {
        const double av = pa[s] * scale;
        if (av == 0.0) continue;
        double* dst = &out->at(bi, s, 0);
        for (int64_t u = 0; u < tu; ++u) dst[u] += av * pb[u];
      }
    }
  }
  if (track({&a, &b})) {
    out->requires_grad = true;
    out->parents = {a, b};
    out->backward_fn = [a, b, scale](Tensor& self) {
      const int64_t nb = a->shape.b, c = a->shape.c, ts = a->shape.t, tu = b->shape.t;
      if (a->requires_grad) {
        a->ensure_grad();
        for (int64_t bi = 0; bi < nb; ++bi) {
          for (int64_t ci = 0; ci < c; ++ci) {
            const double* pb = &b->at(bi, ci, 0);
            double* ga = &a->grad[(bi * c + ci) * ts];
            for (int64_t s = 0; s < ts; ++s) {
              const double* g = &self.grad[(bi * ts + s) * tu];
              double acc = 0.0;
              for (int64_t u = 0; u < tu; ++u) acc += g[u] * pb[u];
              ga[s] += scale * acc;
            }
          }
        }
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (int64_t bi = 0; bi < nb; ++bi) {
          for (int64_t ci = 0; ci < c; ++ci) {
            const double* pa = &a->at(bi, ci, 0);
            double* gb = &b->grad[(bi * c + ci) * tu];
            for (int64_t s = 0; s < ts; ++s) {
              const double av = pa[s] * scale;
              if (av == 0.0) continue;
              const double* g = &self.grad[(bi * ts + s) * tu];
              for (int64_t u = 0; u < tu; ++u) gb[u] += av * g[u];
            }
          }
        }
      }
    };
  }
  return out;
}

TensorPtr time_mix(const TensorPtr& v, const TensorPtr& w) {
  require(v != nullptr && w != nullptr, "time_mix: null input");
  require(v->shape.b == w->shape.b && v->shape.t == w->shape.c,
          "time_mix: weight source frames must match value frames");
  const int64_t nb = v->shape.b, c = v->shape.c, ts = v->shape.t, tu = w->shape.t;
  auto out = Tensor::create({nb, c, tu});
  for (int64_t bi = 0; bi < nb; ++bi) {
    for (int64_t ci = 0; ci < c; ++ci) {
      const double* pv = &v->at(bi, ci, 0);
      double* dst = &out->at(bi, ci, 0);
      for (int64_t s = 0; s < ts; ++s) {
        const double vv = pv[s];
        if (vv == 0.0) continue;
        const double* pw = &w->at(bi, s, 0);
        for (int64_t u = 0; u < tu; ++u) dst[u] += vv * pw[u];
      }
    }
  }
  if (track({&v, &w})) {
    out->requires_grad = true;
    out->parents = {v, w};
    out->backward_fn = [v, w](Tensor& self) {
      const int64_t nb = v->shape.b, c = v->shape.c, ts = v->shape.t, tu = w->shape.t;
      if (v->requires_grad) {
        v->ensure_grad();
        for (int64_t bi = 0; bi < nb; ++bi) {
          for (int64_t ci = 0; ci < c; ++ci) {
            const double* g = &self.grad[(bi * c + ci) * tu];
            double* gv = &v->grad[(bi * c + ci) * ts];
            for (int64_t s = 0; s < ts; ++s) {
              const double* pw = &w->at(bi, s, 0);
              double acc = 0.0;
              for (int64_t u = 0; u < tu; ++u) acc += g[u] * pw[u];
              gv[s] += acc;
            }
          }
        }
      }
      if (w->requires_grad) {
        w->ensure_grad();
        for (int64_t bi = 0; bi < nb; ++bi) {
          for (int64_t ci = 0; ci < c; ++ci) {
            const double* g = &self.grad[(bi * c + ci) * tu];
            const double* pv = &v->at(bi, ci, 0);
            for (int64_t s = 0; s < ts; ++s) {
              const double vv = pv[s];
              if (vv == 0.0) continue;
              double* gw = &w->grad[(bi * ts + s) * tu];
              for (int64_t u = 0; u < tu; ++u) gw[u] += vv * g[u];
            }
          }
        }
      }
    };
  }
  return out;
}

TensorPtr gate_mix(const TensorPtr& a, const TensorPtr& b, const TensorPtr& alpha) {
  require(a != nullptr && b != nullptr && alpha != nullptr, "gate_mix: null input");
  require(a->shape == b->shape, "gate_mix: shape mismatch " + a->shape.str() + " vs " +
                                    b->shape.str());
  require(alpha->shape == Shape{1, 1, 1}, "gate_mix: alpha must be a scalar");
  const double mu = 1.0 / (1.0 + std::exp(-alpha->data[0]));
  auto out = Tensor::create(a->shape);
  for (size_t i = 0; i < a->data.size(); ++i) {
    out->data[i] = mu * a->data[i] + (1.0 - mu) * b->data[i];
  }
  if (track({&a, &b, &alpha})) {
    out->requires_grad = true;
    out->parents = {a, b, alpha};
    out->backward_fn = [a, b, alpha, mu](Tensor& self) {
      if (a->requires_grad) {
        a->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += mu * self.grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) b->grad[i] += (1.0 - mu) * self.grad[i];
      }
      if (alpha->requires_grad) {
        alpha->ensure_grad();
        double acc = 0.0;
        for (size_t i = 0; i < self.grad.size(); ++i) {
          acc += self.grad[i] * (a->data[i] - b->data[i]);
        }
        alpha->grad[0] += acc * mu * (1.0 - mu);
      }
    };
  }
  return out;
}

TensorPtr sum(const TensorPtr& x) {
  require(x != nullptr, "sum: null input");
  double acc = 0.0;
  for (double v : x->data) acc += v;
  auto out = Tensor::scalar(acc);
  if (track({&x})) {
    out->requires_grad = true;
    out->parents = {x};
    out->backward_fn = [x](Tensor& self) {
      if (!x->requires_grad) return;
      x->ensure_grad();
      for (double& g : x->grad) g += self.grad[0];
    };
  }
  return out;
}

TensorPtr bce_loss(const TensorPtr& pred, const TensorPtr& target, const TensorPtr& weights) {
  require(pred != nullptr && target != nullptr, "bce_loss: null input");
  require(pred->shape == target->shape, "bce_loss: shape mismatch " + pred->shape.str() +
                                            " vs " + target->shape.str());
  if (weights) {
    require(weights->shape == pred->shape, "bce_loss: weights shape mismatch");
  }
  const size_t n = pred->data.size();
  double norm = static_cast<double>(n);
  if (weights) {
    norm = 0.0;
    for (double w : weights->data) norm += w;
    require(norm > 0.0, "bce_loss: weights must have positive sum");
  }
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double y = target->data[i];
    require(y >= 0.0 && y <= 1.0, "bce_loss: target outside [0, 1]");
    const double p = std::clamp(pred->data[i], kBceClamp, 1.0 - kBceClamp);
    const double l = -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    acc += weights ? weights->data[i] * l : l;
  }
  auto out = Tensor::scalar(acc / norm);
  if (track({&pred})) {
    out->requires_grad = true;
    out->parents = {pred};
    TensorPtr w = weights;
    out->backward_fn = [pred, target, w, norm](Tensor& self) {
      if (!pred->requires_grad) return;
      pred->ensure_grad();
      const double g0 = self.grad[0] / norm;
      for (size_t i = 0; i < pred->data.size(); ++i) {
        const double raw = pred->data[i];
        if (raw < kBceClamp || raw > 1.0 - kBceClamp) continue;  // clamped: flat
        const double y = target->data[i];
        const double wv = w ? w->data[i] : 1.0;
        pred->grad[i] += g0 * wv * (raw - y) / (raw * (1.0 - raw));
      }
    };
  }
  return out;
}

// --- backward pass -------------------------------------------------------------

void backward(const TensorPtr& loss) {
  require(loss != nullptr, "backward: null loss");
  require(loss->shape == Shape{1, 1, 1}, "backward: loss must be scalar, got " +
                                             loss->shape.str());
  // iterative post-order over parents, then replay in reverse
  std::vector<Tensor*> order;
  std::unordered_set<Tensor*> seen;
  std::vector<std::pair<Tensor*, size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Tensor* parent = node->parents[next].get();
      ++next;
      if (parent->requires_grad && !seen.count(parent)) {
        seen.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss->ensure_grad();
  loss->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Tensor* node = *it;
    if (node->backward_fn && !node->grad.empty()) {
      node->backward_fn(*node);
    }
  }
}

// --- optimizer -------------------------------------------------------------------

void zero_grad(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) {
    if (p->trainable) p->value->zero_grad();
  }
}

void scale_grads(const std::vector<Parameter*>& params, double factor) {
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    for (double& g : p->value->grad) g *= factor;
  }
}

void adam_step(const std::vector<Parameter*>& params, const AdamConfig& cfg) {
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    Tensor& v = *p->value;
    if (v.grad.empty()) {
      throw_contract("adam_step: trainable parameter '" + p->name + "' has no gradient");
    }
    if (p->adam_m.empty()) {
      p->adam_m.assign(v.data.size(), 0.0);
      p->adam_v.assign(v.data.size(), 0.0);
    }
    p->adam_steps += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->adam_steps));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->adam_steps));
    for (size_t i = 0; i < v.data.size(); ++i) {
      const double g = v.grad[i];
      p->adam_m[i] = cfg.beta1 * p->adam_m[i] + (1.0 - cfg.beta1) * g;
      p->adam_v[i] = cfg.beta2 * p->adam_v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = p->adam_m[i] / bc1;
      const double vhat = p->adam_v[i] / bc2;
      v.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

}  // namespace hingenet
