#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hrf/tensor.hpp"

namespace hrf::ad {

inline float sigmoidf(float x) {
  if (x >= 0.f) {
    float e = std::exp(-x);
    return 1.f / (1.f + e);
  }
  float e = std::exp(x);
  return e / (1.f + e);
}

inline float softplusf(float x) {
  return x > 0.f ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline float swishf(float x) { return x * sigmoidf(x); }

// swish'(x) = s + x s (1 - s)
inline float dswishf(float x) {
  float s = sigmoidf(x);
  return s + x * s * (1.f - s);
}

class Tape;

// Handle into a Tape. Cheap to copy; invalid once the tape is cleared.
struct Value {
  Tape* tape = nullptr;
  int32_t id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Define-by-run reverse-mode tape over Tensor-valued nodes. Creation order is
// a topological order, so the reverse pass is a single backward sweep.
class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until a consumer accumulates into it
    bool requires_grad = false;
    const char* op = "";
    std::function<void(Tape&, Node&)> backward;  // null for leaves
  };

  bool check_nonfinite = false;

  void clear() { nodes_.clear(); }
  size_t size() const { return nodes_.size(); }

  const Tensor& val(Value v) const { return nodes_[v.id].value; }
  Tensor& grad(Value v) { return grad_of(v.id); }
  bool has_grad(Value v) const { return !nodes_[v.id].grad.data.empty(); }
  bool requires_grad(Value v) const { return nodes_[v.id].requires_grad; }

  Value leaf(Tensor value, bool requires_grad) {
    return push("leaf", std::move(value), requires_grad, nullptr);
  }
  Value constant(Tensor value) { return push("const", std::move(value), false, nullptr); }

  // Runs the reverse sweep from a scalar root. Each parameter leaf ends up
  // with d(root)/d(leaf) accumulated in its grad tensor.
  void backward(Value root) {
    if (!root.valid() || root.tape != this) throw std::invalid_argument("backward: bad root");
    Node& r = nodes_[root.id];
    if (r.value.numel() != 1) throw std::invalid_argument("backward: root must be a scalar");
    if (!std::isfinite(r.value.data[0])) throw std::runtime_error("backward: non-finite root");
    grad_of(root.id) = Tensor::scalar(1.f);
    for (int32_t i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad.data.empty() || !n.backward) continue;
      if (check_nonfinite && !n.grad.all_finite())
        throw std::runtime_error(std::string("backward: non-finite gradient at op '") + n.op + "'");
      n.backward(*this, n);
    }
  }

  // ---- op constructors ----

  Value matmul(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.cols() != B.rows()) throw std::invalid_argument("matmul: inner dims");
    Tensor out = Tensor::zeros(A.rows(), B.cols());
    out.mat().noalias() = A.mat() * B.mat();
    return binary("matmul", std::move(out), a, b, [](Tape& t, Node& n, int32_t ia, int32_t ib) {
      const Tensor& G = n.grad;
      if (t.wants(ia)) t.grad_of(ia).mat().noalias() += G.mat() * t.nodes_[ib].value.mat().transpose();
      if (t.wants(ib)) t.grad_of(ib).mat().noalias() += t.nodes_[ia].value.mat().transpose() * G.mat();
    });
  }

  Value add(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) throw std::invalid_argument("add: shape mismatch");
    Tensor out = A;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += B[i];
    return binary("add", std::move(out), a, b, [](Tape& t, Node& n, int32_t ia, int32_t ib) {
      if (t.wants(ia)) t.accumulate(ia, n.grad);
      if (t.wants(ib)) t.accumulate(ib, n.grad);
    });
  }

  Value sub(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) throw std::invalid_argument("sub: shape mismatch");
    Tensor out = A;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= B[i];
    return binary("sub", std::move(out), a, b, [](Tape& t, Node& n, int32_t ia, int32_t ib) {
      if (t.wants(ia)) t.accumulate(ia, n.grad);
      if (t.wants(ib)) {
        Tensor& g = t.grad_of(ib);
        for (int64_t i = 0; i < g.numel(); ++i) g[i] -= n.grad[i];
      }
    });
  }

  Value mul(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) throw std::invalid_argument("mul: shape mismatch");
    Tensor out = A;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= B[i];
    return binary("mul", std::move(out), a, b, [](Tape& t, Node& n, int32_t ia, int32_t ib) {
      const Tensor& G = n.grad;
      if (t.wants(ia)) {
        Tensor& g = t.grad_of(ia);
        const Tensor& B2 = t.nodes_[ib].value;
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += G[i] * B2[i];
      }
      if (t.wants(ib)) {
        Tensor& g = t.grad_of(ib);
        const Tensor& A2 = t.nodes_[ia].value;
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += G[i] * A2[i];
      }
    });
  }

  // a: [m,n], b: [1,n] broadcast over rows (bias add).
  Value add_rowvec(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (B.rows() != 1 || B.cols() != A.cols()) throw std::invalid_argument("add_rowvec: shape");
    Tensor out = A;
    const int64_t m = A.rows(), n = A.cols();
    for (int64_t r = 0; r < m; ++r)
      for (int64_t c = 0; c < n; ++c) out(r, c) += B[c];
    return binary("add_rowvec", std::move(out), a, b, [](Tape& t, Node& n2, int32_t ia, int32_t ib) {
      const Tensor& G = n2.grad;
      if (t.wants(ia)) t.accumulate(ia, G);
      if (t.wants(ib)) {
        Tensor& g = t.grad_of(ib);
        const int64_t m = G.rows(), n = G.cols();
        for (int64_t r = 0; r < m; ++r)
          for (int64_t c = 0; c < n; ++c) g[c] += G(r, c);
      }
    });
  }

  // a: [m,n] scaled per-row by c: [m,1].
  Value mul_colvec(Value a, Value c) {
    const Tensor& A = val(a);
    const Tensor& C = val(c);
    if (C.cols() != 1 || C.rows() != A.rows()) throw std::invalid_argument("mul_colvec: shape");
    Tensor out = A;
    const int64_t m = A.rows(), n = A.cols();
    for (int64_t r = 0; r < m; ++r) {
      float s = C[r];
      for (int64_t cc = 0; cc < n; ++cc) out(r, cc) *= s;
    }
    return binary("mul_colvec", std::move(out), a, c, [](Tape& t, Node& n2, int32_t ia, int32_t ic) {
      const Tensor& G = n2.grad;
      const int64_t m = G.rows(), n = G.cols();
      if (t.wants(ia)) {
        Tensor& g = t.grad_of(ia);
        const Tensor& C2 = t.nodes_[ic].value;
        for (int64_t r = 0; r < m; ++r) {
          float s = C2[r];
          for (int64_t cc = 0; cc < n; ++cc) g(r, cc) += G(r, cc) * s;
        }
      }
      if (t.wants(ic)) {
        Tensor& g = t.grad_of(ic);
        const Tensor& A2 = t.nodes_[ia].value;
        for (int64_t r = 0; r < m; ++r) {
          float acc = 0.f;
          for (int64_t cc = 0; cc < n; ++cc) acc += G(r, cc) * A2(r, cc);
          g[r] += acc;
        }
      }
    });
  }

  Value scale(Value a, float s) {
    Tensor out = val(a);
    for (auto& v : out.data) v *= s;
    return unary("scale", std::move(out), a, [s](Tape& t, Node& n, int32_t ia) {
      Tensor& g = t.grad_of(ia);
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * s;
    });
  }

  Value add_scalar(Value a, float s) {
    Tensor out = val(a);
    for (auto& v : out.data) v += s;
    return unary("add_scalar", std::move(out), a,
                 [](Tape& t, Node& n, int32_t ia) { t.accumulate(ia, n.grad); });
  }

  Value concat_cols(std::span<const Value> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    int64_t m = val(parts[0]).rows(), n = 0;
    for (Value p : parts) {
      if (val(p).rows() != m) throw std::invalid_argument("concat_cols: row mismatch");
      n += val(p).cols();
    }
    Tensor out = Tensor::zeros(m, n);
    int64_t off = 0;
    for (Value p : parts) {
      const Tensor& P = val(p);
      for (int64_t r = 0; r < m; ++r)
        std::copy_n(&P.data[r * P.cols()], P.cols(), &out.data[r * n + off]);
      off += P.cols();
    }
    std::vector<int32_t> ids;
    bool rg = false;
    for (Value p : parts) {
      check_same_tape(p);
      ids.push_back(p.id);
      rg = rg || nodes_[p.id].requires_grad;
    }
    if (!rg) return push("concat_cols", std::move(out), false, nullptr);
    return push("concat_cols", std::move(out), true, [ids](Tape& t, Node& nd) {
      const Tensor& G = nd.grad;
      const int64_t m = G.rows(), n = G.cols();
      int64_t off = 0;
      for (int32_t id : ids) {
        const int64_t pc = t.nodes_[id].value.cols();
        if (t.wants(id)) {
          Tensor& g = t.grad_of(id);
          for (int64_t r = 0; r < m; ++r)
            for (int64_t c = 0; c < pc; ++c) g(r, c) += G(r, off + c);
        }
        off += pc;
      }
    });
  }

  Value concat_cols(std::initializer_list<Value> parts) {
    std::vector<Value> v(parts);
    return concat_cols(std::span<const Value>(v));
  }

  Value slice_cols(Value a, int64_t lo, int64_t hi) {
    const Tensor& A = val(a);
    if (lo < 0 || hi > A.cols() || lo >= hi) throw std::invalid_argument("slice_cols: range");
    const int64_t m = A.rows(), n = hi - lo;
    Tensor out = Tensor::zeros(m, n);
    for (int64_t r = 0; r < m; ++r)
      std::copy_n(&A.data[r * A.cols() + lo], n, &out.data[r * n]);
    return unary("slice_cols", std::move(out), a, [lo, n](Tape& t, Node& nd, int32_t ia) {
      Tensor& g = t.grad_of(ia);
      const Tensor& G = nd.grad;
      for (int64_t r = 0; r < G.rows(); ++r)
        for (int64_t c = 0; c < n; ++c) g(r, lo + c) += G(r, c);
    });
  }

  Value reshape(Value a, int64_t r, int64_t c) {
    const Tensor& A = val(a);
    if (r * c != A.numel()) throw std::invalid_argument("reshape: numel mismatch");
    Tensor out;
    out.shape = {r, c};
    out.data = A.data;
    return unary("reshape", std::move(out), a, [](Tape& t, Node& nd, int32_t ia) {
      Tensor& g = t.grad_of(ia);
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += nd.grad[i];
    });
  }

  // out[i,:] = a[idx[i],:]
  Value gather_rows(Value a, std::vector<int32_t> idx) {
    const Tensor& A = val(a);
    const int64_t n = A.cols();
    Tensor out = Tensor::zeros((int64_t)idx.size(), n);
    for (size_t i = 0; i < idx.size(); ++i)
      std::copy_n(&A.data[(int64_t)idx[i] * n], n, &out.data[(int64_t)i * n]);
    return unary("gather_rows", std::move(out), a,
                 [idx = std::move(idx), n](Tape& t, Node& nd, int32_t ia) {
                   Tensor& g = t.grad_of(ia);
                   const Tensor& G = nd.grad;
                   for (size_t i = 0; i < idx.size(); ++i) {
                     float* gr = &g.data[(int64_t)idx[i] * n];
                     const float* src = &G.data[(int64_t)i * n];
                     for (int64_t c = 0; c < n; ++c) gr[c] += src[c];
                   }
                 });
  }

  // Zero tensor of [rows, src.cols] with src rows placed at idx.
  Value scatter_rows(Value src, std::vector<int32_t> idx, int64_t rows) {
    const Tensor& S = val(src);
    if ((int64_t)idx.size() != S.rows()) throw std::invalid_argument("scatter_rows: idx size");
    const int64_t n = S.cols();
    Tensor out = Tensor::zeros(rows, n);
    for (size_t i = 0; i < idx.size(); ++i)
      std::copy_n(&S.data[(int64_t)i * n], n, &out.data[(int64_t)idx[i] * n]);
    return unary("scatter_rows", std::move(out), src,
                 [idx = std::move(idx), n](Tape& t, Node& nd, int32_t is) {
                   Tensor& g = t.grad_of(is);
                   const Tensor& G = nd.grad;
                   for (size_t i = 0; i < idx.size(); ++i) {
                     const float* src2 = &G.data[(int64_t)idx[i] * n];
                     float* gr = &g.data[(int64_t)i * n];
                     for (int64_t c = 0; c < n; ++c) gr[c] += src2[c];
                   }
                 });
  }

  Value swish(Value a) {
    const Tensor& A = val(a);
    Tensor out = A;
    for (auto& v : out.data) v = swishf(v);
    return unary("swish", std::move(out), a, [](Tape& t, Node& nd, int32_t ia) {
      Tensor& g = t.grad_of(ia);
      const Tensor& X = t.nodes_[ia].value;
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += nd.grad[i] * dswishf(X[i]);
    });
  }

  // Forward value is swish'(x); used to build input-gradient chains whose own
  // backward needs swish''.
  Value dswish(Value a) {
    const Tensor& A = val(a);
    Tensor out = A;
    for (auto& v : out.data) v = dswishf(v);
    return unary("dswish", std::move(out), a, [](Tape& t, Node& nd, int32_t ia) {
      Tensor& g = t.grad_of(ia);
      const Tensor& X = t.nodes_[ia].value;
      for (int64_t i = 0; i < g.numel(); ++i) {
        float x = X[i];
        float s = sigmoidf(x);
        float sp = s * (1.f - s);
        g[i] += nd.grad[i] * (sp * (2.f + x * (1.f - 2.f * s)));
      }
    });
  }

  Value sigmoid(Value a) {
    Tensor out = val(a);
    for (auto& v : out.data) v = sigmoidf(v);
    Tensor saved = out;
    return unary("sigmoid", std::move(out), a, [saved](Tape& t, Node& nd, int32_t ia) {
      Tensor& g = t.grad_of(ia);
      for (int64_t i = 0; i < g.numel(); ++i) {
        float y = saved[i];
        g[i] += nd.grad[i] * y * (1.f - y);
      }
    });
  }

  Value softplus(Value a) {
    Tensor out = val(a);
    for (auto& v : out.data) v = softplusf(v);
    return unary("softplus", std::move(out), a, [](Tape& t, Node& nd, int32_t ia) {
      Tensor& g = t.grad_of(ia);
      const Tensor& X = t.nodes_[ia].value;
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += nd.grad[i] * sigmoidf(X[i]);
    });
  }

  Value exp_(Value a) {
    Tensor out = val(a);
    for (auto& v : out.data) v = std::exp(v);
    Tensor saved = out;
    return unary("exp", std::move(out), a, [saved](Tape& t, Node& nd, int32_t ia) {
      Tensor& g = t.grad_of(ia);
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += nd.grad[i] * saved[i];
    });
  }

  Value log_(Value a) {
    Tensor out = val(a);
    for (auto& v : out.data) v = std::log(v);
    return unary("log", std::move(out), a, [](Tape& t, Node& nd, int32_t ia) {
      Tensor& g = t.grad_of(ia);
      const Tensor& X = t.nodes_[ia].value;
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += nd.grad[i] / X[i];
    });
  }

  Value relu(Value a) {
    Tensor out = val(a);
    for (auto& v : out.data) v = v > 0.f ? v : 0.f;
    return unary("relu", std::move(out), a, [](Tape& t, Node& nd, int32_t ia) {
      Tensor& g = t.grad_of(ia);
      const Tensor& X = t.nodes_[ia].value;
      for (int64_t i = 0; i < g.numel(); ++i)
        if (X[i] > 0.f) g[i] += nd.grad[i];
    });
  }

  Value abs_(Value a) {
    Tensor out = val(a);
    for (auto& v : out.data) v = std::fabs(v);
    return unary("abs", std::move(out), a, [](Tape& t, Node& nd, int32_t ia) {
      Tensor& g = t.grad_of(ia);
      const Tensor& X = t.nodes_[ia].value;
      for (int64_t i = 0; i < g.numel(); ++i)
        g[i] += nd.grad[i] * (X[i] > 0.f ? 1.f : (X[i] < 0.f ? -1.f : 0.f));
    });
  }

  Value square(Value a) {
    Tensor out = val(a);
    for (auto& v : out.data) v *= v;
    return unary("square", std::move(out), a, [](Tape& t, Node& nd, int32_t ia) {
      Tensor& g = t.grad_of(ia);
      const Tensor& X = t.nodes_[ia].value;
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += nd.grad[i] * 2.f * X[i];
    });
  }

  Value sqrt_(Value a, float eps = 0.f) {
    Tensor out = val(a);
    for (auto& v : out.data) v = std::sqrt(v + eps);
    Tensor saved = out;
    return unary("sqrt", std::move(out), a, [saved](Tape& t, Node& nd, int32_t ia) {
      Tensor& g = t.grad_of(ia);
      for (int64_t i = 0; i < g.numel(); ++i) {
        float y = std::max(saved[i], 1e-12f);
        g[i] += nd.grad[i] * 0.5f / y;
      }
    });
  }

  Value sum_all(Value a) {
    double acc = 0.0;  // reductions accumulate in double
    for (float v : val(a).data) acc += v;
    return unary("sum", Tensor::scalar((float)acc), a, [](Tape& t, Node& nd, int32_t ia) {
      Tensor& g = t.grad_of(ia);
      float gv = nd.grad[0];
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += gv;
    });
  }

  Value mean_all(Value a) {
    const int64_t n = val(a).numel();
    if (n == 0) throw std::invalid_argument("mean: empty");
    double acc = 0.0;
    for (float v : val(a).data) acc += v;
    return unary("mean", Tensor::scalar((float)(acc / (double)n)), a,
                 [n](Tape& t, Node& nd, int32_t ia) {
                   Tensor& g = t.grad_of(ia);
                   float gv = nd.grad[0] / (float)n;
                   for (int64_t i = 0; i < g.numel(); ++i) g[i] += gv;
                 });
  }

  Value rowwise_sum(Value a) {
    const Tensor& A = val(a);
    const int64_t m = A.rows(), n = A.cols();
    Tensor out = Tensor::zeros(m, 1);
    for (int64_t r = 0; r < m; ++r) {
      double acc = 0.0;
      for (int64_t c = 0; c < n; ++c) acc += A(r, c);
      out[r] = (float)acc;
    }
    return unary("rowwise_sum", std::move(out), a, [n](Tape& t, Node& nd, int32_t ia) {
      Tensor& g = t.grad_of(ia);
      const Tensor& G = nd.grad;
      for (int64_t r = 0; r < G.rows(); ++r)
        for (int64_t c = 0; c < n; ++c) g(r, c) += G[r];
    });
  }

  // Euclidean norm per row; subgradient 0 at the origin.
  Value rowwise_l2norm(Value a) {
    const Tensor& A = val(a);
    const int64_t m = A.rows(), n = A.cols();
    Tensor out = Tensor::zeros(m, 1);
    for (int64_t r = 0; r < m; ++r) {
      double acc = 0.0;
      for (int64_t c = 0; c < n; ++c) acc += (double)A(r, c) * A(r, c);
      out[r] = (float)std::sqrt(acc);
    }
    Tensor saved = out;
    return unary("rowwise_l2norm", std::move(out), a, [saved, n](Tape& t, Node& nd, int32_t ia) {
      Tensor& g = t.grad_of(ia);
      const Tensor& X = t.nodes_[ia].value;
      for (int64_t r = 0; r < saved.rows(); ++r) {
        float nr = saved[r];
        if (nr < 1e-12f) continue;
        float gv = nd.grad[r] / nr;
        for (int64_t c = 0; c < n; ++c) g(r, c) += gv * X(r, c);
      }
    });
  }

  // Per-row min over entries where mask != 0, else `fallback`. Gradient routes
  // to the arg-min entry (first minimal one); fallback rows get none.
  Value rowwise_min_masked(Value a, const Tensor& mask, float fallback) {
    const Tensor& A = val(a);
    if (!A.same_shape(mask)) throw std::invalid_argument("rowwise_min_masked: mask shape");
    const int64_t m = A.rows(), n = A.cols();
    Tensor out = Tensor::zeros(m, 1);
    std::vector<int32_t> arg(m, -1);
    for (int64_t r = 0; r < m; ++r) {
      float best = fallback;
      int32_t bi = -1;
      for (int64_t c = 0; c < n; ++c) {
        if (mask(r, c) != 0.f && (bi < 0 || A(r, c) < best)) {
          best = A(r, c);
          bi = (int32_t)c;
        }
      }
      out[r] = best;
      arg[r] = bi;
    }
    return unary("rowwise_min_masked", std::move(out), a,
                 [arg = std::move(arg)](Tape& t, Node& nd, int32_t ia) {
                   Tensor& g = t.grad_of(ia);
                   for (int64_t r = 0; r < (int64_t)arg.size(); ++r)
                     if (arg[r] >= 0) g(r, arg[r]) += nd.grad[r];
                 });
  }

  // w_i = a_i * prod_{j<i} (1 - a_j), per row. The quadrature weights of the
  // volume rendering sum.
  Value composite_weights(Value alpha) {
    const Tensor& A = val(alpha);
    const int64_t m = A.rows(), n = A.cols();
    Tensor out = Tensor::zeros(m, n);
    Tensor trans = Tensor::zeros(m, n);
    for (int64_t r = 0; r < m; ++r) {
      float T = 1.f;
      for (int64_t c = 0; c < n; ++c) {
        trans(r, c) = T;
        out(r, c) = A(r, c) * T;
        T *= (1.f - A(r, c));
      }
    }
    Tensor w_saved = out;
    return unary("composite_weights", std::move(out), alpha,
                 [trans = std::move(trans), w_saved](Tape& t, Node& nd, int32_t ia) {
                   Tensor& g = t.grad_of(ia);
                   const Tensor& A2 = t.nodes_[ia].value;
                   const Tensor& G = nd.grad;
                   const int64_t m = G.rows(), n = G.cols();
                   for (int64_t r = 0; r < m; ++r) {
                     double suffix = 0.0;  // sum_{i>c} G_i w_i
                     for (int64_t c = n - 1; c >= 0; --c) {
                       float om = std::max(1.f - A2(r, c), 1e-8f);
                       g(r, c) += G(r, c) * trans(r, c) - (float)(suffix / om);
                       suffix += (double)G(r, c) * w_saved(r, c);
                     }
                   }
                 });
  }

  // -[q log p + (1-q) log(1-p)] with p clamped to [1e-6, 1-1e-6].
  Value bce(Value p, Value q) {
    const Tensor& P = val(p);
    const Tensor& Q = val(q);
    if (!P.same_shape(Q)) throw std::invalid_argument("bce: shape mismatch");
    Tensor out = Tensor::zeros(P.rows(), P.cols());
    for (int64_t i = 0; i < out.numel(); ++i) {
      float pc = std::clamp(P[i], kBceLo, kBceHi);
      out[i] = -(Q[i] * std::log(pc) + (1.f - Q[i]) * std::log(1.f - pc));
    }
    return binary("bce", std::move(out), p, q, [](Tape& t, Node& nd, int32_t ip, int32_t iq) {
      const Tensor& P2 = t.nodes_[ip].value;
      const Tensor& Q2 = t.nodes_[iq].value;
      const Tensor& G = nd.grad;
      if (t.wants(ip)) {
        Tensor& g = t.grad_of(ip);
        for (int64_t i = 0; i < g.numel(); ++i) {
          float pv = P2[i];
          if (pv <= kBceLo || pv >= kBceHi) continue;  // clamped: flat
          g[i] += G[i] * (pv - Q2[i]) / (pv * (1.f - pv));
        }
      }
      if (t.wants(iq)) {
        Tensor& g = t.grad_of(iq);
        for (int64_t i = 0; i < g.numel(); ++i) {
          float pc = std::clamp(P2[i], kBceLo, kBceHi);
          g[i] += G[i] * std::log((1.f - pc) / pc);
        }
      }
    });
  }

  // BCE against sigmoid(z) in logit space: t*softplus(-z) + (1-t)*softplus(z).
  // Exact for large |z|, no clamping needed.
  Value bce_logits(Value z, Value target) {
    const Tensor& Z = val(z);
    const Tensor& T = val(target);
    if (!Z.same_shape(T)) throw std::invalid_argument("bce_logits: shape mismatch");
    Tensor out = Tensor::zeros(Z.rows(), Z.cols());
    for (int64_t i = 0; i < out.numel(); ++i)
      out[i] = T[i] * softplusf(-Z[i]) + (1.f - T[i]) * softplusf(Z[i]);
    return binary("bce_logits", std::move(out), z, target,
                  [](Tape& t, Node& nd, int32_t iz, int32_t it) {
                    const Tensor& Z2 = t.nodes_[iz].value;
                    const Tensor& T2 = t.nodes_[it].value;
                    const Tensor& G = nd.grad;
                    if (t.wants(iz)) {
                      Tensor& g = t.grad_of(iz);
                      for (int64_t i = 0; i < g.numel(); ++i)
                        g[i] += G[i] * (sigmoidf(Z2[i]) - T2[i]);
                    }
                    if (t.wants(it)) {
                      Tensor& g = t.grad_of(it);
                      for (int64_t i = 0; i < g.numel(); ++i) g[i] += G[i] * (-Z2[i]);
                    }
                  });
  }

  // Custom node hook: `value` plus an arbitrary backward closure. The closure
  // receives this tape and the node (with .grad final).
  Value custom(const char* op, Tensor value, std::vector<Value> parents,
               std::function<void(Tape&, const Tensor& grad)> backward_fn) {
    bool rg = false;
    for (Value p : parents) {
      check_same_tape(p);
      rg = rg || nodes_[p.id].requires_grad;
    }
    if (!rg || !backward_fn) return push(op, std::move(value), rg, nullptr);
    return push(op, std::move(value), true,
                [fn = std::move(backward_fn)](Tape& t, Node& nd) { fn(t, nd.grad); });
  }

  Tensor& grad_of(int32_t id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty()) {
      n.grad.shape = n.value.shape;
      n.grad.data.assign(n.value.data.size(), 0.f);
    }
    return n.grad;
  }

  bool wants(int32_t id) const { return nodes_[id].requires_grad; }

 private:
  static constexpr float kBceLo = 1e-6f;
  static constexpr float kBceHi = 1.f - 1e-6f;

  void check_same_tape(Value v) const {
    if (v.tape != this) throw std::invalid_argument("op: value from another tape");
  }

  void accumulate(int32_t id, const Tensor& g) {
    Tensor& dst = grad_of(id);
    for (int64_t i = 0; i < dst.numel(); ++i) dst[i] += g[i];
  }

  Value push(const char* op, Tensor value, bool requires_grad,
             std::function<void(Tape&, Node&)> backward_fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.op = op;
    n.backward = std::move(backward_fn);
    nodes_.push_back(std::move(n));
    return Value{this, (int32_t)nodes_.size() - 1};
  }

  template <class F>
  Value unary(const char* op, Tensor out, Value a, F&& fn) {
    check_same_tape(a);
    if (!nodes_[a.id].requires_grad) return push(op, std::move(out), false, nullptr);
    return push(op, std::move(out), true,
                [fn = std::forward<F>(fn), ia = a.id](Tape& t, Node& nd) { fn(t, nd, ia); });
  }

  template <class F>
  Value binary(const char* op, Tensor out, Value a, Value b, F&& fn) {
    check_same_tape(a);
    check_same_tape(b);
    bool rg = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
    if (!rg) return push(op, std::move(out), false, nullptr);
    return push(op, std::move(out), true,
                [fn = std::forward<F>(fn), ia = a.id, ib = b.id](Tape& t, Node& nd) {
                  fn(t, nd, ia, ib);
                });
  }

  std::vector<Node> nodes_;
};

}  // namespace hrf::ad
