#pragma once

#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "hrf/autodiff.hpp"
#include "hrf/rng.hpp"
#include "hrf/tensor.hpp"

namespace hrf {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  float lr_scale = 1.f;

  void reset_grad() {
    grad.shape = value.shape;
    grad.data.assign(value.data.size(), 0.f);
  }
};

// Owns every trainable tensor; deque keeps references stable.
struct ParamStore {
  std::deque<Parameter> params;

  Parameter& add(const std::string& name, Tensor value, float lr_scale = 1.f) {
    for (auto& p : params)
      if (p.name == name) throw std::invalid_argument("duplicate parameter: " + name);
    params.push_back({name, std::move(value), {}, lr_scale});
    params.back().reset_grad();
    return params.back();
  }

  Parameter* find(const std::string& name) {
    for (auto& p : params)
      if (p.name == name) return &p;
    return nullptr;
  }

  void reset_grads() {
    for (auto& p : params) p.reset_grad();
  }
};

// Per-step binding of parameters to tape leaves. Values are created lazily so
// only parameters actually touched by the step appear in the graph.
class BoundParams {
 public:
  ad::Value get(ad::Tape& tape, Parameter& p) {
    for (auto& [pp, v] : bound_)
      if (pp == &p) return v;
    ad::Value v = tape.leaf(p.value, true);
    bound_.push_back({&p, v});
    return v;
  }

  // Copies tape gradients back into parameter .grad (accumulating).
  void harvest(ad::Tape& tape) {
    for (auto& [pp, v] : bound_) {
      if (!tape.has_grad(v)) continue;
      const Tensor& g = tape.grad(v);
      for (int64_t i = 0; i < pp->grad.numel(); ++i) pp->grad[i] += g[i];
    }
  }

 private:
  std::vector<std::pair<Parameter*, ad::Value>> bound_;
};

// --- sinusoidal positional encoding ---

struct EncodingConfig {
  int m = 0;  // frequency levels; output is dim*(1+2m)
};

inline int encoding_dim(int input_dim, int m) { return input_dim * (1 + 2 * m); }

// [p, sin(2^0 p), cos(2^0 p), ..., sin(2^{m-1} p), cos(2^{m-1} p)], blockwise
// per level, applied per coordinate.
inline void positional_encoding_into(const float* p, int dim, int m, float* out) {
  for (int i = 0; i < dim; ++i) out[i] = p[i];
  float freq = 1.f;
  for (int k = 0; k < m; ++k) {
    float* s = out + dim * (1 + 2 * k);
    float* c = s + dim;
    for (int i = 0; i < dim; ++i) {
      s[i] = std::sin(freq * p[i]);
      c[i] = std::cos(freq * p[i]);
    }
    freq *= 2.f;
  }
}

inline std::vector<float> positional_encoding(const std::vector<float>& p, const EncodingConfig& cfg) {
  std::vector<float> out(encoding_dim((int)p.size(), cfg.m));
  positional_encoding_into(p.data(), (int)p.size(), cfg.m, out.data());
  return out;
}

// d(PE)/d(p_i) has the same block layout; the i-th coordinate only influences
// its own lanes. Writes the full Jacobian row for a direction `dp`:
// out = d(PE(p))/dp . dp.
inline void positional_encoding_jvp_into(const float* p, const float* dp, int dim, int m, float* out) {
  for (int i = 0; i < dim; ++i) out[i] = dp[i];
  float freq = 1.f;
  for (int k = 0; k < m; ++k) {
    float* s = out + dim * (1 + 2 * k);
    float* c = s + dim;
    for (int i = 0; i < dim; ++i) {
      s[i] = freq * std::cos(freq * p[i]) * dp[i];
      c[i] = -freq * std::sin(freq * p[i]) * dp[i];
    }
    freq *= 2.f;
  }
}

inline float swish(float x) { return ad::swishf(x); }

// --- MLP ---

struct MlpConfig {
  int depth = 8;
  int width = 256;
  int skip_layer = 4;  // input re-concatenated before this hidden layer
  int input_dim = 3;
  int output_dim = 1;

  void validate() const {
    if (!(skip_layer > 0 && skip_layer < depth))
      throw std::invalid_argument("MlpConfig: skip_layer must satisfy 0 < skip < depth");
    if (depth < 1 || width < 1 || input_dim < 1 || output_dim < 1)
      throw std::invalid_argument("MlpConfig: bad dimensions");
  }
};

// Fully connected net with Swish hidden activations, a skip concat of the raw
// input before layer `skip_layer`, and a linear output layer.
class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpConfig cfg, const std::string& name, ParamStore& store, Rng& rng,
      bool zero_init_output = false)
      : cfg_(cfg) {
    cfg.validate();
    int in = cfg.input_dim;
    for (int i = 0; i < cfg.depth; ++i) {
      if (i == cfg.skip_layer) in += cfg.input_dim;
      w_.push_back(&store.add(name + ".w" + std::to_string(i), init_mat(in, cfg.width, rng)));
      b_.push_back(&store.add(name + ".b" + std::to_string(i), init_mat(1, cfg.width, rng, in)));
      in = cfg.width;
    }
    Tensor wout = zero_init_output ? Tensor::zeros(in, cfg.output_dim)
                                   : init_mat(in, cfg.output_dim, rng);
    w_.push_back(&store.add(name + ".w_out", std::move(wout)));
    b_.push_back(&store.add(name + ".b_out", zero_init_output
                                                 ? Tensor::zeros(1, cfg.output_dim)
                                                 : init_mat(1, cfg.output_dim, rng, in)));
  }

  const MlpConfig& config() const { return cfg_; }

  ad::Value forward(ad::Tape& t, BoundParams& bp, ad::Value x,
                    std::vector<ad::Value>* preacts = nullptr) const {
    ad::Value h = x;
    for (int i = 0; i < cfg_.depth; ++i) {
      if (i == cfg_.skip_layer) h = t.concat_cols({h, x});
      ad::Value z = t.add_rowvec(t.matmul(h, bp.get(t, *w_[i])), bp.get(t, *b_[i]));
      if (preacts) preacts->push_back(z);
      h = t.swish(z);
    }
    return t.add_rowvec(t.matmul(h, bp.get(t, *w_.back())), bp.get(t, *b_.back()));
  }

  // Directional derivative of the output w.r.t. the input, built out of tape
  // ops so that it stays differentiable w.r.t. the weights. `tangent0` is the
  // input tangent (same rows as x); `preacts` must come from forward().
  ad::Value forward_jvp(ad::Tape& t, BoundParams& bp, ad::Value tangent0,
                        const std::vector<ad::Value>& preacts) const {
    ad::Value tan = tangent0;
    for (int i = 0; i < cfg_.depth; ++i) {
      if (i == cfg_.skip_layer) tan = t.concat_cols({tan, tangent0});
      ad::Value tz = t.matmul(tan, bp.get(t, *w_[i]));
      tan = t.mul(t.dswish(preacts[i]), tz);
    }
    return t.matmul(tan, bp.get(t, *w_.back()));
  }

  // Same math without the tape, for inference.
  Tensor forward_plain(const Tensor& x) const {
    Tensor h = x;
    for (int i = 0; i < cfg_.depth; ++i) {
      if (i == cfg_.skip_layer) h = hcat(h, x);
      h = affine(h, *w_[i], *b_[i]);
      for (auto& v : h.data) v = ad::swishf(v);
    }
    return affine(h, *w_.back(), *b_.back());
  }

  std::vector<Parameter*> parameters() const {
    std::vector<Parameter*> out;
    for (auto* p : w_) out.push_back(p);
    for (auto* p : b_) out.push_back(p);
    return out;
  }

  Parameter& output_weight() { return *w_.back(); }
  Parameter& output_bias() { return *b_.back(); }

 private:
  static Tensor init_mat(int64_t r, int64_t c, Rng& rng, int64_t fan_in = 0) {
    // torch-style uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
    if (fan_in == 0) fan_in = r;
    float bound = 1.f / std::sqrt((float)fan_in);
    Tensor t = Tensor::zeros(r, c);
    for (auto& v : t.data) v = rng.uniform(-bound, bound);
    return t;
  }

  static Tensor hcat(const Tensor& a, const Tensor& b) {
    Tensor out = Tensor::zeros(a.rows(), a.cols() + b.cols());
    for (int64_t r = 0; r < a.rows(); ++r) {
      std::copy_n(&a.data[r * a.cols()], a.cols(), &out.data[r * out.cols()]);
      std::copy_n(&b.data[r * b.cols()], b.cols(), &out.data[r * out.cols() + a.cols()]);
    }
    return out;
  }

  static Tensor affine(const Tensor& x, const Parameter& w, const Parameter& b) {
    Tensor out = Tensor::zeros(x.rows(), w.value.cols());
    out.mat().noalias() = x.mat() * w.value.mat();
    for (int64_t r = 0; r < out.rows(); ++r)
      for (int64_t c = 0; c < out.cols(); ++c) out(r, c) += b.value[c];
    return out;
  }

  MlpConfig cfg_;
  std::vector<Parameter*> w_;
  std::vector<Parameter*> b_;
};

}  // namespace hrf
