#pragma once

#include <vector>

#include "hrf/body_model.hpp"
#include "hrf/nn.hpp"
#include "hrf/renderer.hpp"

namespace hrf {

struct FieldHyper {
  float gamma = 200.f;           // pseudo-alpha sharpness
  float sigma_h = 50.f;          // density iso-threshold
  float noise_std = 0.1f;        // condition-code noise, training only
  float exterior_distance = 1.f; // distance channel outside the box

  void validate() const {
    if (!(gamma > 0.f) || !(sigma_h > 0.f))
      throw std::invalid_argument("FieldHyper: gamma and sigma_h must be positive");
  }
};

struct FieldConfig {
  int trunk_depth = 8;
  int trunk_width = 256;
  int trunk_skip = 4;
  int residual_depth = 6;
  int residual_width = 128;
  int residual_skip = 3;
  int color_hidden = 128;
  int pos_enc = 8;   // levels for the 3-vector channel
  int dist_enc = 1;  // levels for the scalar distance channel
  int view_enc = 4;  // levels for the view direction

  int descriptor_dim() const { return encoding_dim(3, pos_enc) + encoding_dim(1, dist_enc); }
  int view_dim() const { return encoding_dim(3, view_enc); }
};

// Pose + root + view conditioning for one ray.
struct ConditionCode {
  std::vector<float> theta;
  Rigid root;
  Vec3 view = Vec3(0, 0, 1);  // unit

  std::vector<float> root_flat() const {
    std::vector<float> out(12);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out[3 * r + c] = root.R(r, c);
    for (int i = 0; i < 3; ++i) out[9 + i] = root.t[i];
    return out;
  }
};

// i.i.d. Gaussian on every component; the view direction is re-normalized.
inline ConditionCode perturb_code(const ConditionCode& code, float noise_std, Rng& rng) {
  if (noise_std < 0.f) throw std::invalid_argument("perturb_code: noise_std >= 0");
  if (noise_std == 0.f) return code;
  ConditionCode out = code;
  for (auto& v : out.theta) v += noise_std * rng.normal();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out.root.R(r, c) += noise_std * rng.normal();
  for (int i = 0; i < 3; ++i) out.root.t[i] += noise_std * rng.normal();
  for (int i = 0; i < 3; ++i) out.view[i] += noise_std * rng.normal();
  float n = out.view.norm();
  out.view = n > 1e-6f ? Vec3(out.view / n) : Vec3(0, 0, 1);
  return out;
}

// alpha-from-SDF: sigmoid(-gamma d), opaque inside the surface.
inline float pseudo_alpha(float d_hat, float gamma) { return ad::sigmoidf(-gamma * d_hat); }

struct DescriptorFeatures {
  std::vector<float> values;  // descriptor_dim()
  bool inside = false;
  QueryDetail detail;  // valid only when inside
};

// In-box points get the canonical (s, d) encoding; exterior points keep their
// raw position with a constant distance channel and never touch the body.
inline DescriptorFeatures descriptor_features(const BodyModel& model, const PosedBody& body,
                                              const Vec3& x, const FieldConfig& cfg,
                                              const FieldHyper& hyper) {
  DescriptorFeatures out;
  out.values.resize(cfg.descriptor_dim());
  float* pos_part = out.values.data();
  float* dist_part = out.values.data() + encoding_dim(3, cfg.pos_enc);
  if (in_box(x, body.box)) {
    out.inside = true;
    out.detail = model.query_posed(x, body);
    positional_encoding_into(out.detail.desc.s.data(), 3, cfg.pos_enc, pos_part);
    positional_encoding_into(&out.detail.desc.d, 1, cfg.dist_enc, dist_part);
  } else {
    positional_encoding_into(x.data(), 3, cfg.pos_enc, pos_part);
    positional_encoding_into(&hyper.exterior_distance, 1, cfg.dist_enc, dist_part);
  }
  return out;
}

// Canonical radiance field: trunk on (descriptor, theta) emitting density and
// a feature vector; color head additionally sees the encoded view direction
// and the flattened root transform. Density never sees the view direction.
class RadianceField {
 public:
  RadianceField() = default;
  RadianceField(const FieldConfig& cfg, int theta_dim, ParamStore& store, Rng& rng)
      : cfg_(cfg), theta_dim_(theta_dim) {
    MlpConfig trunk_cfg{cfg.trunk_depth, cfg.trunk_width, cfg.trunk_skip,
                        cfg.descriptor_dim() + theta_dim, cfg.trunk_width + 1};
    trunk_ = Mlp(trunk_cfg, "radiance.trunk", store, rng);
    int head_in = cfg.trunk_width + cfg.view_dim() + 12;
    w_h_ = &store.add("radiance.color.w0", uniform_init(head_in, cfg.color_hidden, rng));
    b_h_ = &store.add("radiance.color.b0", uniform_init(1, cfg.color_hidden, rng, head_in));
    w_c_ = &store.add("radiance.color.w1", uniform_init(cfg.color_hidden, 3, rng));
    b_c_ = &store.add("radiance.color.b1", uniform_init(1, 3, rng, cfg.color_hidden));
  }

  struct Out {
    ad::Value color;  // [P,3] in (0,1)
    ad::Value sigma;  // [P,1] >= 0
  };

  // `features_theta`: [P, descriptor+theta]; `view_root`: [P, view_dim+12].
  Out eval(ad::Tape& t, BoundParams& bp, ad::Value features_theta, ad::Value view_root) const {
    ad::Value trunk_out = trunk_.forward(t, bp, features_theta);
    ad::Value sigma = t.softplus(t.slice_cols(trunk_out, 0, 1));
    ad::Value feature = t.slice_cols(trunk_out, 1, cfg_.trunk_width + 1);
    ad::Value h = t.swish(t.add_rowvec(
        t.matmul(t.concat_cols({feature, view_root}), bp.get(t, *w_h_)), bp.get(t, *b_h_)));
    ad::Value color =
        t.sigmoid(t.add_rowvec(t.matmul(h, bp.get(t, *w_c_)), bp.get(t, *b_c_)));
    return {color, sigma};
  }

  struct PlainOut {
    Tensor color;  // [P,3]
    Tensor sigma;  // [P,1]
  };

  PlainOut eval_plain(const Tensor& features_theta, const Tensor& view_root) const {
    Tensor trunk_out = trunk_.forward_plain(features_theta);
    const int64_t p = trunk_out.rows();
    PlainOut out;
    out.sigma = Tensor::zeros(p, 1);
    Tensor feature = Tensor::zeros(p, cfg_.trunk_width + cfg_.view_dim() + 12);
    for (int64_t r = 0; r < p; ++r) {
      out.sigma[r] = ad::softplusf(trunk_out(r, 0));
      std::copy_n(&trunk_out.data[r * trunk_out.cols() + 1], cfg_.trunk_width,
                  &feature.data[r * feature.cols()]);
      std::copy_n(&view_root.data[r * view_root.cols()], view_root.cols(),
                  &feature.data[r * feature.cols() + cfg_.trunk_width]);
    }
    Tensor h = Tensor::zeros(p, cfg_.color_hidden);
    h.mat().noalias() = feature.mat() * w_h_->value.mat();
    for (int64_t r = 0; r < p; ++r)
      for (int64_t c = 0; c < h.cols(); ++c) h(r, c) = ad::swishf(h(r, c) + b_h_->value[c]);
    out.color = Tensor::zeros(p, 3);
    out.color.mat().noalias() = h.mat() * w_c_->value.mat();
    for (int64_t r = 0; r < p; ++r)
      for (int64_t c = 0; c < 3; ++c)
        out.color(r, c) = ad::sigmoidf(out.color(r, c) + b_c_->value[c]);
    return out;
  }

  const FieldConfig& config() const { return cfg_; }
  int theta_dim() const { return theta_dim_; }

 private:
  static Tensor uniform_init(int64_t r, int64_t c, Rng& rng, int64_t fan_in = 0) {
    if (fan_in == 0) fan_in = r;
    float bound = 1.f / std::sqrt((float)fan_in);
    Tensor t = Tensor::zeros(r, c);
    for (auto& v : t.data) v = rng.uniform(-bound, bound);
    return t;
  }

  FieldConfig cfg_;
  int theta_dim_ = 0;
  Mlp trunk_;
  Parameter* w_h_ = nullptr;
  Parameter* b_h_ = nullptr;
  Parameter* w_c_ = nullptr;
  Parameter* b_c_ = nullptr;
};

// Residual SDF on (descriptor, theta). The output layer starts at zero so the
// composite distance begins as the bare body SDF.
class ResidualField {
 public:
  ResidualField() = default;
  ResidualField(const FieldConfig& cfg, int theta_dim, ParamStore& store, Rng& rng) {
    MlpConfig mlp_cfg{cfg.residual_depth, cfg.residual_width, cfg.residual_skip,
                      cfg.descriptor_dim() + theta_dim, 1};
    mlp_ = Mlp(mlp_cfg, "residual", store, rng, /*zero_init_output=*/true);
  }

  ad::Value eval(ad::Tape& t, BoundParams& bp, ad::Value features_theta,
                 std::vector<ad::Value>* preacts = nullptr) const {
    return mlp_.forward(t, bp, features_theta, preacts);
  }

  ad::Value eval_jvp(ad::Tape& t, BoundParams& bp, ad::Value tangent,
                     const std::vector<ad::Value>& preacts) const {
    return mlp_.forward_jvp(t, bp, tangent, preacts);
  }

  Tensor eval_plain(const Tensor& features_theta) const { return mlp_.forward_plain(features_theta); }

  const Mlp& mlp() const { return mlp_; }

 private:
  Mlp mlp_;
};

// d_hat = body SDF + residual, for a single in-box point (inference path).
inline float composite_sdf_plain(const BodyModel& model, const PosedBody& body,
                                 const ResidualField& residual, const Vec3& x,
                                 const std::vector<float>& theta_cond, const FieldConfig& cfg,
                                 const FieldHyper& hyper) {
  DescriptorFeatures feats = descriptor_features(model, body, x, cfg, hyper);
  if (!feats.inside) throw std::invalid_argument("composite_sdf: point outside the box");
  Tensor in = Tensor::zeros(1, cfg.descriptor_dim() + (int)theta_cond.size());
  std::copy(feats.values.begin(), feats.values.end(), in.data.begin());
  std::copy(theta_cond.begin(), theta_cond.end(), in.data.begin() + feats.values.size());
  return feats.detail.desc.d + residual.eval_plain(in)[0];
}

}  // namespace hrf
