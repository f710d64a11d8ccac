#pragma once

#include <string>

#include "hrf/autodiff.hpp"
#include "hrf/fields.hpp"

namespace hrf {

// Published training weights plus the two mapping constants.
struct LossWeights {
  float rec = 1.f;
  float mask = 1.f;
  float blend = 0.1f;
  float geom = 0.02f;
  float seg = 0.02f;
  float reg = 0.0005f;
  float eik = 1e-6f;
  float fit = 1.f;
  float inc = 0.02f;
  float eta = 1.f;      // background term weight inside l_blend
  float lambda = 0.1f;  // density-to-probability sharpness in l_geom

  void validate() const {
    for (float w : {rec, mask, blend, geom, seg, reg, eik, fit, inc, eta, lambda})
      if (w < 0.f) throw std::invalid_argument("LossWeights: weights must be >= 0");
  }
};

struct LossReport {
  int64_t step = 0;
  float rec = 0, mask = 0, blend = 0, geom = 0, seg = 0, eik = 0, reg = 0, fit = 0, inc = 0;
  float total = 0;
  float lr = 0;
};

namespace loss {

// Per-ray L1 color error: [R,1] from rendered [R,3] and observed constants.
inline ad::Value l1_per_ray(ad::Tape& t, ad::Value rendered, ad::Value observed) {
  return t.rowwise_sum(t.abs_(t.sub(rendered, observed)));
}

// Eq.-style reconstruction term: mean over rays of the per-ray L1.
inline ad::Value rec(ad::Tape& t, ad::Value rendered, ad::Value observed) {
  return t.mean_all(l1_per_ray(t, rendered, observed));
}

// Masked restricted-render term: mean over all rays of M * L1.
inline ad::Value mask(ad::Tape& t, ad::Value restricted, ad::Value observed,
                      const Tensor& mask_col) {
  return t.mean_all(t.mul_colvec(l1_per_ray(t, restricted, observed), t.constant(mask_col)));
}

// Blended term: mean of (M + eta (1-M)) * L1 of the blended render.
inline ad::Value blend(ad::Tape& t, ad::Value blended, ad::Value observed,
                       const Tensor& mask_col, float eta) {
  Tensor w = mask_col;
  for (auto& v : w.data) v = v + eta * (1.f - v);
  return t.mean_all(t.mul_colvec(l1_per_ray(t, blended, observed), t.constant(w)));
}

// Density/SDF coupling: BCE(sigmoid(lambda (sigma - sigma_h)), pseudo_alpha)
// over in-box samples. Both arguments are occupancy probabilities.
inline ad::Value geom(ad::Tape& t, ad::Value sigma_inbox, ad::Value pseudo_alpha_inbox,
                      float lambda, float sigma_h) {
  if (t.val(sigma_inbox).numel() == 0) return t.constant(Tensor::scalar(0.f));
  ad::Value p = t.sigmoid(t.scale(t.add_scalar(sigma_inbox, -sigma_h), lambda));
  return t.mean_all(t.bce(p, pseudo_alpha_inbox));
}

// Ray/mask consistency on the composite SDF minimum, in logit space.
inline ad::Value seg(ad::Tape& t, ad::Value d_min, const Tensor& mask_col, float gamma) {
  return t.mean_all(t.bce_logits(t.scale(d_min, -gamma), t.constant(mask_col)));
}

// Eikonal penalty from the three directional derivatives of d_hat plus the
// constant body-SDF gradient.
inline ad::Value eikonal(ad::Tape& t, const Tensor& body_grad /*[P,3]*/, ad::Value du0,
                         ad::Value du1, ad::Value du2) {
  const int64_t p = body_grad.rows();
  if (p == 0) return t.constant(Tensor::scalar(0.f));
  Tensor g0 = Tensor::zeros(p, 1), g1 = Tensor::zeros(p, 1), g2 = Tensor::zeros(p, 1);
  for (int64_t i = 0; i < p; ++i) {
    g0[i] = body_grad(i, 0);
    g1[i] = body_grad(i, 1);
    g2[i] = body_grad(i, 2);
  }
  ad::Value c0 = t.add(du0, t.constant(g0));
  ad::Value c1 = t.add(du1, t.constant(g1));
  ad::Value c2 = t.add(du2, t.constant(g2));
  ad::Value nsq = t.add(t.add(t.square(c0), t.square(c1)), t.square(c2));
  ad::Value n = t.sqrt_(nsq, 1e-12f);
  return t.mean_all(t.square(t.add_scalar(n, -1.f)));
}

// Non-positivity of the residual: mean ReLU(delta_d).
inline ad::Value reg(ad::Tape& t, ad::Value delta_d) {
  if (t.val(delta_d).numel() == 0) return t.constant(Tensor::scalar(0.f));
  return t.mean_all(t.relu(delta_d));
}

// Same mapping as `seg`, on the bare body d_min carrying pose/shape grads.
inline ad::Value fit(ad::Tape& t, ad::Value body_d_min, const Tensor& mask_col, float gamma) {
  return seg(t, body_d_min, mask_col, gamma);
}

// ||dbeta||_2 + mean_t ||dtheta_t||_2
inline ad::Value inc(ad::Tape& t, ad::Value dbeta_row, ad::Value dtheta_rows) {
  ad::Value nb = t.mean_all(t.rowwise_l2norm(dbeta_row));  // single row: mean == value
  return t.add(nb, t.mean_all(t.rowwise_l2norm(dtheta_rows)));
}

struct Terms {
  ad::Value rec, mask, blend, geom, seg, eik, reg, fit, inc;
  bool has_fit = false;
};

// Weighted sum; aborts on a non-finite term, naming it.
inline ad::Value total(ad::Tape& t, const Terms& terms, const LossWeights& w, LossReport& report) {
  auto pick = [&](ad::Value v, float weight, float& slot, const char* name) {
    if (!v.valid()) {
      slot = 0.f;
      return ad::Value{};
    }
    float val = t.val(v)[0];
    if (!std::isfinite(val))
      throw std::runtime_error(std::string("total_loss: non-finite term ") + name);
    slot = val;
    return t.scale(v, weight);
  };
  ad::Value acc{};
  auto add_in = [&](ad::Value v) {
    if (!v.valid()) return;
    acc = acc.valid() ? t.add(acc, v) : v;
  };
  add_in(pick(terms.rec, w.rec, report.rec, "l_rec"));
  add_in(pick(terms.mask, w.mask, report.mask, "l_mask"));
  add_in(pick(terms.blend, w.blend, report.blend, "l_blend"));
  add_in(pick(terms.geom, w.geom, report.geom, "l_geom"));
  add_in(pick(terms.seg, w.seg, report.seg, "l_seg"));
  add_in(pick(terms.eik, w.eik, report.eik, "l_eik"));
  add_in(pick(terms.reg, w.reg, report.reg, "l_reg"));
  if (terms.has_fit) {
    add_in(pick(terms.fit, w.fit, report.fit, "l_fit"));
    add_in(pick(terms.inc, w.inc, report.inc, "l_inc"));
  }
  report.total = acc.valid() ? t.val(acc)[0] : 0.f;
  if (!std::isfinite(report.total)) throw std::runtime_error("total_loss: non-finite total");
  return acc;
}

}  // namespace loss
}  // namespace hrf
