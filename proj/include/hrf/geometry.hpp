#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

namespace hrf {

using Vec3 = Eigen::Vector3f;
using Mat3 = Eigen::Matrix3f;

// Rigid transform y = R x + t.
struct Rigid {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return R * x + t; }
  Rigid inverse() const { return {R.transpose(), -(R.transpose() * t)}; }
  Rigid compose(const Rigid& o) const { return {R * o.R, R * o.t + t}; }  // this ∘ o
  static Rigid identity() { return {}; }
  static Rigid translation(const Vec3& t) { return {Mat3::Identity(), t}; }
};

// Axis-angle to rotation matrix (Rodrigues).
inline Mat3 rodrigues(const Vec3& w) {
  float angle = w.norm();
  if (angle < 1e-8f) {
    Mat3 K;
    K << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    return Mat3::Identity() + K;  // first order, exact enough below the cutoff
  }
  Vec3 axis = w / angle;
  Eigen::AngleAxisf aa(angle, axis);
  return aa.toRotationMatrix();
}

inline Mat3 skew(const Vec3& v) {
  Mat3 K;
  K << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return K;
}

// dR/dw_i for the axis-angle parameterization (Gallego & Yezzi closed form).
inline void rodrigues_jacobian(const Vec3& w, Mat3 dR[3]) {
  float n2 = w.squaredNorm();
  if (n2 < 1e-12f) {
    for (int i = 0; i < 3; ++i) dR[i] = skew(Vec3::Unit(i));
    return;
  }
  Mat3 R = rodrigues(w);
  Mat3 ImR = Mat3::Identity() - R;
  for (int i = 0; i < 3; ++i) {
    Vec3 e = Vec3::Unit(i);
    Vec3 v = w.cross(ImR * e);
    dR[i] = (skew(w) * w[i] + skew(v)) * R / n2;
  }
}

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<float>::max());
  Vec3 hi = Vec3::Constant(std::numeric_limits<float>::lowest());

  void expand(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void expand(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  void inflate(float eps) {
    lo.array() -= eps;
    hi.array() += eps;
  }
  bool contains(const Vec3& p) const {
    return p.x() >= lo.x() && p.x() <= hi.x() && p.y() >= lo.y() && p.y() <= hi.y() &&
           p.z() >= lo.z() && p.z() <= hi.z();
  }
  bool valid() const { return (hi.array() >= lo.array()).all(); }
  Vec3 extent() const { return hi - lo; }
  Vec3 center() const { return 0.5f * (lo + hi); }

  // Slab intersection of ray o + s*d with the box; returns false on miss.
  bool clip_ray(const Vec3& o, const Vec3& d, float& s0, float& s1) const {
    float t0 = 0.f, t1 = std::numeric_limits<float>::max();
    for (int a = 0; a < 3; ++a) {
      if (std::fabs(d[a]) < 1e-12f) {
        if (o[a] < lo[a] || o[a] > hi[a]) return false;
        continue;
      }
      float inv = 1.f / d[a];
      float ta = (lo[a] - o[a]) * inv;
      float tb = (hi[a] - o[a]) * inv;
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 > t1) return false;
    }
    s0 = t0;
    s1 = t1;
    return true;
  }
};

}  // namespace hrf
