#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hrf/geometry.hpp"

namespace hrf {

// Kinematic tree plus capsules rigidly attached to joints. Bone endpoints are
// expressed in the owning joint's frame and rotate with it.
struct Skeleton {
  struct Joint {
    std::string name;
    int parent = -1;  // parent index < own index
    Vec3 offset = Vec3::Zero();
  };
  struct Bone {
    std::string name;
    int joint = 0;
    Vec3 a = Vec3::Zero(), b = Vec3::Zero();  // distinct endpoints, joint frame
    float radius = 0.f;
  };

  std::vector<Joint> joints;
  std::vector<Bone> bones;

  int theta_dim() const { return 3 * (int)joints.size(); }

  void validate() const {
    for (size_t j = 0; j < joints.size(); ++j)
      if (joints[j].parent >= (int)j)
        throw std::invalid_argument("Skeleton: joints must be in topological order");
    for (const auto& b : bones) {
      if (b.joint < 0 || b.joint >= (int)joints.size())
        throw std::invalid_argument("Skeleton: bone joint out of range");
      if (b.radius <= 0.f) throw std::invalid_argument("Skeleton: bone radius must be > 0");
      if ((b.a - b.b).norm() == 0.f)
        throw std::invalid_argument("Skeleton: bone endpoints must be distinct");
    }
  }
};

// Shape scales (one per bone, applied to endpoints and radius), axis-angle
// pose per joint, and the root transform.
struct BodyParams {
  std::vector<float> beta;   // per-bone scale, > 0
  std::vector<float> theta;  // 3 per joint, radians
  Rigid root;

  static BodyParams rest(const Skeleton& sk) {
    BodyParams p;
    p.beta.assign(sk.bones.size(), 1.f);
    p.theta.assign(sk.theta_dim(), 0.f);
    return p;
  }

  void validate(const Skeleton& sk) const {
    if ((int)theta.size() != sk.theta_dim())
      throw std::invalid_argument("BodyParams: theta dimension mismatch");
    if (beta.size() != sk.bones.size())
      throw std::invalid_argument("BodyParams: beta dimension mismatch");
    for (float b : beta)
      if (!(b > 0.f)) throw std::invalid_argument("BodyParams: beta scale must be > 0");
    Mat3 err = root.R.transpose() * root.R - Mat3::Identity();
    if (err.norm() >= 1e-5f) throw std::invalid_argument("BodyParams: root rotation not orthonormal");
  }
};

// Canonical-frame descriptor of a spatial point: nearest-bone canonical
// coordinate plus signed distance (negative inside).
struct PointDescriptor {
  Vec3 s = Vec3::Zero();
  float d = 0.f;
};

struct BoxConfig {
  float eps = 0.1f;  // margin in meters, >= 0
};

// Per-joint rigid transforms, canonical -> posed, in the root-local frame.
// G[j] = G[parent(j)] * Translate(offset_j) * Rot(theta_j).
inline std::vector<Rigid> forward_kinematics(const Skeleton& sk, const std::vector<float>& theta,
                                             const std::vector<float>* beta = nullptr) {
  if ((int)theta.size() != sk.theta_dim())
    throw std::invalid_argument("forward_kinematics: theta dimension mismatch");
  (void)beta;  // shape does not move joints; capsules scale in pose_body()
  std::vector<Rigid> g(sk.joints.size());
  for (size_t j = 0; j < sk.joints.size(); ++j) {
    Rigid local{rodrigues(Vec3(theta[3 * j], theta[3 * j + 1], theta[3 * j + 2])),
                sk.joints[j].offset};
    g[j] = sk.joints[j].parent < 0 ? local : g[sk.joints[j].parent].compose(local);
  }
  return g;
}

// Per-bone canonical -> posed transforms (root-local): the motion each
// capsule undergoes between the rest pose and `theta`.
inline std::vector<Rigid> bone_transforms(const Skeleton& sk, const std::vector<float>& theta,
                                          const std::vector<float>* beta = nullptr) {
  std::vector<Rigid> g = forward_kinematics(sk, theta, beta);
  std::vector<float> zero(sk.theta_dim(), 0.f);
  std::vector<Rigid> g0 = forward_kinematics(sk, zero);
  std::vector<Rigid> out;
  out.reserve(sk.bones.size());
  for (const auto& bone : sk.bones) out.push_back(g[bone.joint].compose(g0[bone.joint].inverse()));
  return out;
}

// Exact signed distance to a capsule around segment (a,b) with radius r.
inline float capsule_sdf(const Vec3& x, const Vec3& a, const Vec3& b, float r) {
  Vec3 ab = b - a;
  float u = (x - a).dot(ab) / ab.squaredNorm();
  u = std::clamp(u, 0.f, 1.f);
  return (x - (a + u * ab)).norm() - r;
}

// Pose baked out per frame so point queries are a loop over capsules.
struct PosedBody {
  struct Capsule {
    Vec3 a, b;        // root-local posed endpoints
    float radius;
    float inv_len2;   // 1 / |b-a|^2
    Mat3 to_canonical_R;  // rotation of C_j * G_j^-1
    Vec3 to_canonical_t;
  };
  std::vector<Capsule> capsules;
  Rigid root;          // world = root * root-local
  Aabb box;            // world-space B, margin included
};

inline PosedBody pose_body(const Skeleton& sk, const BodyParams& params,
                           const BoxConfig& box_cfg = {}) {
  params.validate(sk);
  std::vector<Rigid> g = forward_kinematics(sk, params.theta);
  std::vector<float> zero(sk.theta_dim(), 0.f);
  std::vector<Rigid> g0 = forward_kinematics(sk, zero);

  PosedBody body;
  body.root = params.root;
  body.capsules.reserve(sk.bones.size());
  for (size_t k = 0; k < sk.bones.size(); ++k) {
    const auto& bone = sk.bones[k];
    const Rigid& gj = g[bone.joint];
    float scale = params.beta[k];
    PosedBody::Capsule c;
    c.a = gj.apply(scale * bone.a);
    c.b = gj.apply(scale * bone.b);
    c.radius = bone.radius * scale;
    c.inv_len2 = 1.f / (c.b - c.a).squaredNorm();
    Rigid to_canonical = g0[bone.joint].compose(gj.inverse());
    c.to_canonical_R = to_canonical.R;
    c.to_canonical_t = to_canonical.t;
    body.capsules.push_back(c);

    Vec3 wa = params.root.apply(c.a), wb = params.root.apply(c.b);
    Aabb cap_box;
    cap_box.expand(wa);
    cap_box.expand(wb);
    cap_box.inflate(c.radius);
    body.box.expand(cap_box);
  }
  body.box.inflate(box_cfg.eps);
  return body;
}

// Axis-aligned box around the posed surface, expanded by the margin.
inline Aabb bounding_box(const Skeleton& sk, const BodyParams& params, const BoxConfig& cfg) {
  return pose_body(sk, params, cfg).box;
}

// Closed-box membership: boundary points count as inside.
inline bool in_box(const Vec3& x, const Aabb& box) { return box.contains(x); }

struct QueryDetail {
  PointDescriptor desc;
  int bone = -1;
  Vec3 grad_world = Vec3::Zero();  // d(d)/dx, unit away from medial loci
  Mat3 ds_dx = Mat3::Identity();   // Jacobian of s w.r.t. the world point
};

// The H interface: world point -> (s, d) under the posed body, with the
// analytic derivatives the renderer needs. Ties go to the lowest bone index.
class BodyModel {
 public:
  BodyModel() = default;
  explicit BodyModel(Skeleton sk) : skeleton_(std::move(sk)) { skeleton_.validate(); }

  const Skeleton& skeleton() const { return skeleton_; }
  uint64_t query_count() const { return query_count_; }
  void reset_query_count() { query_count_ = 0; }

  QueryDetail query_posed(const Vec3& x_world, const PosedBody& body) const {
    ++query_count_;
    Vec3 xl = body.root.R.transpose() * (x_world - body.root.t);
    float best = std::numeric_limits<float>::max();
    int best_k = -1;
    float best_u = 0.f;
    for (size_t k = 0; k < body.capsules.size(); ++k) {
      const auto& c = body.capsules[k];
      Vec3 ab = c.b - c.a;
      float u = std::clamp((xl - c.a).dot(ab) * c.inv_len2, 0.f, 1.f);
      float d = (xl - (c.a + u * ab)).norm() - c.radius;
      if (d < best) {
        best = d;
        best_k = (int)k;
        best_u = u;
      }
    }
    const auto& c = body.capsules[best_k];
    QueryDetail out;
    out.bone = best_k;
    out.desc.d = best;
    out.desc.s = c.to_canonical_R * xl + c.to_canonical_t;
    Vec3 closest = c.a + best_u * (c.b - c.a);
    Vec3 n = xl - closest;
    float nn = n.norm();
    out.grad_world = nn > 1e-9f ? Vec3(body.root.R * (n / nn)) : Vec3(body.root.R.col(2));
    out.ds_dx = c.to_canonical_R * body.root.R.transpose();
    return out;
  }

  PointDescriptor query(const Vec3& x_world, const BodyParams& params) const {
    return query_posed(x_world, pose_body(skeleton_, params)).desc;
  }

 private:
  Skeleton skeleton_;
  mutable uint64_t query_count_ = 0;
};

// d(body SDF)/d(theta, beta) at a point, via the envelope theorem at the
// arg-min bone and the closed-form axis-angle rotation derivative.
struct BodyJacobian {
  float d = 0.f;
  std::vector<float> dd_dtheta;  // theta_dim
  std::vector<float> dd_dbeta;   // bone count
};

inline BodyJacobian body_sdf_jacobian(const Skeleton& sk, const BodyParams& params,
                                      const Vec3& x_world) {
  std::vector<Rigid> g = forward_kinematics(sk, params.theta);
  Vec3 xl = params.root.R.transpose() * (x_world - params.root.t);

  float best = std::numeric_limits<float>::max();
  int best_k = -1;
  float best_u = 0.f;
  for (size_t k = 0; k < sk.bones.size(); ++k) {
    const auto& bone = sk.bones[k];
    float scale = params.beta[k];
    Vec3 a = g[bone.joint].apply(scale * bone.a);
    Vec3 b = g[bone.joint].apply(scale * bone.b);
    Vec3 ab = b - a;
    float u = std::clamp((xl - a).dot(ab) / ab.squaredNorm(), 0.f, 1.f);
    float d = (xl - (a + u * ab)).norm() - bone.radius * scale;
    if (d < best) {
      best = d;
      best_k = (int)k;
      best_u = u;
    }
  }

  BodyJacobian out;
  out.d = best;
  out.dd_dtheta.assign(sk.theta_dim(), 0.f);
  out.dd_dbeta.assign(sk.bones.size(), 0.f);

  const auto& bone = sk.bones[best_k];
  float scale = params.beta[best_k];
  const Rigid& gj = g[bone.joint];
  Vec3 a = gj.apply(scale * bone.a);
  Vec3 b = gj.apply(scale * bone.b);
  Vec3 closest = a + best_u * (b - a);
  Vec3 n = xl - closest;
  float nn = n.norm();
  Vec3 nh = nn > 1e-9f ? Vec3(n / nn) : Vec3(0, 0, 1);
  // Envelope: u is optimal, so endpoint derivatives act as if u were fixed.
  Vec3 dd_da = -(1.f - best_u) * nh;
  Vec3 dd_db = -best_u * nh;

  out.dd_dbeta[best_k] =
      dd_da.dot(gj.R * bone.a) + dd_db.dot(gj.R * bone.b) - bone.radius;

  // Walk the ancestor chain; y_a/y_b are the endpoints in joint `a`'s rotated
  // local frame. dE/dw_a = R(G_parent(a)) * dR(w_a) * y.
  Vec3 ya = scale * bone.a, yb = scale * bone.b;
  int joint = bone.joint;
  while (joint >= 0) {
    Vec3 w(params.theta[3 * joint], params.theta[3 * joint + 1], params.theta[3 * joint + 2]);
    Mat3 dR[3];
    rodrigues_jacobian(w, dR);
    int parent = sk.joints[joint].parent;
    Mat3 Rpre = parent < 0 ? Mat3::Identity() : g[parent].R;
    for (int i = 0; i < 3; ++i) {
      Vec3 da = Rpre * (dR[i] * ya);
      Vec3 db = Rpre * (dR[i] * yb);
      out.dd_dtheta[3 * joint + i] = dd_da.dot(da) + dd_db.dot(db);
    }
    Mat3 Rw = rodrigues(w);
    ya = sk.joints[joint].offset + Rw * ya;
    yb = sk.joints[joint].offset + Rw * yb;
    joint = parent;
  }
  return out;
}

// The 17-joint / 16-bone default figure, T-pose, y-up, pelvis at the origin.
// Roughly 1.6 m tall; fits the [-1,1]^3 scene cube with margin even posed.
inline Skeleton default_skeleton() {
  Skeleton sk;
  auto joint = [&](const char* name, int parent, float x, float y, float z) {
    sk.joints.push_back({name, parent, Vec3(x, y, z)});
  };
  auto bone = [&](const char* name, int j, Vec3 a, Vec3 b, float r) {
    sk.bones.push_back({name, j, a, b, r});
  };
  joint("pelvis", -1, 0, 0, 0);          // 0
  joint("spine", 0, 0, 0.12f, 0);        // 1
  joint("chest", 1, 0, 0.18f, 0);        // 2
  joint("neck", 2, 0, 0.16f, 0);         // 3
  joint("l_shoulder", 2, 0.14f, 0.14f, 0);   // 4
  joint("l_elbow", 4, 0.26f, 0, 0);      // 5
  joint("l_wrist", 5, 0.25f, 0, 0);      // 6
  joint("r_shoulder", 2, -0.14f, 0.14f, 0);  // 7
  joint("r_elbow", 7, -0.26f, 0, 0);     // 8
  joint("r_wrist", 8, -0.25f, 0, 0);     // 9
  joint("l_hip", 0, 0.09f, -0.04f, 0);   // 10
  joint("l_knee", 10, 0, -0.40f, 0);     // 11
  joint("l_ankle", 11, 0, -0.38f, 0);    // 12
  joint("r_hip", 0, -0.09f, -0.04f, 0);  // 13
  joint("r_knee", 13, 0, -0.40f, 0);     // 14
  joint("r_ankle", 14, 0, -0.38f, 0);    // 15
  joint("head", 3, 0, 0.04f, 0);         // 16

  bone("pelvis", 0, {-0.09f, 0, 0}, {0.09f, 0, 0}, 0.105f);
  bone("torso_lower", 1, {0, 0, 0}, {0, 0.18f, 0}, 0.115f);
  bone("torso_upper", 2, {0, 0, 0}, {0, 0.16f, 0}, 0.12f);
  bone("head", 16, {0, 0, 0}, {0, 0.15f, 0}, 0.09f);
  bone("l_upper_arm", 4, {0, 0, 0}, {0.26f, 0, 0}, 0.045f);
  bone("l_lower_arm", 5, {0, 0, 0}, {0.25f, 0, 0}, 0.038f);
  bone("l_hand", 6, {0, 0, 0}, {0.16f, 0, 0}, 0.035f);
  bone("r_upper_arm", 7, {0, 0, 0}, {-0.26f, 0, 0}, 0.045f);
  bone("r_lower_arm", 8, {0, 0, 0}, {-0.25f, 0, 0}, 0.038f);
  bone("r_hand", 9, {0, 0, 0}, {-0.16f, 0, 0}, 0.035f);
  bone("l_upper_leg", 10, {0, 0, 0}, {0, -0.40f, 0}, 0.07f);
  bone("l_lower_leg", 11, {0, 0, 0}, {0, -0.38f, 0}, 0.052f);
  bone("l_foot", 12, {0, -0.02f, 0}, {0, -0.02f, 0.16f}, 0.04f);
  bone("r_upper_leg", 13, {0, 0, 0}, {0, -0.40f, 0}, 0.07f);
  bone("r_lower_leg", 14, {0, 0, 0}, {0, -0.38f, 0}, 0.052f);
  bone("r_foot", 15, {0, -0.02f, 0}, {0, -0.02f, 0.16f}, 0.04f);
  sk.validate();
  return sk;
}

}  // namespace hrf
