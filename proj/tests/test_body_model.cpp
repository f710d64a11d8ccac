#include <catch2/catch_amalgamated.hpp>

#include "hrf/body_model.hpp"
#include "hrf/rng.hpp"

using namespace hrf;
using Catch::Matchers::WithinAbs;

namespace {

Skeleton two_joint_chain() {
  Skeleton sk;
  sk.joints.push_back({"root", -1, Vec3(0, 0, 0)});
  sk.joints.push_back({"mid", 0, Vec3(1, 0, 0)});
  sk.bones.push_back({"b0", 0, Vec3(0, 0, 0), Vec3(1, 0, 0), 0.1f});
  sk.bones.push_back({"b1", 1, Vec3(0, 0, 0), Vec3(1, 0, 0), 0.1f});
  return sk;
}

// Uniform-by-area sample of the posed capsule surfaces, root-local frame.
std::vector<Vec3> sample_union_surface(const PosedBody& body, int n, Rng& rng) {
  std::vector<float> areas;
  float total = 0.f;
  for (const auto& c : body.capsules) {
    float len = (c.b - c.a).norm();
    float area = 2.f * float(M_PI) * c.radius * len + 4.f * float(M_PI) * c.radius * c.radius;
    areas.push_back(area);
    total += area;
  }
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) {
    float pick = rng.uniform() * total;
    size_t k = 0;
    while (k + 1 < areas.size() && pick > areas[k]) pick -= areas[k], ++k;
    const auto& c = body.capsules[k];
    Vec3 axis = (c.b - c.a).normalized();
    float len = (c.b - c.a).norm();
    float cyl = len / (len + 2.f * c.radius);
    Vec3 dir;
    do {
      dir = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    } while (dir.squaredNorm() > 1.f || dir.squaredNorm() < 1e-6f);
    dir.normalize();
    if (rng.uniform() < cyl) {
      Vec3 radial = dir - dir.dot(axis) * axis;
      if (radial.norm() < 1e-6f) radial = axis.unitOrthogonal();
      radial.normalize();
      pts.push_back(c.a + rng.uniform() * len * axis + c.radius * radial);
    } else {
      pts.push_back((dir.dot(axis) < 0 ? c.a : c.b) + c.radius * dir);
    }
  }
  return pts;
}

// Independent per-capsule oracle: distance to a densely sampled axis.
float capsule_sdf_oracle(const Vec3& x, const Vec3& a, const Vec3& b, float r) {
  float best = std::numeric_limits<float>::max();
  const int n = 2000;
  for (int i = 0; i <= n; ++i) {
    Vec3 p = a + (float(i) / n) * (b - a);
    best = std::min(best, (x - p).norm());
  }
  return best - r;
}

}  // namespace

TEST_CASE("forward kinematics at rest gives identity bone transforms") {
  Skeleton sk = default_skeleton();
  auto params = BodyParams::rest(sk);
  auto tf = bone_transforms(sk, params.theta, &params.beta);
  for (const auto& t : tf) {
    REQUIRE((t.R - Mat3::Identity()).norm() < 1e-6f);
    REQUIRE(t.t.norm() < 1e-6f);
  }
}

TEST_CASE("rotating a parent joint rotates the child bone about that joint") {
  Skeleton sk = two_joint_chain();
  std::vector<float> theta(6, 0.f);
  theta[2] = float(M_PI) / 2;  // root joint, 90 deg about z
  auto tf = bone_transforms(sk, theta);
  // canonical endpoint of bone 1: (2,0,0); rotated about the root -> (0,2,0)
  Vec3 posed = tf[1].apply(Vec3(2, 0, 0));
  REQUIRE((posed - Vec3(0, 2, 0)).norm() < 1e-5f);
}

TEST_CASE("two 45-degree rotations compose to a 90-degree end effector") {
  Skeleton sk = two_joint_chain();
  std::vector<float> theta(6, 0.f);
  theta[2] = float(M_PI) / 4;
  theta[5] = float(M_PI) / 4;
  auto g = forward_kinematics(sk, theta);
  Vec3 end = g[1].apply(Vec3(1, 0, 0));  // canonical end effector (2,0,0)
  Vec3 expect(std::cos(float(M_PI) / 4) + std::cos(float(M_PI) / 2),
              std::sin(float(M_PI) / 4) + std::sin(float(M_PI) / 2), 0.f);
  REQUIRE((end - expect).norm() < 1e-5f);
}

TEST_CASE("forward kinematics rejects wrong theta dimension") {
  Skeleton sk = two_joint_chain();
  std::vector<float> theta(5, 0.f);
  REQUIRE_THROWS_AS(forward_kinematics(sk, theta), std::invalid_argument);
}

TEST_CASE("capsule sdf closed forms") {
  Vec3 a(0, 0, 0), b(0, 0, 1);
  REQUIRE_THAT(capsule_sdf(Vec3(0, 0, 0.5f), a, b, 0.1f), WithinAbs(-0.1f, 1e-6f));
  REQUIRE_THAT(capsule_sdf(Vec3(0, 0.2f, 0.5f), a, b, 0.1f), WithinAbs(0.1f, 1e-6f));
  REQUIRE_THAT(capsule_sdf(Vec3(0, 0.3f, 0.5f), a, b, 0.1f), WithinAbs(0.2f, 1e-6f));
}

TEST_CASE("query on a canonical surface point returns d=0 and s=x") {
  BodyModel model(default_skeleton());
  auto params = BodyParams::rest(model.skeleton());
  Vec3 x(0.f, 0.59f, 0.09f);  // on the head capsule surface
  PointDescriptor desc = model.query(x, params);
  REQUIRE_THAT(desc.d, WithinAbs(0.f, 1e-6f));
  REQUIRE((desc.s - x).norm() < 1e-6f);
}

TEST_CASE("descriptor round trip: canonical -> posed -> query") {
  BodyModel model(default_skeleton());
  const Skeleton& sk = model.skeleton();
  auto rest = BodyParams::rest(sk);
  PosedBody rest_body = pose_body(sk, rest);

  Rng rng(123);
  int tested = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    BodyParams posed = rest;
    for (auto& v : posed.theta) v = rng.uniform(-0.5f, 0.5f);
    auto tf = bone_transforms(sk, posed.theta, &posed.beta);
    PosedBody posed_body = pose_body(sk, posed);

    size_t k = (size_t)rng.uniform_int((int64_t)sk.bones.size());
    const auto& cap = rest_body.capsules[k];
    Vec3 p = cap.a + rng.uniform() * (cap.b - cap.a) +
             Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.5f * cap.radius;
    QueryDetail canon = model.query_posed(p, rest_body);
    Vec3 x = tf[canon.bone].apply(p);
    QueryDetail q = model.query_posed(x, posed_body);
    if (q.bone != canon.bone) continue;  // arg-min changed; excluded by contract
    ++tested;
    REQUIRE((q.desc.s - canon.desc.s).norm() < 1e-4f);
    REQUIRE_THAT(q.desc.d, WithinAbs(canon.desc.d, 1e-4f));
  }
  REQUIRE(tested > 500);
}

TEST_CASE("query matches independent distance oracles") {
  BodyModel model(default_skeleton());
  const Skeleton& sk = model.skeleton();
  auto params = BodyParams::rest(sk);
  params.theta[12] = 0.4f;  // bend the arms so the pose is not trivial
  params.theta[31] = -0.3f;
  PosedBody body = pose_body(sk, params);

  Rng rng(77);

  SECTION("far point against union surface sampling") {
    auto surface = sample_union_surface(body, 100000, rng);
    Vec3 x(6.f, 5.f, 4.f);  // ~10 m out
    float oracle = std::numeric_limits<float>::max();
    for (const auto& p : surface) oracle = std::min(oracle, (x - p).norm());
    QueryDetail q = model.query_posed(x, body);
    REQUIRE_THAT(q.desc.d, WithinAbs(oracle, 1e-3f));
  }

  SECTION("random points against the per-capsule axis-sampled oracle") {
    for (int i = 0; i < 1000; ++i) {
      Vec3 x(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      float oracle = std::numeric_limits<float>::max();
      for (const auto& c : body.capsules)
        oracle = std::min(oracle, capsule_sdf_oracle(x, c.a, c.b, c.radius));
      QueryDetail q = model.query_posed(x, body);
      REQUIRE_THAT(q.desc.d, WithinAbs(oracle, 1e-3f));
    }
  }
}

TEST_CASE("query distance is bounded by every individual capsule distance") {
  BodyModel model(default_skeleton());
  auto params = BodyParams::rest(model.skeleton());
  PosedBody body = pose_body(model.skeleton(), params);
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    Vec3 x(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    float d = model.query_posed(x, body).desc.d;
    for (const auto& c : body.capsules) REQUIRE(d <= capsule_sdf(x, c.a, c.b, c.radius) + 1e-6f);
  }
}

TEST_CASE("finite-difference gradient norm is ~1 away from surface and medial loci") {
  BodyModel model(default_skeleton());
  auto params = BodyParams::rest(model.skeleton());
  PosedBody body = pose_body(model.skeleton(), params);
  Rng rng(9);
  const float h = 1e-3f;
  int checked = 0;
  while (checked < 300) {
    Vec3 x(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    QueryDetail q = model.query_posed(x, body);
    if (std::fabs(q.desc.d) < 0.02f) continue;
    // skip medial neighborhoods: two nearly equidistant capsules
    float d1 = std::numeric_limits<float>::max(), d2 = d1;
    for (const auto& c : body.capsules) {
      float d = capsule_sdf(x, c.a, c.b, c.radius);
      if (d < d1) {
        d2 = d1;
        d1 = d;
      } else {
        d2 = std::min(d2, d);
      }
    }
    if (d2 - d1 < 0.02f) continue;
    Vec3 g;
    for (int a = 0; a < 3; ++a) {
      Vec3 xp = x, xm = x;
      xp[a] += h;
      xm[a] -= h;
      g[a] = (model.query_posed(xp, body).desc.d - model.query_posed(xm, body).desc.d) / (2 * h);
    }
    REQUIRE(g.norm() > 0.99f);
    REQUIRE(g.norm() < 1.01f);
    REQUIRE((g - q.grad_world).norm() < 5e-3f);  // analytic gradient agrees
    ++checked;
  }
}

TEST_CASE("query is invariant to composing the root with a rigid motion") {
  BodyModel model(default_skeleton());
  auto params = BodyParams::rest(model.skeleton());
  Rng rng(31);
  for (auto& v : params.theta) v = rng.uniform(-0.3f, 0.3f);

  Rigid extra{rodrigues(Vec3(0.3f, -0.2f, 0.5f)), Vec3(0.25f, 0.5f, -0.125f)};
  BodyParams moved = params;
  moved.root = extra.compose(params.root);

  PosedBody b0 = pose_body(model.skeleton(), params);
  PosedBody b1 = pose_body(model.skeleton(), moved);
  for (int i = 0; i < 100; ++i) {
    Vec3 x(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    QueryDetail q0 = model.query_posed(x, b0);
    QueryDetail q1 = model.query_posed(extra.apply(x), b1);
    REQUIRE_THAT(q1.desc.d, WithinAbs(q0.desc.d, 1e-5f));
    REQUIRE((q1.desc.s - q0.desc.s).norm() < 1e-5f);
    REQUIRE(q1.bone == q0.bone);
  }
}

TEST_CASE("bounding box: translation equivariance, margin, containment") {
  BodyModel model(default_skeleton());
  const Skeleton& sk = model.skeleton();
  auto params = BodyParams::rest(sk);

  Aabb b0 = bounding_box(sk, params, {0.f});
  Aabb b1 = bounding_box(sk, params, {0.1f});
  for (int a = 0; a < 3; ++a)
    REQUIRE_THAT(b1.extent()[a] - b0.extent()[a], WithinAbs(0.2f, 1e-6f));

  Vec3 t(0.25f, 0.5f, -0.125f);
  BodyParams shifted = params;
  shifted.root = Rigid::translation(t);
  Aabb bs = bounding_box(sk, shifted, {0.f});
  REQUIRE((bs.lo - (b0.lo + t)).norm() < 1e-6f);
  REQUIRE((bs.hi - (b0.hi + t)).norm() < 1e-6f);

  BodyParams posed = params;
  Rng rng(17);
  for (auto& v : posed.theta) v = rng.uniform(-0.5f, 0.5f);
  PosedBody body = pose_body(sk, posed, {0.f});
  auto surface = sample_union_surface(body, 10000, rng);
  for (const auto& p : surface) REQUIRE(in_box(body.root.apply(p), body.box));
}

TEST_CASE("box membership is closed") {
  Aabb box;
  box.expand(Vec3(-1, -1, -1));
  box.expand(Vec3(1, 1, 1));
  REQUIRE(in_box(Vec3(0, 0, 0), box));
  REQUIRE(in_box(Vec3(1, 1, 1), box));
  REQUIRE(in_box(Vec3(1, 0, 0), box));
  REQUIRE_FALSE(in_box(Vec3(1.0001f, 0, 0), box));
}

TEST_CASE("rodrigues jacobian matches finite differences") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Vec3 w(rng.uniform(-1.5f, 1.5f), rng.uniform(-1.5f, 1.5f), rng.uniform(-1.5f, 1.5f));
    if (trial == 0) w = Vec3::Zero();
    Mat3 dR[3];
    rodrigues_jacobian(w, dR);
    const float h = 1e-3f;
    for (int i = 0; i < 3; ++i) {
      Vec3 wp = w, wm = w;
      wp[i] += h;
      wm[i] -= h;
      Mat3 fd = (rodrigues(wp) - rodrigues(wm)) / (2 * h);
      REQUIRE((fd - dR[i]).norm() < 1e-3f);
    }
  }
}

TEST_CASE("body sdf pose/shape jacobian matches finite differences") {
  Skeleton sk = default_skeleton();
  auto params = BodyParams::rest(sk);
  Rng rng(19);
  for (auto& v : params.theta) v = rng.uniform(-0.3f, 0.3f);

  // A point squarely nearest to the left forearm: the arg-min bone is stable
  // under the FD perturbation, so central differences are valid.
  Vec3 x(0.45f, 0.52f, 0.15f);
  BodyJacobian jac = body_sdf_jacobian(sk, params, x);
  const float h = 1e-3f;
  int nonzero = 0;
  for (int i = 0; i < sk.theta_dim(); ++i) {
    BodyParams pp = params, pm = params;
    pp.theta[i] += h;
    pm.theta[i] -= h;
    float fd = (body_sdf_jacobian(sk, pp, x).d - body_sdf_jacobian(sk, pm, x).d) / (2 * h);
    REQUIRE_THAT(jac.dd_dtheta[i], WithinAbs(fd, 1e-3f));
    if (std::fabs(fd) > 1e-4f) ++nonzero;
  }
  REQUIRE(nonzero > 0);
  for (size_t k = 0; k < sk.bones.size(); ++k) {
    BodyParams pp = params, pm = params;
    pp.beta[k] += h;
    pm.beta[k] -= h;
    float fd = (body_sdf_jacobian(sk, pp, x).d - body_sdf_jacobian(sk, pm, x).d) / (2 * h);
    REQUIRE_THAT(jac.dd_dbeta[k], WithinAbs(fd, 1e-3f));
  }
}

TEST_CASE("body params validation") {
  Skeleton sk = default_skeleton();
  auto params = BodyParams::rest(sk);
  REQUIRE_NOTHROW(params.validate(sk));
  auto bad = params;
  bad.beta[3] = -0.1f;
  REQUIRE_THROWS_AS(bad.validate(sk), std::invalid_argument);
  bad = params;
  bad.root.R(0, 0) = 2.f;
  REQUIRE_THROWS_AS(bad.validate(sk), std::invalid_argument);
  bad = params;
  bad.theta.pop_back();
  REQUIRE_THROWS_AS(bad.validate(sk), std::invalid_argument);
}
