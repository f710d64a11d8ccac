#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hrf/geometry.hpp"
#include "hrf/rng.hpp"

namespace hrf {

using Color = Eigen::Vector3f;

// Pinhole camera, world -> camera convention x_cam = R x + t, x right / y
// down / z forward. Pixel (row, col) back-projects through the continuous
// image point (col, row); the principal point lands on the optical axis.
struct Camera {
  float fx = 0, fy = 0, cx = 0, cy = 0;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  int width = 0, height = 0;

  void validate() const {
    if (!(fx > 0.f) || !(fy > 0.f)) throw std::invalid_argument("Camera: focal must be positive");
    if ((R.transpose() * R - Mat3::Identity()).norm() > 1e-4f)
      throw std::invalid_argument("Camera: rotation not orthonormal");
    if (width <= 0 || height <= 0) throw std::invalid_argument("Camera: bad image size");
  }

  Vec3 position() const { return -(R.transpose() * t); }

  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, float focal,
                        int width, int height) {
    Vec3 fwd = (target - eye).normalized();
    if (std::fabs(fwd.dot(up.normalized())) > 0.999f)
      throw std::invalid_argument("look_at: view direction parallel to up");
    Vec3 right = fwd.cross(up).normalized();
    Vec3 down = fwd.cross(right).normalized();
    Camera cam;
    cam.R.row(0) = right;
    cam.R.row(1) = down;
    cam.R.row(2) = fwd;
    cam.t = -(cam.R * eye);
    cam.fx = cam.fy = focal;
    cam.width = width;
    cam.height = height;
    cam.cx = 0.5f * (float)(width - 1);
    cam.cy = 0.5f * (float)(height - 1);
    return cam;
  }
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 dir = Vec3::Zero();  // unit
  float near = 0.f, far = 0.f;
  int row = 0, col = 0;
  int camera_id = 0, frame_id = 0;
  bool hits_scene = true;  // false: assign background directly
};

// Ray through a pixel center, clipped against the scene bounds.
inline Ray generate_ray(const Camera& cam, int row, int col, const Aabb& scene_bounds) {
  if (row < 0 || row >= cam.height || col < 0 || col >= cam.width)
    throw std::invalid_argument("generate_ray: pixel outside image");
  Vec3 dir_cam(((float)col - cam.cx) / cam.fx, ((float)row - cam.cy) / cam.fy, 1.f);
  Ray r;
  r.origin = cam.position();
  r.dir = (cam.R.transpose() * dir_cam).normalized();
  r.row = row;
  r.col = col;
  float s0, s1;
  if (scene_bounds.clip_ray(r.origin, r.dir, s0, s1) && s1 > s0) {
    r.near = std::max(s0, 1e-4f);
    r.far = s1;
    r.hits_scene = r.far > r.near;
  } else {
    r.hits_scene = false;
  }
  return r;
}

inline std::vector<Ray> generate_rays(const Camera& cam, const std::vector<std::pair<int, int>>& pixels,
                                      const Aabb& scene_bounds) {
  std::vector<Ray> out;
  out.reserve(pixels.size());
  for (auto [row, col] : pixels) out.push_back(generate_ray(cam, row, col, scene_bounds));
  return out;
}

// alpha = 1 - exp(-sigma * delta)
inline float alpha_from_density(float sigma, float delta) {
  return 1.f - std::exp(-sigma * delta);
}

// Ordered per-ray samples. delta[i] = depth[i+1] - depth[i]; the last delta
// closes the interval to `far` so background density stays integrable.
struct RaySamples {
  std::vector<float> depth;
  std::vector<float> delta;

  void rebuild_deltas(float far) {
    delta.resize(depth.size());
    for (size_t i = 0; i + 1 < depth.size(); ++i) delta[i] = depth[i + 1] - depth[i];
    if (!depth.empty()) delta.back() = far - depth.back();
  }
};

// One uniform draw per equal bin of [near, far].
inline RaySamples stratified_samples(const Ray& ray, int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("stratified_samples: n >= 1");
  RaySamples s;
  s.depth.resize(n);
  const float span = (ray.far - ray.near) / (float)n;
  for (int i = 0; i < n; ++i) {
    float u = std::min(rng.uniform(), 1.f - 1e-6f);
    s.depth[i] = ray.near + ((float)i + u) * span;
  }
  s.rebuild_deltas(ray.far);
  return s;
}

// Inverse-CDF draws from the piecewise-constant distribution the coarse
// weights induce over the per-sample intervals. All-zero weights fall back to
// uniform sampling. Returns only the new depths.
inline std::vector<float> importance_resample(const std::vector<float>& coarse_depth,
                                              const std::vector<float>& weights, int n_new,
                                              float near, float far, Rng& rng) {
  if (coarse_depth.size() != weights.size())
    throw std::invalid_argument("importance_resample: size mismatch");
  std::vector<float> out(n_new);
  double total = 0.0;
  for (float w : weights) {
    if (w < 0.f) throw std::invalid_argument("importance_resample: negative weight");
    total += w;
  }
  if (total <= 1e-12) {
    for (int i = 0; i < n_new; ++i) out[i] = near + rng.uniform() * (far - near);
    return out;
  }
  const size_t n = coarse_depth.size();
  for (int i = 0; i < n_new; ++i) {
    double u = rng.uniform() * total;
    size_t bin = 0;
    while (bin + 1 < n && u > weights[bin]) u -= weights[bin], ++bin;
    float lo = coarse_depth[bin];
    float hi = bin + 1 < n ? coarse_depth[bin + 1] : far;
    float frac = weights[bin] > 0.f ? std::min((float)(u / weights[bin]), 1.f) : rng.uniform();
    out[i] = lo + frac * (hi - lo);
  }
  return out;
}

// --- quadrature (reference, non-differentiable path) ---

inline void quadrature_weights(const float* alpha, int n, float* w) {
  float trans = 1.f;
  for (int i = 0; i < n; ++i) {
    w[i] = alpha[i] * trans;
    trans *= 1.f - alpha[i];
  }
}

// C = sum_i alpha_i prod_{j<i} (1 - alpha_j) c_i
inline Color composite(const std::vector<Color>& colors, const std::vector<float>& alphas) {
  if (colors.size() != alphas.size()) throw std::invalid_argument("composite: size mismatch");
  Color out = Color::Zero();
  float trans = 1.f;
  for (size_t i = 0; i < colors.size(); ++i) {
    out += alphas[i] * trans * colors[i];
    trans *= 1.f - alphas[i];
  }
  return out;
}

// Restricted render: alphas replaced by b_i * alpha_i.
inline Color composite_restricted(const std::vector<Color>& colors, const std::vector<float>& alphas,
                                  const std::vector<uint8_t>& inbox) {
  if (colors.size() != inbox.size()) throw std::invalid_argument("composite_restricted: size");
  std::vector<float> masked(alphas.size());
  for (size_t i = 0; i < alphas.size(); ++i) masked[i] = inbox[i] ? alphas[i] : 0.f;
  return composite(colors, masked);
}

// Blended render: alpha_hat_i = b_i * pseudo_i + (1 - b_i) * alpha_i.
inline Color composite_blended(const std::vector<Color>& colors, const std::vector<float>& alphas,
                               const std::vector<float>& pseudo, const std::vector<uint8_t>& inbox) {
  if (colors.size() != inbox.size() || pseudo.size() != inbox.size())
    throw std::invalid_argument("composite_blended: size");
  std::vector<float> blended(alphas.size());
  for (size_t i = 0; i < alphas.size(); ++i) blended[i] = inbox[i] ? pseudo[i] : alphas[i];
  return composite(colors, blended);
}

// Min over in-box samples; rays that never enter the box report `fallback`.
inline float ray_min_sdf(const std::vector<float>& sdf, const std::vector<uint8_t>& inbox,
                         float fallback = 1.f) {
  if (sdf.size() != inbox.size()) throw std::invalid_argument("ray_min_sdf: size mismatch");
  float best = fallback;
  bool any = false;
  for (size_t i = 0; i < sdf.size(); ++i) {
    if (!inbox[i]) continue;
    best = any ? std::min(best, sdf[i]) : sdf[i];
    any = true;
  }
  return best;
}

}  // namespace hrf
