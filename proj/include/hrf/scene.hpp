#pragma once

#include <vector>

#include "hrf/body_model.hpp"
#include "hrf/image_io.hpp"
#include "hrf/renderer.hpp"

namespace hrf {

// Procedural appearance of the oracle renderer: per-bone albedo with a stripe
// pattern in canonical coordinates, one directional light, constant ambient.
struct Appearance {
  std::vector<Color> bone_albedo;   // one per bone, in [0,1]^3
  float stripe_freq = 40.f;         // stripes across canonical coordinates
  float stripe_contrast = 0.25f;    // multiplicative modulation depth
  Vec3 light_dir = Vec3(-0.35f, -0.85f, 0.4f).normalized();  // travel direction
  float light_intensity = 0.85f;
  float ambient = 0.3f;
  Color background = Color(0.08f, 0.09f, 0.12f);

  void validate(size_t bone_count) const {
    if (bone_albedo.size() != bone_count)
      throw std::invalid_argument("Appearance: albedo count mismatch");
    for (const auto& a : bone_albedo)
      if ((a.array() < 0.f).any() || (a.array() > 1.f).any())
        throw std::invalid_argument("Appearance: albedo out of range");
    if (std::fabs(light_dir.norm() - 1.f) > 1e-4f)
      throw std::invalid_argument("Appearance: light direction must be unit");
  }
};

// A palette where kinematically adjacent bones differ by at least 0.2 per
// channel, so the reconstruction loss sees real structure.
inline Appearance default_appearance(const Skeleton& sk) {
  Appearance ap;
  const Color palette[4] = {
      {0.85f, 0.30f, 0.25f},
      {0.25f, 0.60f, 0.85f},
      {0.90f, 0.75f, 0.20f},
      {0.30f, 0.80f, 0.40f},
  };
  ap.bone_albedo.resize(sk.bones.size());
  for (size_t k = 0; k < sk.bones.size(); ++k) ap.bone_albedo[k] = palette[k % 4];
  return ap;
}

// One calibrated view at one time instant.
struct FrameRecord {
  BodyParams params;
  std::vector<Image> images;      // one per camera
  std::vector<MaskImage> masks;   // one per camera
};

struct SceneData {
  int version = 1;
  float scene_scale = 1.f;        // world already lives in [-1,1]^3
  float box_margin = 0.08f;       // epsilon of the coarse structuring box
  Skeleton skeleton;
  Appearance appearance;
  std::vector<Camera> cameras;
  std::vector<FrameRecord> frames;
  Aabb bounds;                    // scene cube

  static Aabb unit_cube() {
    Aabb b;
    b.expand(Vec3(-1, -1, -1));
    b.expand(Vec3(1, 1, 1));
    return b;
  }

  int camera_count() const { return (int)cameras.size(); }
  int frame_count() const { return (int)frames.size(); }

  void validate() const {
    if (frames.empty() || cameras.empty()) throw std::invalid_argument("SceneData: empty scene");
    for (const auto& f : frames) {
      if ((int)f.images.size() != camera_count() || (int)f.masks.size() != camera_count())
        throw std::invalid_argument("SceneData: frame/camera count mismatch");
      f.params.validate(skeleton);
    }
  }
};

}  // namespace hrf
