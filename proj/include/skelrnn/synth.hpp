#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "skelrnn/errors.hpp"
#include "skelrnn/geometry.hpp"
#include "skelrnn/numerics.hpp"
#include "skelrnn/preprocess.hpp"
#include "skelrnn/skeleton.hpp"

namespace skelrnn {

// ---------------------------------------------------------------------------
// SynthSpec: deterministic desk-scale dataset generator. One sample per
// (subject, camera, action); class identity is encoded as sinusoidal
// joint-angle motion on class-specific body parts, subjects differ by limb
// proportions, cameras by a rigid transform of the whole scene.
// ---------------------------------------------------------------------------

struct SynthSpec {
  int classes = 4;
  int subjects = 8;
  int cameras = 3;
  int setups = 1;
  int frames = 100;
  double noise = 0.0;  // additive coordinate noise amplitude, meters
  std::uint64_t seed = 1;

  void validate() const {
    if (classes < 2 || classes > 60) throw DataError("synth: classes outside [2, 60]");
    if (subjects < 1 || subjects > 40) throw DataError("synth: subjects outside [1, 40]");
    if (cameras < 1 || cameras > 3) throw DataError("synth: cameras outside [1, 3]");
    if (setups < 1 || setups > 17) throw DataError("synth: setups outside [1, 17]");
    if (frames < 8) throw DataError("synth: need at least 8 frames per sequence");
    if (noise < 0.0) throw DataError("synth: negative noise amplitude");
  }
};

namespace synth_detail {

/// Rest pose, meters: Y up, facing +Z, left side on +X, spine base at the
/// origin. Spine base to spine distance is 0.45.
inline std::array<Vec3, kJointCount> rest_pose() {
  std::array<Vec3, kJointCount> p{};
  p[joint::spine_base] = {0.00, 0.000, 0.00};
  p[joint::spine_mid] = {0.00, 0.225, 0.00};
  p[joint::spine] = {0.00, 0.450, 0.00};
  p[joint::neck] = {0.00, 0.560, 0.00};
  p[joint::head] = {0.00, 0.710, 0.00};
  p[joint::shoulder_left] = {0.20, 0.420, 0.00};
  p[joint::elbow_left] = {0.23, 0.150, 0.02};
  p[joint::wrist_left] = {0.25, -0.080, 0.03};
  p[joint::hand_left] = {0.26, -0.150, 0.03};
  p[joint::hand_tip_left] = {0.27, -0.210, 0.03};
  p[joint::thumb_left] = {0.22, -0.170, 0.06};
  p[joint::shoulder_right] = {-0.20, 0.420, 0.00};
  p[joint::elbow_right] = {-0.23, 0.150, 0.02};
  p[joint::wrist_right] = {-0.25, -0.080, 0.03};
  p[joint::hand_right] = {-0.26, -0.150, 0.03};
  p[joint::hand_tip_right] = {-0.27, -0.210, 0.03};
  p[joint::thumb_right] = {-0.22, -0.170, 0.06};
  p[joint::hip_left] = {0.09, -0.060, 0.00};
  p[joint::knee_left] = {0.10, -0.480, 0.01};
  p[joint::ankle_left] = {0.11, -0.870, 0.02};
  p[joint::foot_left] = {0.12, -0.930, 0.12};
  p[joint::hip_right] = {-0.09, -0.060, 0.00};
  p[joint::knee_right] = {-0.10, -0.480, 0.01};
  p[joint::ankle_right] = {-0.11, -0.870, 0.02};
  p[joint::foot_right] = {-0.12, -0.930, 0.12};
  return p;
}

/// Pivot joint each part rotates about.
inline int part_pivot(int part) {
  switch (part) {
    case 0: return joint::spine_base;
    case 1: return joint::shoulder_left;
    case 2: return joint::shoulder_right;
    case 3: return joint::hip_left;
    case 4: return joint::hip_right;
  }
  throw DataError("synth: no pivot for part " + std::to_string(part));
}

struct PartMotion {
  int part;
  int axis;          // 0,1,2 -> x,y,z
  double frequency;  // Hz at a nominal 30 fps
  double amplitude;  // radians
  double phase;
};

/// Two animated parts per class, with class-specific frequencies, axes and
/// phases, so every class has a distinct trajectory signature.
inline std::vector<PartMotion> class_motions(int action) {
  const int k = action;  // 1-based
  std::vector<PartMotion> motions;
  motions.push_back({(k - 1) % 5, (k + 1) % 3, 0.40 + 0.25 * ((k + 1) % 4), 0.65, 0.9 * k});
  motions.push_back({(k + 1) % 5, (k + 2) % 3, 0.40 + 0.25 * ((k + 2) % 4), 0.45, 0.9 * k + 0.7});
  return motions;
}

inline Mat3 axis_rotation(int axis, double angle) {
  switch (axis) {
    case 0: return rotation_about_x(angle);
    case 1: return rotation_about_y(angle);
    default: return rotation_about_z(angle);
  }
}

/// World-to-camera rigid transform: the camera sits at distance d and height
/// h from the subject (Table of per-setup constants), at -45/0/+45 degrees
/// horizontally, looking at the subject's pelvis.
struct CameraPose {
  Mat3 rotation;  // columns: camera x,y,z axes in world coordinates
  Vec3 position;

  Vec3 world_to_camera(const Vec3& p) const { return rotation.apply_transposed(p - position); }
};

inline CameraPose camera_pose(int camera, int setup) {
  const CameraSetup cs = camera_setup(setup);
  const double angle = camera == 1 ? 0.785398163397448  // +45 deg
                       : camera == 2 ? 0.0
                                     : -0.785398163397448;
  CameraPose pose;
  pose.position = {cs.distance_m * std::sin(angle), cs.height_m, cs.distance_m * std::cos(angle)};
  const Vec3 target{0.0, 1.0, 0.0};  // pelvis height in world coordinates
  Vec3 z = target - pose.position;   // camera looks along +z
  z = z / norm(z);
  Vec3 x = cross(Vec3{0, 1, 0}, z);
  x = x / norm(x);
  const Vec3 y = cross(z, x);
  pose.rotation = Mat3::from_columns(x, y, z);
  return pose;
}

}  // namespace synth_detail

/// One synthetic sample. Deterministic in (spec.seed, action, subject,
/// camera, setup); noise draws come from the supplied stream.
inline SkeletonSequence generate_sequence(int action, int subject, int camera, int setup,
                                          const SynthSpec& spec, Rng& noise_rng) {
  spec.validate();
  if (action < 1 || action > spec.classes) {
    throw DataError("synth: action " + std::to_string(action) + " outside [1, " +
                    std::to_string(spec.classes) + "]");
  }

  const PartGrouping grouping = default_part_grouping();
  const auto members = grouping.members();

  // subject build: uniform body scale plus small per-part length factors
  Rng subject_rng = Rng::child(spec.seed, 0x5B000000ull + static_cast<std::uint64_t>(subject));
  const double body_scale = 0.85 + 0.30 * subject_rng.uniform();
  std::array<double, 5> limb_factor{};
  for (double& f : limb_factor) f = 0.97 + 0.06 * subject_rng.uniform();

  std::array<Vec3, kJointCount> base = synth_detail::rest_pose();
  for (int part = 0; part < 5; ++part) {
    const Vec3 pivot = base[static_cast<std::size_t>(synth_detail::part_pivot(part))];
    for (int k : members[static_cast<std::size_t>(part)]) {
      Vec3& p = base[static_cast<std::size_t>(k)];
      p = pivot + (p - pivot) * limb_factor[static_cast<std::size_t>(part)];
    }
  }
  for (Vec3& p : base) p = p * body_scale;

  const auto motions = synth_detail::class_motions(action);
  const synth_detail::CameraPose camera_view = synth_detail::camera_pose(camera, setup);

  SkeletonSequence seq;
  seq.meta = {setup, camera, subject, 1, action};
  seq.frames.reserve(static_cast<std::size_t>(spec.frames));
  for (int f = 0; f < spec.frames; ++f) {
    const double time = static_cast<double>(f) / 30.0;
    std::array<Vec3, kJointCount> pose = base;
    for (const synth_detail::PartMotion& m : motions) {
      const double angle =
          m.amplitude * std::sin(2.0 * 3.14159265358979323846 * m.frequency * time + m.phase);
      const Mat3 rot = synth_detail::axis_rotation(m.axis, angle);
      const Vec3 pivot = pose[static_cast<std::size_t>(synth_detail::part_pivot(m.part))];
      for (int k : members[static_cast<std::size_t>(m.part)]) {
        Vec3& p = pose[static_cast<std::size_t>(k)];
        p = pivot + rot.apply(p - pivot);
      }
    }

    BodyFrame body;
    body.body_id = 0;
    for (int k = 0; k < kJointCount; ++k) {
      const Vec3 world = pose[static_cast<std::size_t>(k)] + Vec3{0.0, 1.0, 0.0};
      Vec3 cam = camera_view.world_to_camera(world);
      if (spec.noise > 0.0) {
        cam.x += spec.noise * (2.0 * noise_rng.uniform() - 1.0);
        cam.y += spec.noise * (2.0 * noise_rng.uniform() - 1.0);
        cam.z += spec.noise * (2.0 * noise_rng.uniform() - 1.0);
      }
      body.joints[static_cast<std::size_t>(k)] = {cam, true};
    }
    seq.frames.push_back({body});
  }
  return seq;
}

struct SynthDataset {
  Catalog catalog;  // paths are "<sample_id>.skel", relative
  std::vector<SkeletonSequence> sequences;
};

/// One sample per (subject, camera, action); setups cycle so several setups
/// appear when requested. Deterministic given the seed.
inline SynthDataset generate_catalog(const SynthSpec& spec) {
  spec.validate();
  SynthDataset out;
  for (int subject = 1; subject <= spec.subjects; ++subject) {
    for (int camera = 1; camera <= spec.cameras; ++camera) {
      for (int action = 1; action <= spec.classes; ++action) {
        const int setup = 1 + (subject - 1 + action - 1) % spec.setups;
        const std::uint64_t lane =
            (static_cast<std::uint64_t>(subject) * 100 + static_cast<std::uint64_t>(action)) * 10 +
            static_cast<std::uint64_t>(camera);
        Rng noise_rng = Rng::child(spec.seed, lane);
        SkeletonSequence seq = generate_sequence(action, subject, camera, setup, spec, noise_rng);
        const std::string id = format_sample_id(seq.meta);
        out.catalog.entries.push_back({id, seq.meta, id + ".skel"});
        out.sequences.push_back(std::move(seq));
      }
    }
  }
  return out;
}

/// Writes every sequence plus a catalog listing into dir; returns the
/// catalog path.
inline std::filesystem::path write_dataset(const SynthSpec& spec,
                                           const std::filesystem::path& dir) {
  SynthDataset data = generate_catalog(spec);
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < data.sequences.size(); ++i) {
    write_sequence_file(data.sequences[i], dir / data.catalog.entries[i].path);
  }
  const std::filesystem::path listing = dir / "catalog.txt";
  std::ofstream out(listing);
  if (!out) throw DataError("cannot write catalog: " + listing.string());
  write_catalog(data.catalog, out);
  return listing;
}

/// Adds a wide, flat, motionless false detection (a "table") to every frame;
/// its X spread is well above 0.8 of its Y spread, so the noisy-body filter
/// must drop it.
inline void inject_static_blob(SkeletonSequence& seq, std::int64_t body_id) {
  BodyFrame blob;
  blob.body_id = body_id;
  for (int k = 0; k < kJointCount; ++k) {
    const double fx = (k % 5) / 4.0;
    const double fy = (k / 5) / 4.0;
    blob.joints[static_cast<std::size_t>(k)] = {{-0.6 + 1.2 * fx, 0.5 + 0.4 * fy, 2.5}, true};
  }
  for (Frame& frame : seq.frames) frame.push_back(blob);
}

}  // namespace skelrnn
