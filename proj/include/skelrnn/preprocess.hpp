#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skelrnn/errors.hpp"
#include "skelrnn/geometry.hpp"
#include "skelrnn/numerics.hpp"
#include "skelrnn/skeleton.hpp"

namespace skelrnn {

// ---------------------------------------------------------------------------
// Body-coordinate basis
// ---------------------------------------------------------------------------

/// Per-sequence camera-to-body transform. rotation columns are the body axes
/// (x: right->left shoulder, y: spine base->spine after Gram-Schmidt against
/// x, z: x cross y) expressed in camera coordinates; a camera-space point p
/// maps to body space as R^T (p - origin) / scale.
struct BodyBasis {
  Vec3 origin;
  Mat3 rotation;
  double scale = 1.0;

  Vec3 to_body(const Vec3& p) const { return rotation.apply_transposed(p - origin) / scale; }
};

namespace detail {

struct BasisFailure {
  std::string reason;
};

/// Computes the basis or reports why the reference frame is unusable.
inline std::optional<BodyBasis> try_body_basis(const BodyFrame& body, BasisFailure* failure) {
  constexpr int required[] = {joint::spine_base, joint::spine_mid, joint::shoulder_left,
                              joint::shoulder_right, joint::spine};
  for (int k : required) {
    if (!body.joints[k].tracked) {
      if (failure) failure->reason = "required joint " + std::to_string(k + 1) + " untracked";
      return std::nullopt;
    }
  }
  const Vec3 shoulder = body.joints[joint::shoulder_left].p - body.joints[joint::shoulder_right].p;
  const Vec3 spine = body.joints[joint::spine].p - body.joints[joint::spine_base].p;
  const double shoulder_len = norm(shoulder);
  const double spine_len = norm(spine);
  if (shoulder_len < 1e-6) {
    if (failure) failure->reason = "shoulder vector degenerate";
    return std::nullopt;
  }
  if (spine_len < 1e-6) {
    if (failure) failure->reason = "spine vector degenerate";
    return std::nullopt;
  }
  const Vec3 x = shoulder / shoulder_len;
  const Vec3 y_raw = spine - x * dot(spine, x);
  const double y_len = norm(y_raw);
  if (y_len < 1e-6) {
    if (failure) failure->reason = "spine vector parallel to shoulder vector";
    return std::nullopt;
  }
  const Vec3 y = y_raw / y_len;
  const Vec3 z = cross(x, y);

  BodyBasis basis;
  basis.origin = body.joints[joint::spine_mid].p;
  basis.rotation = Mat3::from_columns(x, y, z);
  basis.scale = spine_len;
  return basis;
}

}  // namespace detail

inline BodyBasis body_basis(const BodyFrame& reference) {
  detail::BasisFailure failure;
  auto basis = detail::try_body_basis(reference, &failure);
  if (!basis) throw DataError("body_basis: " + failure.reason);
  return *basis;
}

// ---------------------------------------------------------------------------
// Noisy-body filter and main-actor selection
// ---------------------------------------------------------------------------

/// Drops tracked bodies whose joint-location spread along camera X exceeds
/// 0.8 of their spread along camera Y (seats, tables and similar false
/// detections are wide, people are tall). Spreads accumulate over the
/// tracked joints of every frame. Returns surviving ids, ascending.
inline std::vector<std::int64_t> filter_noisy_bodies(const SkeletonSequence& seq) {
  struct Extent {
    double min_x = std::numeric_limits<double>::infinity();
    double max_x = -std::numeric_limits<double>::infinity();
    double min_y = std::numeric_limits<double>::infinity();
    double max_y = -std::numeric_limits<double>::infinity();
    bool any = false;
  };
  std::map<std::int64_t, Extent> extents;
  for (const Frame& frame : seq.frames) {
    for (const BodyFrame& body : frame) {
      Extent& e = extents[body.body_id];
      for (const Joint& j : body.joints) {
        if (!j.tracked) continue;
        e.min_x = std::min(e.min_x, j.p.x);
        e.max_x = std::max(e.max_x, j.p.x);
        e.min_y = std::min(e.min_y, j.p.y);
        e.max_y = std::max(e.max_y, j.p.y);
        e.any = true;
      }
    }
  }
  std::vector<std::int64_t> kept;
  for (const auto& [id, e] : extents) {
    const double spread_x = e.any ? e.max_x - e.min_x : 0.0;
    const double spread_y = e.any ? e.max_y - e.min_y : 0.0;
    if (spread_x > 0.8 * spread_y) continue;
    kept.push_back(id);
  }
  return kept;
}

/// Total 3D motion of one body: summed joint displacement over consecutive
/// frames, counting a joint only when tracked in both frames.
inline double body_motion_score(const SkeletonSequence& seq, std::int64_t body_id) {
  double score = 0.0;
  const BodyFrame* prev = nullptr;
  for (const Frame& frame : seq.frames) {
    const BodyFrame* cur = nullptr;
    for (const BodyFrame& body : frame) {
      if (body.body_id == body_id) {
        cur = &body;
        break;
      }
    }
    if (prev && cur) {
      for (int k = 0; k < kJointCount; ++k) {
        if (prev->joints[k].tracked && cur->joints[k].tracked) {
          score += norm(cur->joints[k].p - prev->joints[k].p);
        }
      }
    }
    if (cur) prev = cur;
  }
  return score;
}

/// The surviving body with the highest motion score; ties go to the smallest
/// body id.
inline std::int64_t main_actor(const SkeletonSequence& seq,
                               const std::vector<std::int64_t>& surviving) {
  if (surviving.empty()) throw DataError("main_actor: no surviving bodies");
  std::int64_t best_id = 0;
  double best_score = -1.0;
  for (std::int64_t id : surviving) {
    const double score = body_motion_score(seq, id);
    if (score > best_score || (score == best_score && id < best_id)) {
      best_score = score;
      best_id = id;
    }
  }
  return best_id;
}

// ---------------------------------------------------------------------------
// Sequence normalization
// ---------------------------------------------------------------------------

enum class BasisMode {
  per_sequence,  // one basis from the first valid frame (default)
  per_frame,     // recompute per frame where possible, else reuse the last
};

namespace detail {

inline const BodyFrame* find_body(const Frame& frame, std::int64_t body_id) {
  for (const BodyFrame& body : frame) {
    if (body.body_id == body_id) return &body;
  }
  return nullptr;
}

}  // namespace detail

/// Maps every joint of every body into the main actor's body coordinates.
/// The reference basis comes from the first frame in which the main actor
/// has all five reference joints tracked; per_frame mode recomputes it on
/// each frame that allows it.
inline SkeletonSequence normalize_sequence(const SkeletonSequence& seq, std::int64_t main_body_id,
                                           BasisMode mode = BasisMode::per_sequence) {
  std::optional<BodyBasis> reference;
  std::size_t reference_frame = 0;
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    const BodyFrame* body = detail::find_body(seq.frames[f], main_body_id);
    if (!body) continue;
    bool joints_ok = true;
    for (int k : {joint::spine_base, joint::spine_mid, joint::shoulder_left,
                  joint::shoulder_right, joint::spine}) {
      joints_ok = joints_ok && body->joints[k].tracked;
    }
    if (!joints_ok) continue;
    reference = body_basis(*body);  // throws if the tracked joints are degenerate
    reference_frame = f;
    break;
  }
  if (!reference) {
    throw DataError("normalize_sequence: no frame has the reference joints tracked for body " +
                    std::to_string(main_body_id));
  }

  SkeletonSequence out = seq;
  BodyBasis basis = *reference;
  for (std::size_t f = 0; f < out.frames.size(); ++f) {
    if (mode == BasisMode::per_frame && f >= reference_frame) {
      if (const BodyFrame* body = detail::find_body(seq.frames[f], main_body_id)) {
        if (auto fresh = detail::try_body_basis(*body, nullptr)) basis = *fresh;
      }
    }
    for (BodyFrame& body : out.frames[f]) {
      for (Joint& j : body.joints) j.p = basis.to_body(j.p);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Five-part grouping and per-part input vectors
// ---------------------------------------------------------------------------

/// Partition of the 25 joints into body parts. Part order is fixed: torso,
/// left arm, right arm, left leg, right leg.
struct PartGrouping {
  int part_count = 0;
  std::array<int, kJointCount> assignment{};  // joint index -> part index

  /// Joints of each part, ascending joint index.
  std::vector<std::vector<int>> members() const {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(part_count));
    for (int k = 0; k < kJointCount; ++k) out[static_cast<std::size_t>(assignment[k])].push_back(k);
    return out;
  }

  std::vector<int> part_input_dims(bool two_actor = false) const {
    std::vector<int> dims;
    for (const auto& part : members()) {
      dims.push_back(static_cast<int>(part.size()) * 3 * (two_actor ? 2 : 1));
    }
    return dims;
  }
};

inline void validate_grouping(const PartGrouping& g) {
  if (g.part_count < 1) throw DataError("part grouping: no parts");
  std::vector<int> sizes(static_cast<std::size_t>(g.part_count), 0);
  for (int k = 0; k < kJointCount; ++k) {
    const int p = g.assignment[k];
    if (p < 0 || p >= g.part_count) {
      throw DataError("part grouping: joint " + std::to_string(k + 1) + " assigned to part " +
                      std::to_string(p) + " outside [0, " + std::to_string(g.part_count) + ")");
    }
    ++sizes[static_cast<std::size_t>(p)];
  }
  for (int p = 0; p < g.part_count; ++p) {
    if (sizes[static_cast<std::size_t>(p)] == 0) {
      throw DataError("part grouping: part " + std::to_string(p) + " empty");
    }
  }
}

/// Torso {1,2,3,4,21}, left arm {5,6,7,8,22,23}, right arm {9,10,11,12,24,25},
/// left leg {13,14,15,16}, right leg {17,18,19,20} (1-based joint labels).
inline PartGrouping default_part_grouping() {
  PartGrouping g;
  g.part_count = 5;
  auto assign = [&g](std::initializer_list<int> joints_1based, int part) {
    for (int j : joints_1based) g.assignment[j - 1] = part;
  };
  assign({1, 2, 3, 4, 21}, 0);
  assign({5, 6, 7, 8, 22, 23}, 1);
  assign({9, 10, 11, 12, 24, 25}, 2);
  assign({13, 14, 15, 16}, 3);
  assign({17, 18, 19, 20}, 4);
  return g;
}

/// All 25 joints as one part; used to reduce the part-aware cell to a plain
/// LSTM over the whole skeleton.
inline PartGrouping single_part_grouping() {
  PartGrouping g;
  g.part_count = 1;
  g.assignment.fill(0);
  return g;
}

/// Per-part input vectors for one frame: x/y/z of the part's joints,
/// ascending joint index.
using PartInputs = std::vector<Vector>;

struct BuiltInputs {
  std::vector<PartInputs> frames;  // frames where the main actor is present
  int skipped_frames = 0;          // frames omitted because the actor was absent
};

/// Builds the per-part network inputs from a normalized sequence. Two-actor
/// mode appends a second body's coordinates per part (zeros when absent),
/// doubling every part dimension; the second body is the lowest-id body
/// other than the main actor in that frame.
inline BuiltInputs build_part_inputs(const SkeletonSequence& seq, std::int64_t main_body_id,
                                     const PartGrouping& grouping, bool two_actor = false) {
  validate_grouping(grouping);
  const auto members = grouping.members();
  BuiltInputs out;
  for (const Frame& frame : seq.frames) {
    const BodyFrame* main = detail::find_body(frame, main_body_id);
    if (!main) {
      ++out.skipped_frames;
      continue;
    }
    const BodyFrame* second = nullptr;
    if (two_actor) {
      for (const BodyFrame& body : frame) {
        if (body.body_id == main_body_id) continue;
        if (!second || body.body_id < second->body_id) second = &body;
      }
    }
    PartInputs parts;
    parts.reserve(members.size());
    for (const auto& part : members) {
      Vector v;
      v.reserve(part.size() * 3 * (two_actor ? 2 : 1));
      for (int k : part) {
        const Vec3& p = main->joints[static_cast<std::size_t>(k)].p;
        v.push_back(p.x);
        v.push_back(p.y);
        v.push_back(p.z);
      }
      if (two_actor) {
        for (int k : part) {
          const Vec3 p = second ? second->joints[static_cast<std::size_t>(k)].p : Vec3{0, 0, 0};
          v.push_back(p.x);
          v.push_back(p.y);
          v.push_back(p.z);
        }
      }
      parts.push_back(std::move(v));
    }
    out.frames.push_back(std::move(parts));
  }
  return out;
}

}  // namespace skelrnn
