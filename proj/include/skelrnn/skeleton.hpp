#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "skelrnn/errors.hpp"
#include "skelrnn/geometry.hpp"
#include "skelrnn/textio.hpp"

namespace skelrnn {

constexpr int kJointCount = 25;

// Joint numbering follows the 25-joint tracker layout; 1-based in all
// user-facing text and files, 0-based here.
namespace joint {
constexpr int spine_base = 0;      // 1
constexpr int spine_mid = 1;       // 2
constexpr int neck = 2;            // 3
constexpr int head = 3;            // 4
constexpr int shoulder_left = 4;   // 5
constexpr int elbow_left = 5;      // 6
constexpr int wrist_left = 6;      // 7
constexpr int hand_left = 7;       // 8
constexpr int shoulder_right = 8;  // 9
constexpr int elbow_right = 9;     // 10
constexpr int wrist_right = 10;    // 11
constexpr int hand_right = 11;     // 12
constexpr int hip_left = 12;       // 13
constexpr int knee_left = 13;      // 14
constexpr int ankle_left = 14;     // 15
constexpr int foot_left = 15;      // 16
constexpr int hip_right = 16;      // 17
constexpr int knee_right = 17;     // 18
constexpr int ankle_right = 18;    // 19
constexpr int foot_right = 19;     // 20
constexpr int spine = 20;          // 21 (between the shoulders)
constexpr int hand_tip_left = 21;  // 22
constexpr int thumb_left = 22;     // 23
constexpr int hand_tip_right = 23; // 24
constexpr int thumb_right = 24;    // 25
}  // namespace joint

// ---------------------------------------------------------------------------
// Core types
// ---------------------------------------------------------------------------

struct Joint {
  Vec3 p;               // meters, camera coordinate system
  bool tracked = true;

  bool operator==(const Joint&) const = default;
};

struct BodyFrame {
  std::int64_t body_id = 0;
  std::array<Joint, kJointCount> joints{};

  bool operator==(const BodyFrame&) const = default;
};

/// One capture frame may hold zero or more tracked bodies.
using Frame = std::vector<BodyFrame>;

/// Identity of one recorded sample: setup, camera, performer, replication,
/// action. Canonical string form SsssCcccPpppRrrrAaaa.
struct SampleMeta {
  int setup = 1;        // 1..17
  int camera = 1;       // 1..3
  int performer = 1;    // 1..40
  int replication = 1;  // 1..2
  int action = 1;       // 1..60

  bool operator==(const SampleMeta&) const = default;
  auto operator<=>(const SampleMeta&) const = default;
};

struct SkeletonSequence {
  SampleMeta meta;
  std::vector<Frame> frames;  // capture order, at least 1

  bool operator==(const SkeletonSequence&) const = default;
};

struct CameraSetup {
  int setup_no;
  double height_m;
  double distance_m;
};

// ---------------------------------------------------------------------------
// Sample id convention
// ---------------------------------------------------------------------------

namespace detail {

inline int parse_id_field(const std::string& text, std::size_t pos, char tag, int lo, int hi,
                          const char* name) {
  if (text[pos] != tag) {
    throw DataError("sample id '" + text + "': expected '" + std::string(1, tag) +
                    "' at position " + std::to_string(pos));
  }
  int value = 0;
  for (std::size_t i = pos + 1; i < pos + 4; ++i) {
    if (text[i] < '0' || text[i] > '9') {
      throw DataError("sample id '" + text + "': field " + name + " is not 3 digits");
    }
    value = value * 10 + (text[i] - '0');
  }
  if (value < lo || value > hi) {
    throw DataError("sample id '" + text + "': " + name + " " + std::to_string(value) +
                    " out of range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return value;
}

}  // namespace detail

inline SampleMeta parse_sample_id(const std::string& text) {
  if (text.size() != 20) {
    throw DataError("sample id '" + text + "': expected 20 characters SsssCcccPpppRrrrAaaa");
  }
  SampleMeta m;
  m.setup = detail::parse_id_field(text, 0, 'S', 1, 17, "setup");
  m.camera = detail::parse_id_field(text, 4, 'C', 1, 3, "camera");
  m.performer = detail::parse_id_field(text, 8, 'P', 1, 40, "performer");
  m.replication = detail::parse_id_field(text, 12, 'R', 1, 2, "replication");
  m.action = detail::parse_id_field(text, 16, 'A', 1, 60, "action");
  return m;
}

inline std::string format_sample_id(const SampleMeta& m) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "S%03dC%03dP%03dR%03dA%03d", m.setup, m.camera, m.performer,
                m.replication, m.action);
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// Camera setup table: per-setup camera height and distance in meters.
// ---------------------------------------------------------------------------

inline CameraSetup camera_setup(int setup_no) {
  static constexpr double kTable[17][2] = {
      {1.7, 3.5}, {1.7, 2.5}, {1.4, 2.5}, {1.2, 3.0}, {1.2, 3.0}, {0.8, 3.5},
      {0.5, 4.5}, {1.4, 3.5}, {0.8, 2.0}, {1.8, 3.0}, {1.9, 3.0}, {2.0, 3.0},
      {2.1, 3.0}, {2.2, 3.0}, {2.3, 3.5}, {2.7, 3.5}, {2.5, 3.0}};
  if (setup_no < 1 || setup_no > 17) {
    throw DataError("camera_setup: setup " + std::to_string(setup_no) + " out of range [1, 17]");
  }
  return {setup_no, kTable[setup_no - 1][0], kTable[setup_no - 1][1]};
}

// ---------------------------------------------------------------------------
// Canonical sequence file (text, one document per sample):
//
//   NTUSKEL 1
//   S001C002P003R002A013
//   frames <F>
//   frame <idx> bodies <B>          (idx counts 0..F-1 in order)
//   body <body_id> tracked <25 0/1 flags>
//   j <k> <x> <y> <z>               (k = 1..25 ascending)
// ---------------------------------------------------------------------------

inline void write_sequence(const SkeletonSequence& seq, std::ostream& out) {
  if (seq.frames.empty()) throw DataError("write_sequence: sequence has 0 frames");
  out << "NTUSKEL 1\n";
  out << format_sample_id(seq.meta) << "\n";
  out << "frames " << seq.frames.size() << "\n";
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    const Frame& frame = seq.frames[f];
    out << "frame " << f << " bodies " << frame.size() << "\n";
    for (const BodyFrame& body : frame) {
      out << "body " << body.body_id << " tracked";
      for (const Joint& j : body.joints) out << ' ' << (j.tracked ? 1 : 0);
      out << "\n";
      for (int k = 0; k < kJointCount; ++k) {
        const Vec3& p = body.joints[k].p;
        out << "j " << (k + 1) << ' ' << format_double(p.x) << ' ' << format_double(p.y) << ' '
            << format_double(p.z) << "\n";
      }
    }
  }
}

inline SkeletonSequence read_sequence(std::istream& in) {
  std::string magic = require_line(in, "format magic");
  if (magic != "NTUSKEL 1") throw DataError("read_sequence: bad magic line '" + magic + "'");

  SkeletonSequence seq;
  seq.meta = parse_sample_id(require_line(in, "sample id"));

  auto header = split_tokens(require_line(in, "frame count"));
  if (header.size() != 2 || header[0] != "frames") {
    throw DataError("read_sequence: expected 'frames <F>'");
  }
  const std::int64_t n_frames = parse_int(header[1], "frame count");
  if (n_frames < 1) throw DataError("read_sequence: sequence has 0 frames");

  seq.frames.reserve(static_cast<std::size_t>(n_frames));
  for (std::int64_t f = 0; f < n_frames; ++f) {
    auto fh = split_tokens(require_line(in, "frame header"));
    if (fh.size() != 4 || fh[0] != "frame" || fh[2] != "bodies") {
      throw DataError("read_sequence: frame " + std::to_string(f) + ": bad frame header");
    }
    if (parse_int(fh[1], "frame index") != f) {
      throw DataError("read_sequence: frame " + std::to_string(f) + ": index mismatch");
    }
    const std::int64_t n_bodies = parse_int(fh[3], "body count");
    if (n_bodies < 0) throw DataError("read_sequence: frame " + std::to_string(f) + ": bad body count");

    Frame frame;
    std::set<std::int64_t> seen_ids;
    const std::string at_frame = " (frame " + std::to_string(f) + ")";
    for (std::int64_t b = 0; b < n_bodies; ++b) {
      auto bh = split_tokens(require_line(in, "body header" + at_frame));
      if (bh.size() != static_cast<std::size_t>(2 + 1 + kJointCount) || bh[0] != "body" ||
          bh[2] != "tracked") {
        throw DataError("read_sequence: frame " + std::to_string(f) + ": bad body header");
      }
      BodyFrame body;
      body.body_id = parse_int(bh[1], "body id");
      if (!seen_ids.insert(body.body_id).second) {
        throw DataError("read_sequence: frame " + std::to_string(f) + ": duplicate body id " +
                        std::to_string(body.body_id));
      }
      for (int k = 0; k < kJointCount; ++k) {
        const std::string& flag = bh[static_cast<std::size_t>(3 + k)];
        if (flag != "0" && flag != "1") {
          throw DataError("read_sequence: frame " + std::to_string(f) + ": bad tracked flag '" +
                          flag + "'");
        }
        body.joints[k].tracked = flag == "1";
      }
      for (int k = 0; k < kJointCount; ++k) {
        auto jl = split_tokens(require_line(in, "joint line" + at_frame));
        if (jl.size() != 5 || jl[0] != "j") {
          throw DataError("read_sequence: frame " + std::to_string(f) + ": expected 25 joints, " +
                          "joint line " + std::to_string(k + 1) + " malformed");
        }
        if (parse_int(jl[1], "joint index") != k + 1) {
          throw DataError("read_sequence: frame " + std::to_string(f) + ": joint index " + jl[1] +
                          " out of order (expected " + std::to_string(k + 1) + ")");
        }
        Vec3 p{parse_double(jl[2], "x"), parse_double(jl[3], "y"), parse_double(jl[4], "z")};
        if (!finite(p)) {
          throw DataError("read_sequence: frame " + std::to_string(f) + ": non-finite coordinate" +
                          " at joint " + std::to_string(k + 1));
        }
        body.joints[k].p = p;
      }
      frame.push_back(std::move(body));
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

inline void write_sequence_file(const SkeletonSequence& seq, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  write_sequence(seq, out);
  if (!out) throw DataError("write failed: " + path.string());
}

inline SkeletonSequence read_sequence_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  try {
    return read_sequence(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

/// Rewrites untracked joints with the body's most recent tracked position of
/// that joint (else the origin), keeping tracked flags as they are. Import
/// helper for trackers that emit garbage coordinates on lost joints.
inline void carry_untracked_joints(SkeletonSequence& seq) {
  std::map<std::int64_t, std::array<std::pair<bool, Vec3>, kJointCount>> last;
  for (Frame& frame : seq.frames) {
    for (BodyFrame& body : frame) {
      auto& carry = last[body.body_id];
      for (int k = 0; k < kJointCount; ++k) {
        Joint& j = body.joints[k];
        if (j.tracked && finite(j.p)) {
          carry[k] = {true, j.p};
        } else if (!j.tracked) {
          j.p = carry[k].first ? carry[k].second : Vec3{0.0, 0.0, 0.0};
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Catalog: sample_id -> storage path listing
// ---------------------------------------------------------------------------

struct Catalog {
  struct Entry {
    std::string sample_id;
    SampleMeta meta;
    std::string path;
  };
  std::vector<Entry> entries;
  std::filesystem::path base_dir;  // paths resolve against this when relative

  std::filesystem::path resolve(const Entry& e) const {
    std::filesystem::path p(e.path);
    return p.is_absolute() ? p : base_dir / p;
  }
};

struct CatalogLoad {
  Catalog catalog;
  std::vector<std::string> rejects;  // lines whose sample id did not parse
};

inline CatalogLoad load_catalog(std::istream& in) {
  CatalogLoad out;
  std::set<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto tok = split_tokens(line);
    if (tok.empty()) continue;
    if (tok.size() != 2) {
      out.rejects.push_back(line);
      continue;
    }
    SampleMeta meta;
    try {
      meta = parse_sample_id(tok[0]);
    } catch (const DataError&) {
      out.rejects.push_back(line);
      continue;
    }
    if (!ids.insert(tok[0]).second) {
      throw DataError("load_catalog: duplicate sample id " + tok[0]);
    }
    out.catalog.entries.push_back({tok[0], meta, tok[1]});
  }
  return out;
}

inline CatalogLoad load_catalog_file(const std::filesystem::path& listing) {
  std::ifstream in(listing);
  if (!in) throw DataError("cannot open catalog: " + listing.string());
  CatalogLoad out = load_catalog(in);
  out.catalog.base_dir = listing.parent_path();
  return out;
}

inline void write_catalog(const Catalog& catalog, std::ostream& out) {
  for (const auto& e : catalog.entries) out << e.sample_id << ' ' << e.path << "\n";
}

}  // namespace skelrnn
