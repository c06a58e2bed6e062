// Acceptance suite: runs every release gate and prints one PASS/FAIL line
// per criterion. Exits nonzero if any gate fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "skelrnn/eval.hpp"
#include "skelrnn/gradcheck.hpp"
#include "skelrnn/model.hpp"
#include "skelrnn/preprocess.hpp"
#include "skelrnn/skeleton.hpp"
#include "skelrnn/synth.hpp"
#include "skelrnn/train.hpp"

namespace fs = std::filesystem;
using namespace skelrnn;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

// ---------------------------------------------------------------------------
// 1. Gradient oracle: analytic backward vs central finite differences over
//    random small nets of every kind and depth. Budget: 2 CPU minutes.
// ---------------------------------------------------------------------------

bool gradient_oracle(std::string* detail) {
  const auto start = Clock::now();
  double worst = 0.0;
  std::string worst_at;
  Rng rng(2024);
  for (CellKind kind : {CellKind::rnn, CellKind::lstm, CellKind::plstm}) {
    for (int layers = 1; layers <= 2; ++layers) {
      for (int c = 0; c < 20; ++c) {
        GradCheckCase cs = random_gradcheck_case(kind, layers, rng);
        GradCheckResult r = check_gradients(cs.spec, cs.params, cs.inputs, cs.label, 1e-5);
        if (r.max_rel_err > worst) {
          worst = r.max_rel_err;
          worst_at = to_string(kind) + " L" + std::to_string(layers) + " " + r.worst_stack;
        }
      }
    }
  }
  const double elapsed = seconds_since(start);
  *detail = "max_rel_err " + fmt(worst) + " at " + worst_at + ", " + fmt(elapsed) + "s";
  return worst <= 1e-5 && elapsed < 120.0;
}

// ---------------------------------------------------------------------------
// 2. P=1 reduction: a single-part P-LSTM with weights mapped from an LSTM
//    reproduces its outputs and gradients to 1e-12.
// ---------------------------------------------------------------------------

struct MappedPair {
  NetworkSpec lstm_spec, plstm_spec;
  NetworkParams lstm_params, plstm_params;
};

MappedPair mapped_pair(int layers, Rng& rng) {
  MappedPair pair;
  pair.lstm_spec.kind = CellKind::lstm;
  pair.lstm_spec.layers = layers;
  pair.lstm_spec.hidden = 4 + static_cast<int>(rng.uniform_int(0, 5));
  pair.lstm_spec.input_dims = {3 + static_cast<int>(rng.uniform_int(0, 8))};
  pair.lstm_spec.classes = 2 + static_cast<int>(rng.uniform_int(0, 3));
  pair.lstm_spec.dropout = 0.0;
  pair.lstm_spec.biases = rng.uniform() < 0.5;
  pair.lstm_params = init_params(pair.lstm_spec, rng.next_u64());

  pair.plstm_spec = pair.lstm_spec;
  pair.plstm_spec.kind = CellKind::plstm;
  pair.plstm_spec.part_sizes = {pair.lstm_spec.hidden};
  pair.plstm_params = make_params(pair.plstm_spec);

  const int hidden = pair.lstm_spec.hidden;
  for (int l = 0; l < layers; ++l) {
    const GateStack& packed = pair.lstm_params.layers[l].cells[0];
    GateStack& part = pair.plstm_params.layers[l].cells[0];
    GateStack& out = pair.plstm_params.layers[l].out;
    for (int k = 0; k < hidden; ++k) {
      for (int c = 0; c < packed.w.cols(); ++c) {
        part.w(k, c) = packed.w(k, c);                            // i
        part.w(hidden + k, c) = packed.w(hidden + k, c);          // f
        part.w(2 * hidden + k, c) = packed.w(3 * hidden + k, c);  // g
        out.w(k, c) = packed.w(2 * hidden + k, c);                // o
      }
      if (!packed.b.empty()) {
        part.b[k] = packed.b[k];
        part.b[hidden + k] = packed.b[hidden + k];
        part.b[2 * hidden + k] = packed.b[3 * hidden + k];
        out.b[k] = packed.b[2 * hidden + k];
      }
    }
  }
  pair.plstm_params.classifier = pair.lstm_params.classifier;
  return pair;
}

bool p1_reduction(std::string* detail) {
  Rng rng(7);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int layers = 1 + rep % 2;
    MappedPair pair = mapped_pair(layers, rng);

    std::vector<StepInputs> inputs;
    for (int t = 0; t < 4; ++t) {
      Vector v(static_cast<std::size_t>(pair.lstm_spec.input_dims[0]));
      for (double& x : v) x = rng.uniform(-1, 1);
      inputs.push_back({v});
    }
    const int label = static_cast<int>(rng.uniform_int(0, pair.lstm_spec.classes));

    ForwardResult lf = forward(pair.lstm_spec, pair.lstm_params, inputs);
    ForwardResult pf = forward(pair.plstm_spec, pair.plstm_params, inputs);
    for (std::size_t t = 0; t < lf.probs.size(); ++t) {
      for (std::size_t k = 0; k < lf.probs[t].size(); ++k) {
        worst = std::max(worst, std::abs(lf.probs[t][k] - pf.probs[t][k]));
      }
    }

    NetworkParams lg = backward(pair.lstm_spec, pair.lstm_params, lf.cache, label);
    NetworkParams pg = backward(pair.plstm_spec, pair.plstm_params, pf.cache, label);
    const int hidden = pair.lstm_spec.hidden;
    for (int l = 0; l < layers; ++l) {
      const GateStack& packed = lg.layers[l].cells[0];
      const GateStack& part = pg.layers[l].cells[0];
      const GateStack& out = pg.layers[l].out;
      for (int k = 0; k < hidden; ++k) {
        for (int c = 0; c < packed.w.cols(); ++c) {
          worst = std::max(worst, std::abs(packed.w(k, c) - part.w(k, c)));
          worst = std::max(worst, std::abs(packed.w(hidden + k, c) - part.w(hidden + k, c)));
          worst = std::max(worst, std::abs(packed.w(2 * hidden + k, c) - out.w(k, c)));
          worst = std::max(worst, std::abs(packed.w(3 * hidden + k, c) - part.w(2 * hidden + k, c)));
        }
        if (!packed.b.empty()) {
          worst = std::max(worst, std::abs(packed.b[k] - part.b[k]));
          worst = std::max(worst, std::abs(packed.b[hidden + k] - part.b[hidden + k]));
          worst = std::max(worst, std::abs(packed.b[2 * hidden + k] - out.b[k]));
          worst = std::max(worst, std::abs(packed.b[3 * hidden + k] - part.b[2 * hidden + k]));
        }
      }
    }
    for (std::size_t i = 0; i < lg.classifier.w.size(); ++i) {
      worst = std::max(worst, std::abs(lg.classifier.w.data()[i] - pg.classifier.w.data()[i]));
    }
  }
  *detail = "100 draws, max |diff| " + fmt(worst);
  return worst <= 1e-12;
}

// ---------------------------------------------------------------------------
// 3. Normalization invariance under random rigid + uniform-scale transforms.
// ---------------------------------------------------------------------------

bool normalization_invariance(std::string* detail) {
  SynthSpec spec;
  spec.classes = 4;
  spec.subjects = 2;
  spec.cameras = 2;
  spec.frames = 20;
  spec.noise = 0.005;
  spec.seed = 5;
  SynthDataset data = generate_catalog(spec);

  Rng rng(31);
  double worst = 0.0;
  int transforms = 0;
  for (std::size_t i = 0; i < data.sequences.size() && transforms < 120; ++i) {
    const SkeletonSequence& seq = data.sequences[i];
    const SkeletonSequence base = normalize_sequence(seq, 0);
    for (int rep = 0; rep < 10 && transforms < 120; ++rep, ++transforms) {
      Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
      axis = axis / std::max(norm(axis), 1e-12);
      const Mat3 rot = rotation_about_axis(axis, rng.uniform(-3.0, 3.0));
      const Vec3 shift{rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4)};
      const double scale = std::exp(rng.uniform(-1.2, 1.2));

      SkeletonSequence moved = seq;
      for (Frame& f : moved.frames)
        for (BodyFrame& b : f)
          for (Joint& j : b.joints) j.p = rot.apply(j.p * scale) + shift;

      const SkeletonSequence renorm = normalize_sequence(moved, 0);
      for (std::size_t f = 0; f < base.frames.size(); ++f) {
        for (int k = 0; k < kJointCount; ++k) {
          const Vec3 d = base.frames[f][0].joints[k].p - renorm.frames[f][0].joints[k].p;
          worst = std::max({worst, std::abs(d.x), std::abs(d.y), std::abs(d.z)});
        }
      }
    }
  }
  *detail = std::to_string(transforms) + " transforms, max |diff| " + fmt(worst);
  return transforms >= 100 && worst <= 1e-9;
}

// ---------------------------------------------------------------------------
// 4. Split correctness on random catalogs plus the full-catalog counts.
// ---------------------------------------------------------------------------

Catalog full_scale_catalog() {
  std::vector<int> train_ids(kCrossSubjectTrainPerformers.begin(),
                             kCrossSubjectTrainPerformers.end());
  std::vector<int> test_ids;
  for (int p = 1; p <= 40; ++p) {
    if (!is_cross_subject_train_performer(p)) test_ids.push_back(p);
  }
  // training performers cover 112 setup slots (12x6 + 8x5), testing 46
  // (6x3 + 14x2); each (performer, setup) slot yields 60x2x3 = 360 samples,
  // so the totals are 40,320 / 16,560 with exact camera thirds.
  std::vector<std::pair<int, int>> slots;
  for (std::size_t i = 0; i < train_ids.size(); ++i) slots.push_back({train_ids[i], i < 12 ? 6 : 5});
  for (std::size_t i = 0; i < test_ids.size(); ++i) slots.push_back({test_ids[i], i < 6 ? 3 : 2});

  Catalog catalog;
  for (const auto& [performer, n_setups] : slots) {
    for (int s = 1; s <= n_setups; ++s) {
      for (int action = 1; action <= 60; ++action) {
        for (int rep = 1; rep <= 2; ++rep) {
          for (int cam = 1; cam <= 3; ++cam) {
            SampleMeta m{s, cam, performer, rep, action};
            catalog.entries.push_back({format_sample_id(m), m, "x"});
          }
        }
      }
    }
  }
  return catalog;
}

bool split_correctness(std::string* detail) {
  Rng rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    Catalog catalog;
    std::set<std::string> seen;
    while (catalog.entries.size() < 150) {
      SampleMeta m{static_cast<int>(rng.uniform_int(1, 18)),
                   static_cast<int>(rng.uniform_int(1, 4)),
                   static_cast<int>(rng.uniform_int(1, 41)),
                   static_cast<int>(rng.uniform_int(1, 3)),
                   static_cast<int>(rng.uniform_int(1, 61))};
      std::string id = format_sample_id(m);
      if (seen.insert(id).second) catalog.entries.push_back({id, m, "x"});
    }
    for (const std::string& protocol : {"cross-subject", "cross-view"}) {
      Split split;
      try {
        split = make_split(protocol, catalog);
      } catch (const DataError&) {
        continue;  // rare empty side on a random catalog
      }
      std::set<std::string> union_ids(split.train_ids.begin(), split.train_ids.end());
      for (const std::string& id : split.test_ids) {
        if (!union_ids.insert(id).second) {
          *detail = protocol + ": overlapping sides";
          return false;
        }
      }
      if (union_ids.size() != catalog.entries.size()) {
        *detail = protocol + ": split is not a partition";
        return false;
      }
      for (const std::string& id : split.train_ids) {
        const SampleMeta m = parse_sample_id(id);
        if (protocol == "cross-subject" && !is_cross_subject_train_performer(m.performer)) {
          *detail = "cross-subject train side holds performer " + std::to_string(m.performer);
          return false;
        }
        if (protocol == "cross-view" && m.camera == 1) {
          *detail = "cross-view train side holds camera 1";
          return false;
        }
      }
      for (const std::string& id : split.test_ids) {
        const SampleMeta m = parse_sample_id(id);
        if (protocol == "cross-subject" && is_cross_subject_train_performer(m.performer)) {
          *detail = "cross-subject test side holds performer " + std::to_string(m.performer);
          return false;
        }
        if (protocol == "cross-view" && m.camera != 1) {
          *detail = "cross-view test side holds camera " + std::to_string(m.camera);
          return false;
        }
      }
    }
  }

  Catalog full = full_scale_catalog();
  if (full.entries.size() != 56880) {
    *detail = "full catalog scaffold has " + std::to_string(full.entries.size()) + " entries";
    return false;
  }
  const Split subject = cross_subject_split(full);
  const Split view = cross_view_split(full);
  *detail = "cross-subject " + std::to_string(subject.train_ids.size()) + "/" +
            std::to_string(subject.test_ids.size()) + ", cross-view " +
            std::to_string(view.train_ids.size()) + "/" + std::to_string(view.test_ids.size());
  return subject.train_ids.size() == 40320 && subject.test_ids.size() == 16560 &&
         view.train_ids.size() == 37920 && view.test_ids.size() == 18960;
}

// ---------------------------------------------------------------------------
// Subprocess pipeline helpers (criteria 5 and 7 drive the real CLI)
// ---------------------------------------------------------------------------

const char* cli_path() { return SKELRNN_CLI_PATH; }

bool run_cli(const std::string& args) {
  const std::string cmd = std::string(cli_path()) + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str()) == 0;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// 5. Desk-scale learnability through the full pipeline.
// ---------------------------------------------------------------------------

bool desk_learnability(std::string* detail) {
  const auto start = Clock::now();
  const fs::path root = fs::temp_directory_path() / "skelrnn_acceptance" / "learn";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string raw = (root / "raw").string();
  const std::string prep = (root / "prep").string();

  if (!run_cli("synth --out " + raw +
               " --classes 4 --subjects 8 --cameras 3 --frames 100 --noise 0.01 --seed 42") ||
      !run_cli("preprocess --catalog " + raw + "/catalog.txt --out " + prep)) {
    *detail = "pipeline setup failed";
    return false;
  }

  const std::string train_flags =
      " --protocol cross-view --layers 2 --hidden 40 --epochs 200 --batch 4 --lr 0.02"
      " --val-fraction 0.25 --dropout 0 --t-steps 8 --seed 1";
  const std::string plstm_dir = (root / "plstm").string();
  if (!run_cli("train --catalog " + prep + "/catalog.txt --out " + plstm_dir +
               " --model plstm" + train_flags)) {
    *detail = "plstm training failed";
    return false;
  }
  if (!run_cli("eval --catalog " + prep + "/catalog.txt --protocol cross-view --checkpoint " +
               plstm_dir + "/checkpoint.txt --out " + plstm_dir + "/eval.txt")) {
    *detail = "plstm evaluation failed";
    return false;
  }
  std::istringstream header(read_file(plstm_dir + "/eval.txt"));
  std::string split_name;
  double accuracy_pct = 0.0;
  header >> split_name >> accuracy_pct;

  // plain RNN under the identical budget only needs to stay finite
  const std::string rnn_dir = (root / "rnn").string();
  if (!run_cli("train --catalog " + prep + "/catalog.txt --out " + rnn_dir + " --model rnn" +
               train_flags)) {
    *detail = "rnn training failed";
    return false;
  }
  bool rnn_finite = true;
  {
    std::istringstream report(read_file(rnn_dir + "/train_report.txt"));
    std::string line;
    int rows = 0;
    while (std::getline(report, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("selected", 0) == 0) continue;
      std::istringstream row(line);
      int epoch;
      double loss, err;
      row >> epoch >> loss >> err;
      rnn_finite = rnn_finite && std::isfinite(loss) && std::isfinite(err);
      ++rows;
    }
    rnn_finite = rnn_finite && rows == 200;
  }

  const double elapsed = seconds_since(start);
  *detail = "plstm cross-view " + fmt(accuracy_pct) + "%, rnn finite " +
            (rnn_finite ? "yes" : "no") + ", " + fmt(elapsed) + "s";
  return split_name == "cross-view" && accuracy_pct >= 90.0 && rnn_finite && elapsed < 600.0;
}

// ---------------------------------------------------------------------------
// 6. Parameter economy of the part-aware cell.
// ---------------------------------------------------------------------------

bool parameter_economy(std::string* detail) {
  const std::vector<int> dims{15, 18, 18, 12, 12};
  const int hidden = 40;
  const int classes = 60;

  NetworkSpec plstm;
  plstm.kind = CellKind::plstm;
  plstm.layers = 1;
  plstm.hidden = hidden;
  plstm.part_sizes = {8, 8, 8, 8, 8};
  plstm.input_dims = dims;
  plstm.classes = classes;
  plstm.dropout = 0.0;

  NetworkSpec lstm;
  lstm.kind = CellKind::lstm;
  lstm.layers = 1;
  lstm.hidden = hidden;
  lstm.input_dims = {75};
  lstm.classes = classes;
  lstm.dropout = 0.0;

  // closed forms: per part 3*d_p*(dim_p + D) + 3*d_p, shared D*(75+D) + D,
  // classifier K*D + K; LSTM packs 4 gates over the concatenated input.
  std::int64_t expected_plstm = 0;
  for (int p = 0; p < 5; ++p) expected_plstm += 3LL * 8 * (dims[p] + hidden) + 3LL * 8;
  expected_plstm += static_cast<std::int64_t>(hidden) * (75 + hidden) + hidden;
  expected_plstm += static_cast<std::int64_t>(classes) * hidden + classes;
  const std::int64_t expected_lstm =
      4LL * hidden * (75 + hidden) + 4LL * hidden + static_cast<std::int64_t>(classes) * hidden +
      classes;

  const std::int64_t got_plstm = param_count(plstm);
  const std::int64_t got_lstm = param_count(lstm);
  *detail = "plstm " + std::to_string(got_plstm) + " < lstm " + std::to_string(got_lstm);
  return got_plstm == expected_plstm && got_lstm == expected_lstm && got_plstm < got_lstm;
}

// ---------------------------------------------------------------------------
// 7. Pipeline determinism: two seeded synth->preprocess->train->eval runs
//    produce byte-identical artifacts.
// ---------------------------------------------------------------------------

bool pipeline_determinism(std::string* detail) {
  const fs::path root = fs::temp_directory_path() / "skelrnn_acceptance" / "determinism";
  fs::remove_all(root);

  auto run_once = [&](const std::string& tag) -> bool {
    const fs::path base = root / tag;
    const std::string raw = (base / "raw").string();
    const std::string prep = (base / "prep").string();
    const std::string model = (base / "model").string();
    return run_cli("synth --out " + raw +
                   " --classes 3 --subjects 4 --cameras 3 --frames 40 --noise 0.02 --seed 9") &&
           run_cli("preprocess --catalog " + raw + "/catalog.txt --out " + prep) &&
           run_cli("train --catalog " + prep + "/catalog.txt --out " + model +
                   " --model plstm --protocol cross-view --layers 2 --hidden 20 --epochs 8"
                   " --batch 8 --lr 0.02 --val-fraction 0.1 --dropout 0.3 --t-steps 8 --seed 4") &&
           run_cli("eval --catalog " + prep + "/catalog.txt --protocol cross-view --checkpoint " +
                   model + "/checkpoint.txt --out " + model + "/eval.txt");
  };

  if (!run_once("a") || !run_once("b")) {
    *detail = "pipeline run failed";
    return false;
  }

  const std::vector<std::string> artifacts = {
      "raw/catalog.txt",
      "raw/S001C001P001R001A001.skel",
      "prep/catalog.txt",
      "prep/preprocess_report.txt",
      "prep/S001C001P001R001A001.skel",
      "model/train_report.txt",
      "model/checkpoint.txt",
      "model/eval.txt",
  };
  for (const std::string& rel : artifacts) {
    const std::string a = read_file(root / "a" / rel);
    const std::string b = read_file(root / "b" / rel);
    if (a.empty() || a != b) {
      *detail = "artifact differs or is empty: " + rel;
      return false;
    }
  }
  *detail = std::to_string(artifacts.size()) + " artifacts byte-identical";
  return true;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    bool (*run)(std::string*);
  };
  const Criterion criteria[] = {
      {"gradient-oracle", gradient_oracle},
      {"p1-reduction", p1_reduction},
      {"normalization-invariance", normalization_invariance},
      {"split-correctness", split_correctness},
      {"desk-learnability", desk_learnability},
      {"parameter-economy", parameter_economy},
      {"pipeline-determinism", pipeline_determinism},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    std::string detail;
    bool pass = false;
    try {
      pass = c.run(&detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::cout << (pass ? "PASS " : "FAIL ") << c.name << " (" << detail << ")" << std::endl;
    if (!pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
