// Command-line front end: synth, preprocess, split, train, eval, gradcheck,
// validate. Exit codes: 0 success, 2 usage error, 3 data error, 4 check
// failure.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "skelrnn/eval.hpp"
#include "skelrnn/gradcheck.hpp"
#include "skelrnn/model.hpp"
#include "skelrnn/preprocess.hpp"
#include "skelrnn/skeleton.hpp"
#include "skelrnn/synth.hpp"
#include "skelrnn/train.hpp"

namespace fs = std::filesystem;
using namespace skelrnn;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitCheck = 4;

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  return out;
}

Catalog catalog_subset(const Catalog& catalog, const std::vector<std::string>& ids) {
  std::set<std::string> wanted(ids.begin(), ids.end());
  Catalog out;
  out.base_dir = catalog.base_dir;
  for (const auto& e : catalog.entries) {
    if (wanted.count(e.sample_id)) out.entries.push_back(e);
  }
  return out;
}

/// Flat key-value config file; '#' starts a comment line.
std::map<std::string, std::vector<std::string>> read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path.string());
  std::map<std::string, std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    auto tok = split_tokens(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    if (tok.size() < 2) throw DataError("config line needs a key and a value: '" + line + "'");
    std::vector<std::string> values(tok.begin() + 1, tok.end());
    out[tok[0]] = std::move(values);
  }
  return out;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  SynthSpec spec;
  std::string out_dir;
};

int cmd_synth(const SynthArgs& args) {
  const fs::path catalog = write_dataset(args.spec, args.out_dir);
  const std::size_t n = static_cast<std::size_t>(args.spec.subjects) * args.spec.cameras *
                        args.spec.classes;
  std::cout << "catalog " << catalog.string() << "\n";
  std::cout << "samples " << n << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

struct PreprocessArgs {
  std::string catalog_path;
  std::string out_dir;
  std::string report_path;  // defaults to <out>/preprocess_report.txt
  bool per_frame_basis = false;
};

SkeletonSequence keep_and_relabel(const SkeletonSequence& seq,
                                  const std::vector<std::int64_t>& kept, std::int64_t main_id) {
  std::map<std::int64_t, std::int64_t> relabel;
  relabel[main_id] = 0;
  std::int64_t next = 1;
  for (std::int64_t id : kept) {
    if (id != main_id) relabel[id] = next++;
  }
  SkeletonSequence out;
  out.meta = seq.meta;
  for (const Frame& frame : seq.frames) {
    Frame filtered;
    for (const BodyFrame& body : frame) {
      auto it = relabel.find(body.body_id);
      if (it == relabel.end()) continue;
      BodyFrame copy = body;
      copy.body_id = it->second;
      filtered.push_back(std::move(copy));
    }
    std::sort(filtered.begin(), filtered.end(),
              [](const BodyFrame& a, const BodyFrame& b) { return a.body_id < b.body_id; });
    out.frames.push_back(std::move(filtered));
  }
  return out;
}

int cmd_preprocess(const PreprocessArgs& args) {
  const CatalogLoad load = load_catalog_file(args.catalog_path);
  const fs::path out_dir(args.out_dir);
  fs::create_directories(out_dir);
  const fs::path report_path =
      args.report_path.empty() ? out_dir / "preprocess_report.txt" : fs::path(args.report_path);
  std::ofstream report = open_out(report_path);
  report << "# sample dropped_bodies skipped_frames status\n";

  Catalog out_catalog;
  int ok = 0, failed = 0;
  long long total_dropped = 0, total_skipped = 0;
  for (const auto& entry : load.catalog.entries) {
    std::string failure;
    int dropped = 0, skipped = 0;
    try {
      SkeletonSequence seq = read_sequence_file(load.catalog.resolve(entry));
      std::set<std::int64_t> all_ids;
      for (const Frame& f : seq.frames)
        for (const BodyFrame& b : f) all_ids.insert(b.body_id);

      const std::vector<std::int64_t> kept = filter_noisy_bodies(seq);
      dropped = static_cast<int>(all_ids.size() - kept.size());
      const std::int64_t main_id = main_actor(seq, kept);
      SkeletonSequence filtered = keep_and_relabel(seq, kept, main_id);
      SkeletonSequence normalized = normalize_sequence(
          filtered, 0, args.per_frame_basis ? BasisMode::per_frame : BasisMode::per_sequence);
      for (const Frame& f : normalized.frames) {
        bool has_main = false;
        for (const BodyFrame& b : f) has_main = has_main || b.body_id == 0;
        if (!has_main) ++skipped;
      }
      write_sequence_file(normalized, out_dir / (entry.sample_id + ".skel"));
      out_catalog.entries.push_back({entry.sample_id, entry.meta, entry.sample_id + ".skel"});
    } catch (const DataError& e) {
      failure = e.what();
    }
    total_dropped += dropped;
    total_skipped += skipped;
    if (failure.empty()) {
      ++ok;
      report << entry.sample_id << ' ' << dropped << ' ' << skipped << " ok\n";
    } else {
      ++failed;
      report << entry.sample_id << ' ' << dropped << ' ' << skipped << " failed " << failure
             << "\n";
    }
  }
  for (const std::string& reject : load.rejects) {
    ++failed;
    report << "# rejected catalog line: " << reject << "\n";
  }

  std::ofstream catalog_out = open_out(out_dir / "catalog.txt");
  write_catalog(out_catalog, catalog_out);

  std::cout << "preprocessed " << ok << "/" << (ok + failed) << " samples, dropped_bodies="
            << total_dropped << ", skipped_frames=" << total_skipped << ", failed=" << failed
            << "\n";
  std::cout << "catalog " << (out_dir / "catalog.txt").string() << "\n";
  std::cout << "report " << report_path.string() << "\n";
  return 0;  // batch tolerant: per-sample failures are in the report
}

// ---------------------------------------------------------------------------
// split
// ---------------------------------------------------------------------------

struct SplitArgs {
  std::string catalog_path;
  std::string protocol;
  std::string out_dir;
};

int cmd_split(const SplitArgs& args) {
  const CatalogLoad load = load_catalog_file(args.catalog_path);
  const Split split = make_split(args.protocol, load.catalog);
  std::ofstream train_out = open_out(fs::path(args.out_dir) / "train.ids");
  for (const std::string& id : split.train_ids) train_out << id << "\n";
  std::ofstream test_out = open_out(fs::path(args.out_dir) / "test.ids");
  for (const std::string& id : split.test_ids) test_out << id << "\n";
  std::cout << split.name << " train " << split.train_ids.size() << " test "
            << split.test_ids.size() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string catalog_path;
  std::string protocol = "cross-view";
  std::string out_dir;
  std::string config_path;

  std::string model = "plstm";
  int layers = 2;
  int hidden = 40;
  int classes = 0;  // 0 = infer from the catalog
  std::vector<int> part_sizes;
  bool two_actor = false;

  TrainingConfig cfg;
};

/// Config-file values fill every setting the command line left untouched.
void apply_config_file(TrainArgs& args, const CLI::App* cmd,
                       const std::map<std::string, std::vector<std::string>>& file) {
  auto use_file = [&](const char* flag, const std::string& key) {
    return file.count(key) > 0 && cmd->get_option(flag)->count() == 0;
  };
  auto s_int = [&](const std::string& key) {
    return static_cast<int>(parse_int(file.at(key)[0], key));
  };
  auto s_double = [&](const std::string& key) { return parse_double(file.at(key)[0], key); };

  if (use_file("--model", "model")) args.model = file.at("model")[0];
  if (use_file("--layers", "layers")) args.layers = s_int("layers");
  if (use_file("--hidden", "hidden")) args.hidden = s_int("hidden");
  if (use_file("--classes", "classes")) args.classes = s_int("classes");
  if (use_file("--two-actor", "two_actor")) args.two_actor = s_int("two_actor") != 0;
  if (use_file("--part-sizes", "part_sizes")) {
    args.part_sizes.clear();
    for (const std::string& tok : file.at("part_sizes")) {
      args.part_sizes.push_back(static_cast<int>(parse_int(tok, "part_sizes")));
    }
  }
  if (use_file("--t-steps", "t_steps")) args.cfg.t_steps = s_int("t_steps");
  if (use_file("--epochs", "epochs")) args.cfg.epochs = s_int("epochs");
  if (use_file("--batch", "batch")) args.cfg.batch = s_int("batch");
  if (use_file("--lr", "lr")) args.cfg.lr = s_double("lr");
  if (use_file("--momentum", "momentum")) args.cfg.momentum = s_double("momentum");
  if (use_file("--clip", "clip")) args.cfg.clip = s_double("clip");
  if (use_file("--val-fraction", "val_fraction")) args.cfg.val_fraction = s_double("val_fraction");
  if (use_file("--seed", "seed")) {
    args.cfg.seed = static_cast<std::uint64_t>(parse_int(file.at("seed")[0], "seed"));
  }
  if (use_file("--dropout", "dropout")) args.cfg.dropout = s_double("dropout");
  if (use_file("--lr-decay-every", "lr_decay_every")) {
    args.cfg.lr_decay_every = s_int("lr_decay_every");
  }
  if (use_file("--lr-decay-factor", "lr_decay_factor")) {
    args.cfg.lr_decay_factor = s_double("lr_decay_factor");
  }
}

NetworkSpec build_spec(const TrainArgs& args, int inferred_classes) {
  NetworkSpec spec;
  spec.kind = parse_cell_kind(args.model);
  spec.layers = args.layers;
  spec.hidden = args.hidden;
  spec.classes = args.classes > 0 ? args.classes : inferred_classes;
  spec.dropout = args.cfg.dropout;
  spec.input_dims = default_part_grouping().part_input_dims(args.two_actor);
  if (spec.kind == CellKind::plstm) {
    if (!args.part_sizes.empty()) {
      spec.part_sizes = args.part_sizes;
    } else {
      if (args.hidden % 5 != 0) {
        throw DataError("train: hidden " + std::to_string(args.hidden) +
                        " not divisible into 5 equal part cells; pass --part-sizes");
      }
      spec.part_sizes.assign(5, args.hidden / 5);
    }
  }
  return spec;
}

int cmd_train(TrainArgs& args, const CLI::App* cmd) {
  if (!args.config_path.empty()) {
    apply_config_file(args, cmd, read_config_file(args.config_path));
  }
  const CatalogLoad load = load_catalog_file(args.catalog_path);
  const Split split = make_split(args.protocol, load.catalog);

  int max_action = 0;
  for (const auto& e : load.catalog.entries) max_action = std::max(max_action, e.meta.action);
  const NetworkSpec spec = build_spec(args, max_action);

  const SampleSet data = load_sample_set(catalog_subset(load.catalog, split.train_ids),
                                         default_part_grouping(), args.two_actor);
  const TrainOutcome outcome = train(spec, data, split.train_ids, args.cfg);

  const fs::path out_dir(args.out_dir);
  std::ofstream ck = open_out(out_dir / "checkpoint.txt");
  save_checkpoint(ck, outcome.spec, outcome.params);
  std::ofstream rp = open_out(out_dir / "train_report.txt");
  write_train_report(rp, outcome.report);

  const EpochStat& best =
      outcome.report.epochs[static_cast<std::size_t>(outcome.report.selected_epoch - 1)];
  std::cout << "selected epoch " << outcome.report.selected_epoch << " val_error "
            << format_double(best.val_error) << "\n";
  std::cout << "checkpoint " << (out_dir / "checkpoint.txt").string() << "\n";
  std::cout << "report " << (out_dir / "train_report.txt").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string catalog_path;
  std::string protocol = "cross-view";
  std::string checkpoint_path;
  std::string out_path;  // empty = stdout only
  int t_steps = 8;
};

int cmd_eval(const EvalArgs& args) {
  std::ifstream ck_in(args.checkpoint_path);
  if (!ck_in) throw DataError("cannot open checkpoint: " + args.checkpoint_path);
  const Checkpoint ck = load_checkpoint(ck_in);

  // the checkpoint's input layout tells whether it was trained two-actor
  const PartGrouping grouping = default_part_grouping();
  bool two_actor = false;
  if (ck.spec.input_dims == grouping.part_input_dims(false)) {
    two_actor = false;
  } else if (ck.spec.input_dims == grouping.part_input_dims(true)) {
    two_actor = true;
  } else {
    throw DataError("eval: checkpoint input dims do not match the five-part grouping");
  }

  const CatalogLoad load = load_catalog_file(args.catalog_path);
  const Split split = make_split(args.protocol, load.catalog);
  const SampleSet data =
      load_sample_set(catalog_subset(load.catalog, split.test_ids), grouping, two_actor);
  const EvalResult result = evaluate(ck.spec, ck.params, split, data, args.t_steps);

  write_eval_report(std::cout, split.name, result);
  if (!args.out_path.empty()) {
    std::ofstream out = open_out(args.out_path);
    write_eval_report(out, split.name, result);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 1;
  int cases = 20;
  double epsilon = 1e-5;
  double tolerance = 1e-5;
};

int cmd_gradcheck(const GradcheckArgs& args) {
  double overall = 0.0;
  Rng rng(args.seed);
  for (CellKind kind : {CellKind::rnn, CellKind::lstm, CellKind::plstm}) {
    for (int layers = 1; layers <= 2; ++layers) {
      double worst = 0.0;
      for (int c = 0; c < args.cases; ++c) {
        GradCheckCase cs = random_gradcheck_case(kind, layers, rng);
        GradCheckResult r = check_gradients(cs.spec, cs.params, cs.inputs, cs.label, args.epsilon);
        worst = std::max(worst, r.max_rel_err);
      }
      std::cout << to_string(kind) << " layers " << layers << " max_rel_err "
                << format_double(worst) << "\n";
      overall = std::max(overall, worst);
    }
  }
  const bool pass = overall <= args.tolerance;
  std::cout << "overall " << format_double(overall) << " tolerance "
            << format_double(args.tolerance) << (pass ? " PASS" : " FAIL") << "\n";
  return pass ? 0 : kExitCheck;
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

struct ValidateArgs {
  std::string catalog_path;
};

int cmd_validate(const ValidateArgs& args) {
  const CatalogLoad load = load_catalog_file(args.catalog_path);
  int bad = 0;
  for (const auto& entry : load.catalog.entries) {
    try {
      read_sequence_file(load.catalog.resolve(entry));
      std::cout << entry.sample_id << " ok\n";
    } catch (const DataError& e) {
      ++bad;
      std::cout << entry.sample_id << " invalid: " << e.what() << "\n";
    }
  }
  for (const std::string& reject : load.rejects) {
    ++bad;
    std::cout << "rejected catalog line: " << reject << "\n";
  }
  std::cout << "validated " << load.catalog.entries.size() << " entries, invalid " << bad << "\n";
  return bad == 0 ? 0 : kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skelrnn: skeleton-based action sequence classification toolkit"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_cmd->add_option("--out", synth_args.out_dir, "output directory")->required();
  synth_cmd->add_option("--classes", synth_args.spec.classes, "action classes");
  synth_cmd->add_option("--subjects", synth_args.spec.subjects, "distinct performers");
  synth_cmd->add_option("--cameras", synth_args.spec.cameras, "cameras (1..3)");
  synth_cmd->add_option("--setups", synth_args.spec.setups, "collection setups (1..17)");
  synth_cmd->add_option("--frames", synth_args.spec.frames, "frames per sequence");
  synth_cmd->add_option("--noise", synth_args.spec.noise, "coordinate noise amplitude, meters");
  synth_cmd->add_option("--seed", synth_args.spec.seed, "generator seed");

  PreprocessArgs pre_args;
  CLI::App* pre_cmd = app.add_subcommand(
      "preprocess", "filter noisy bodies, pick the main actor, normalize coordinates");
  pre_cmd->add_option("--catalog", pre_args.catalog_path, "input catalog listing")->required();
  pre_cmd->add_option("--out", pre_args.out_dir, "output directory")->required();
  pre_cmd->add_option("--report", pre_args.report_path, "report path");
  pre_cmd->add_flag("--per-frame-basis", pre_args.per_frame_basis,
                    "recompute the body basis every frame instead of once per sequence");

  SplitArgs split_args;
  CLI::App* split_cmd = app.add_subcommand("split", "write protocol train/test id lists");
  split_cmd->add_option("--catalog", split_args.catalog_path, "catalog listing")->required();
  split_cmd->add_option("--protocol", split_args.protocol, "cross-subject | cross-view")
      ->required()
      ->check(CLI::IsMember({"cross-subject", "cross-view"}));
  split_cmd->add_option("--out", split_args.out_dir, "output directory")->required();

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model on a protocol's train side");
  train_cmd->add_option("--catalog", train_args.catalog_path, "preprocessed catalog")->required();
  train_cmd->add_option("--protocol", train_args.protocol, "cross-subject | cross-view")
      ->check(CLI::IsMember({"cross-subject", "cross-view"}));
  train_cmd->add_option("--out", train_args.out_dir, "output directory")->required();
  train_cmd->add_option("--config", train_args.config_path,
                        "key-value config file (flags win over file values)");
  train_cmd->add_option("--model", train_args.model, "rnn | lstm | plstm")
      ->check(CLI::IsMember({"rnn", "lstm", "plstm"}));
  train_cmd->add_option("--layers", train_args.layers, "stacked layers (1 or 2)");
  train_cmd->add_option("--hidden", train_args.hidden, "hidden size D");
  train_cmd->add_option("--classes", train_args.classes, "class count (default: from catalog)");
  train_cmd->add_option("--part-sizes", train_args.part_sizes,
                        "per-part cell sizes for plstm (default: hidden/5 each)");
  train_cmd->add_flag("--two-actor", train_args.two_actor,
                      "feed a second body per part, zero-filled when absent");
  train_cmd->add_option("--t-steps", train_args.cfg.t_steps, "temporal segments per sample");
  train_cmd->add_option("--epochs", train_args.cfg.epochs, "training epochs");
  train_cmd->add_option("--batch", train_args.cfg.batch, "minibatch size");
  train_cmd->add_option("--lr", train_args.cfg.lr, "learning rate");
  train_cmd->add_option("--momentum", train_args.cfg.momentum, "momentum coefficient");
  train_cmd->add_option("--clip", train_args.cfg.clip, "global gradient-norm clip (<=0 off)");
  train_cmd->add_option("--val-fraction", train_args.cfg.val_fraction, "validation holdout");
  train_cmd->add_option("--seed", train_args.cfg.seed, "training seed");
  train_cmd->add_option("--dropout", train_args.cfg.dropout, "dropout rate");
  train_cmd->add_option("--lr-decay-every", train_args.cfg.lr_decay_every,
                        "epochs between learning-rate decays (0 off)");
  train_cmd->add_option("--lr-decay-factor", train_args.cfg.lr_decay_factor,
                        "learning-rate decay factor");

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a protocol");
  eval_cmd->add_option("--catalog", eval_args.catalog_path, "preprocessed catalog")->required();
  eval_cmd->add_option("--protocol", eval_args.protocol, "cross-subject | cross-view")
      ->check(CLI::IsMember({"cross-subject", "cross-view"}));
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint_path, "checkpoint file")->required();
  eval_cmd->add_option("--out", eval_args.out_path, "also write the report here");
  eval_cmd->add_option("--t-steps", eval_args.t_steps, "temporal segments per sample");

  GradcheckArgs grad_args;
  CLI::App* grad_cmd =
      app.add_subcommand("gradcheck", "finite-difference check of the analytic gradients");
  grad_cmd->add_option("--seed", grad_args.seed, "case generator seed");
  grad_cmd->add_option("--cases", grad_args.cases, "cases per cell kind and depth");
  grad_cmd->add_option("--epsilon", grad_args.epsilon, "central-difference step");
  grad_cmd->add_option("--tolerance", grad_args.tolerance, "max relative error to pass");

  ValidateArgs val_args;
  CLI::App* val_cmd = app.add_subcommand("validate", "check catalog and sequence files");
  val_cmd->add_option("--catalog", val_args.catalog_path, "catalog listing")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(synth_args);
    if (pre_cmd->parsed()) return cmd_preprocess(pre_args);
    if (split_cmd->parsed()) return cmd_split(split_args);
    if (train_cmd->parsed()) return cmd_train(train_args, train_cmd);
    if (eval_cmd->parsed()) return cmd_eval(eval_args);
    if (grad_cmd->parsed()) return cmd_gradcheck(grad_args);
    if (val_cmd->parsed()) return cmd_validate(val_args);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
