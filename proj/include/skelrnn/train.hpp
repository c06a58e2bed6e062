#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "skelrnn/errors.hpp"
#include "skelrnn/model.hpp"
#include "skelrnn/numerics.hpp"
#include "skelrnn/preprocess.hpp"
#include "skelrnn/skeleton.hpp"

namespace skelrnn {

// ---------------------------------------------------------------------------
// Temporal segment sampling: split N frames into T equal segments
// [floor(kN/T), floor((k+1)N/T)) and draw one frame per segment.
// ---------------------------------------------------------------------------

/// Stochastic mode (rng != nullptr) picks uniformly inside each nonempty
/// segment; deterministic mode picks the segment midpoint. Empty segments
/// (N < T) fall back to the clamped segment start, so indices repeat but stay
/// non-decreasing.
inline std::vector<int> sample_frame_indices(int n_frames, int t_steps, Rng* rng = nullptr) {
  if (n_frames < 1) throw DataError("sample_frame_indices: empty sequence");
  if (t_steps < 1) throw DataError("sample_frame_indices: t_steps must be positive");
  std::vector<int> indices;
  indices.reserve(static_cast<std::size_t>(t_steps));
  for (int k = 0; k < t_steps; ++k) {
    const int begin = static_cast<int>((static_cast<std::int64_t>(k) * n_frames) / t_steps);
    const int end = static_cast<int>((static_cast<std::int64_t>(k + 1) * n_frames) / t_steps);
    int pick;
    if (end <= begin) {
      pick = std::min(begin, n_frames - 1);
    } else if (rng) {
      pick = static_cast<int>(rng->uniform_int(begin, end));
    } else {
      pick = begin + (end - begin - 1) / 2;
    }
    indices.push_back(pick);
  }
  return indices;
}

// ---------------------------------------------------------------------------
// Validation holdout
// ---------------------------------------------------------------------------

struct Holdout {
  std::vector<std::string> train;
  std::vector<std::string> validation;
};

/// Seeded shuffle, then the first round(fraction * n) ids become the
/// validation set.
inline Holdout holdout_split(std::vector<std::string> ids, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction >= 0.5) {
    throw DataError("holdout_split: fraction " + std::to_string(fraction) +
                    " outside [0, 0.5)");
  }
  Rng rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
    std::swap(ids[i - 1], ids[j]);
  }
  const std::size_t n_val =
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
  Holdout out;
  out.validation.assign(ids.begin(), ids.begin() + static_cast<long>(n_val));
  out.train.assign(ids.begin() + static_cast<long>(n_val), ids.end());
  return out;
}

// ---------------------------------------------------------------------------
// In-memory sample store: per-frame part inputs plus the class label
// ---------------------------------------------------------------------------

struct TrainSample {
  int label = 0;                    // 0-based class index (action - 1)
  std::vector<StepInputs> frames;   // per retained frame, per part
};

struct SampleSet {
  std::map<std::string, TrainSample> samples;
};

namespace detail {

inline std::int64_t lowest_body_id(const SkeletonSequence& seq) {
  std::int64_t best = 0;
  bool found = false;
  for (const Frame& f : seq.frames) {
    for (const BodyFrame& b : f) {
      if (!found || b.body_id < best) {
        best = b.body_id;
        found = true;
      }
    }
  }
  if (!found) throw DataError("sequence has no bodies");
  return best;
}

}  // namespace detail

/// Loads every catalog entry and builds its network inputs. Sequences are
/// expected preprocessed; the body with the lowest id is taken as the main
/// actor (the preprocess command relabels the main actor to id 0).
inline SampleSet load_sample_set(const Catalog& catalog, const PartGrouping& grouping,
                                 bool two_actor = false) {
  SampleSet set;
  for (const Catalog::Entry& entry : catalog.entries) {
    SkeletonSequence seq = read_sequence_file(catalog.resolve(entry));
    TrainSample sample;
    sample.label = entry.meta.action - 1;
    BuiltInputs built;
    try {
      built = build_part_inputs(seq, detail::lowest_body_id(seq), grouping, two_actor);
    } catch (const DataError& e) {
      throw DataError(entry.sample_id + ": " + e.what());
    }
    if (built.frames.empty()) {
      throw DataError(entry.sample_id + ": no usable frames after preprocessing");
    }
    sample.frames = std::move(built.frames);
    set.samples.emplace(entry.sample_id, std::move(sample));
  }
  return set;
}

inline std::vector<StepInputs> gather_steps(const TrainSample& sample,
                                            const std::vector<int>& indices) {
  std::vector<StepInputs> steps;
  steps.reserve(indices.size());
  for (int i : indices) steps.push_back(sample.frames[static_cast<std::size_t>(i)]);
  return steps;
}

// ---------------------------------------------------------------------------
// Training configuration and report
// ---------------------------------------------------------------------------

struct TrainingConfig {
  int t_steps = 8;
  int epochs = 300;
  int batch = 64;
  double lr = 0.02;
  double momentum = 0.9;
  double clip = 5.0;           // global gradient norm; <= 0 disables clipping
  double val_fraction = 0.05;
  std::uint64_t seed = 1;
  double dropout = 0.5;
  int lr_decay_every = 100;    // epochs; 0 disables decay
  double lr_decay_factor = 0.5;

  void validate() const {
    if (t_steps < 1) throw DataError("config: t_steps must be >= 1");
    if (epochs < 1) throw DataError("config: epochs must be >= 1");
    if (batch < 1) throw DataError("config: batch must be >= 1");
    if (!(lr > 0.0)) throw DataError("config: learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw DataError("config: momentum outside [0, 1)");
    if (val_fraction < 0.0 || val_fraction >= 0.5) {
      throw DataError("config: validation fraction outside [0, 0.5)");
    }
    if (dropout < 0.0 || dropout >= 1.0) throw DataError("config: dropout outside [0, 1)");
    if (lr_decay_every < 0) throw DataError("config: lr_decay_every must be >= 0");
    if (!(lr_decay_factor > 0.0) || lr_decay_factor > 1.0) {
      throw DataError("config: lr_decay_factor outside (0, 1]");
    }
  }
};

struct EpochStat {
  double train_loss = 0.0;  // mean summed-over-time loss per sample
  double val_error = 0.0;   // fraction misclassified under deterministic sampling
};

struct TrainReport {
  std::vector<EpochStat> epochs;
  int selected_epoch = 0;  // 1-based; minimum validation error, earliest on ties
};

/// One epoch per line, then the selected epoch.
inline void write_train_report(std::ostream& out, const TrainReport& report) {
  out << "# epoch train_loss val_error\n";
  for (std::size_t e = 0; e < report.epochs.size(); ++e) {
    out << (e + 1) << ' ' << format_double(report.epochs[e].train_loss) << ' '
        << format_double(report.epochs[e].val_error) << "\n";
  }
  out << "selected " << report.selected_epoch << "\n";
}

struct TrainOutcome {
  NetworkSpec spec;
  NetworkParams params;  // parameters of the selected epoch
  TrainReport report;
};

// ---------------------------------------------------------------------------
// Minibatch SGD with classical momentum and global-norm clipping
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double*> param_slots(NetworkParams& params) {
  std::vector<double*> slots;
  for_each_stack(params, [&slots](const std::string&, GateStack& s) {
    double* w = s.w.data();
    for (std::size_t i = 0; i < s.w.size(); ++i) slots.push_back(w + i);
    for (double& b : s.b) slots.push_back(&b);
  });
  return slots;
}

inline void zero_params(NetworkParams& params) {
  for_each_stack(params, [](const std::string&, GateStack& s) {
    std::fill(s.w.data(), s.w.data() + s.w.size(), 0.0);
    std::fill(s.b.begin(), s.b.end(), 0.0);
  });
}

}  // namespace detail

/// Validation (or fallback) error under deterministic frame sampling.
inline double classification_error(const NetworkSpec& spec, const NetworkParams& params,
                                   const SampleSet& data, const std::vector<std::string>& ids,
                                   int t_steps) {
  if (ids.empty()) throw DataError("classification_error: no ids");
  int wrong = 0;
  for (const std::string& id : ids) {
    const TrainSample& sample = data.samples.at(id);
    const auto indices = sample_frame_indices(static_cast<int>(sample.frames.size()), t_steps);
    if (classify_steps(spec, params, gather_steps(sample, indices)) != sample.label) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(ids.size());
}

/// Minibatch SGD with momentum on the summed-over-time cross-entropy loss.
/// Frame indices are re-sampled stochastically every epoch; after each epoch
/// the validation error is measured with deterministic sampling and the
/// epoch with the least validation error wins. With no holdout (fraction 0)
/// the training ids themselves serve for model selection.
inline TrainOutcome train(NetworkSpec spec, const SampleSet& data,
                          const std::vector<std::string>& train_ids, const TrainingConfig& cfg) {
  cfg.validate();
  spec.dropout = cfg.dropout;
  spec.validate();
  if (train_ids.empty()) throw DataError("train: empty training set");
  for (const std::string& id : train_ids) {
    auto it = data.samples.find(id);
    if (it == data.samples.end()) throw DataError("train: no data for sample " + id);
    if (it->second.label < 0 || it->second.label >= spec.classes) {
      throw DataError("train: sample " + id + " has label " +
                      std::to_string(it->second.label + 1) + " outside " +
                      std::to_string(spec.classes) + " classes");
    }
  }

  const Holdout holdout = holdout_split(train_ids, cfg.val_fraction, Rng::child(cfg.seed, 0).next_u64());
  if (holdout.train.empty()) throw DataError("train: holdout left no training samples");
  const std::vector<std::string>& val_ids =
      holdout.validation.empty() ? holdout.train : holdout.validation;

  NetworkParams params = init_params(spec, Rng::child(cfg.seed, 1).next_u64());
  NetworkParams velocity = make_params(spec);
  NetworkParams grads = make_params(spec);
  const std::vector<double*> p_slots = detail::param_slots(params);
  const std::vector<double*> v_slots = detail::param_slots(velocity);
  const std::vector<double*> g_slots = detail::param_slots(grads);

  Rng shuffle_rng = Rng::child(cfg.seed, 2);
  Rng frame_rng = Rng::child(cfg.seed, 3);
  Rng dropout_rng = Rng::child(cfg.seed, 4);

  std::vector<std::string> order = holdout.train;
  TrainOutcome out;
  out.report.selected_epoch = 0;
  double best_error = std::numeric_limits<double>::infinity();
  NetworkParams best_params = params;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const int decay_steps = cfg.lr_decay_every > 0 ? (epoch - 1) / cfg.lr_decay_every : 0;
    const double lr = cfg.lr * std::pow(cfg.lr_decay_factor, decay_steps);

    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j =
          static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i)));
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    std::size_t cursor = 0;
    int minibatch = 0;
    while (cursor < order.size()) {
      const std::size_t batch_end = std::min(cursor + static_cast<std::size_t>(cfg.batch),
                                             order.size());
      const double batch_count = static_cast<double>(batch_end - cursor);
      ++minibatch;
      detail::zero_params(grads);

      for (std::size_t s = cursor; s < batch_end; ++s) {
        const TrainSample& sample = data.samples.at(order[s]);
        const auto indices =
            sample_frame_indices(static_cast<int>(sample.frames.size()), cfg.t_steps, &frame_rng);
        const auto steps = gather_steps(sample, indices);
        ForwardResult fr = spec.dropout > 0.0 ? forward(spec, params, steps, &dropout_rng)
                                              : forward(spec, params, steps);
        const double loss = sequence_loss(fr.probs, sample.label);
        if (!std::isfinite(loss)) {
          throw DataError("train: non-finite loss in epoch " + std::to_string(epoch) +
                          ", minibatch " + std::to_string(minibatch) + ", sample " + order[s]);
        }
        epoch_loss += loss;
        NetworkParams sample_grads = backward(spec, params, fr.cache, sample.label);
        std::vector<double*> sg = detail::param_slots(sample_grads);
        for (std::size_t k = 0; k < g_slots.size(); ++k) *g_slots[k] += *sg[k];
      }

      double scale = 1.0 / batch_count;
      if (cfg.clip > 0.0) {
        double sq = 0.0;
        for (double* g : g_slots) sq += (*g * scale) * (*g * scale);
        const double global_norm = std::sqrt(sq);
        if (global_norm > cfg.clip) scale *= cfg.clip / global_norm;
      }
      for (std::size_t k = 0; k < p_slots.size(); ++k) {
        *v_slots[k] = cfg.momentum * *v_slots[k] + *g_slots[k] * scale;
        *p_slots[k] -= lr * *v_slots[k];
      }
      cursor = batch_end;
    }

    EpochStat stat;
    stat.train_loss = epoch_loss / static_cast<double>(order.size());
    stat.val_error = classification_error(spec, params, data, val_ids, cfg.t_steps);
    out.report.epochs.push_back(stat);
    if (stat.val_error < best_error) {
      best_error = stat.val_error;
      best_params = params;
      out.report.selected_epoch = epoch;
    }
  }

  out.spec = spec;
  out.params = std::move(best_params);
  return out;
}

}  // namespace skelrnn
