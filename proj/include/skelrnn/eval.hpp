#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "skelrnn/errors.hpp"
#include "skelrnn/model.hpp"
#include "skelrnn/skeleton.hpp"
#include "skelrnn/train.hpp"

namespace skelrnn {

// ---------------------------------------------------------------------------
// Benchmark splits
// ---------------------------------------------------------------------------

struct Split {
  std::string name;  // "cross-subject" or "cross-view"
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

/// Performer ids whose samples train in the cross-subject protocol; the
/// remaining twenty performers test.
constexpr std::array<int, 20> kCrossSubjectTrainPerformers = {
    1, 2, 4, 5, 8, 9, 13, 14, 15, 16, 17, 18, 19, 25, 27, 28, 31, 34, 35, 38};

inline bool is_cross_subject_train_performer(int performer) {
  return std::find(kCrossSubjectTrainPerformers.begin(), kCrossSubjectTrainPerformers.end(),
                   performer) != kCrossSubjectTrainPerformers.end();
}

namespace detail {

// On the full 56,880-sample catalog the protocols have known sizes; loading
// such a catalog and getting different counts means corrupted data.
constexpr std::size_t kFullCatalogSize = 56880;

inline void check_full_catalog_counts(const Split& split, std::size_t catalog_size,
                                      std::size_t expect_train, std::size_t expect_test) {
  if (catalog_size != kFullCatalogSize) return;
  if (split.train_ids.size() != expect_train || split.test_ids.size() != expect_test) {
    throw DataError(split.name + ": full catalog split is " +
                    std::to_string(split.train_ids.size()) + "/" +
                    std::to_string(split.test_ids.size()) + ", expected " +
                    std::to_string(expect_train) + "/" + std::to_string(expect_test));
  }
}

inline void finish_split(Split& split, std::size_t catalog_size) {
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.test_ids.begin(), split.test_ids.end());
  if (split.train_ids.empty() || split.test_ids.empty()) {
    throw DataError(split.name + ": one side of the split is empty");
  }
  if (split.name == "cross-subject") {
    check_full_catalog_counts(split, catalog_size, 40320, 16560);
  } else if (split.name == "cross-view") {
    check_full_catalog_counts(split, catalog_size, 37920, 18960);
  }
}

}  // namespace detail

/// Train on the twenty listed performers, test on the rest.
inline Split cross_subject_split(const Catalog& catalog) {
  Split split;
  split.name = "cross-subject";
  for (const Catalog::Entry& e : catalog.entries) {
    (is_cross_subject_train_performer(e.meta.performer) ? split.train_ids : split.test_ids)
        .push_back(e.sample_id);
  }
  detail::finish_split(split, catalog.entries.size());
  return split;
}

/// Camera 1 tests; cameras 2 and 3 train.
inline Split cross_view_split(const Catalog& catalog) {
  Split split;
  split.name = "cross-view";
  for (const Catalog::Entry& e : catalog.entries) {
    (e.meta.camera == 1 ? split.test_ids : split.train_ids).push_back(e.sample_id);
  }
  detail::finish_split(split, catalog.entries.size());
  return split;
}

inline Split make_split(const std::string& protocol, const Catalog& catalog) {
  if (protocol == "cross-subject") return cross_subject_split(catalog);
  if (protocol == "cross-view") return cross_view_split(catalog);
  throw DataError("unknown protocol '" + protocol + "' (expected cross-subject or cross-view)");
}

// ---------------------------------------------------------------------------
// Classification and evaluation
// ---------------------------------------------------------------------------

/// Deterministic-sampling classification of one preprocessed sample.
inline int classify(const NetworkSpec& spec, const NetworkParams& params,
                    const TrainSample& sample, int t_steps) {
  const auto indices = sample_frame_indices(static_cast<int>(sample.frames.size()), t_steps);
  return classify_steps(spec, params, gather_steps(sample, indices));
}

struct EvalResult {
  double accuracy = 0.0;
  std::vector<std::vector<std::int64_t>> confusion;  // [true class][predicted class]
  std::vector<double> per_class_accuracy;            // 0 for classes with no test samples

  std::int64_t total() const {
    std::int64_t n = 0;
    for (const auto& row : confusion)
      for (std::int64_t v : row) n += v;
    return n;
  }
};

inline EvalResult evaluate(const NetworkSpec& spec, const NetworkParams& params,
                           const Split& split, const SampleSet& data, int t_steps) {
  EvalResult result;
  result.confusion.assign(static_cast<std::size_t>(spec.classes),
                          std::vector<std::int64_t>(static_cast<std::size_t>(spec.classes), 0));
  for (const std::string& id : split.test_ids) {
    auto it = data.samples.find(id);
    if (it == data.samples.end()) throw DataError("evaluate: missing sequence for " + id);
    const TrainSample& sample = it->second;
    if (sample.label < 0 || sample.label >= spec.classes) {
      throw DataError("evaluate: sample " + id + " has label outside the class range");
    }
    const int predicted = classify(spec, params, sample, t_steps);
    ++result.confusion[static_cast<std::size_t>(sample.label)][static_cast<std::size_t>(predicted)];
  }

  std::int64_t correct = 0;
  for (int c = 0; c < spec.classes; ++c) {
    const auto& row = result.confusion[static_cast<std::size_t>(c)];
    const std::int64_t row_total = std::accumulate(row.begin(), row.end(), std::int64_t{0});
    const std::int64_t diag = row[static_cast<std::size_t>(c)];
    correct += diag;
    result.per_class_accuracy.push_back(
        row_total > 0 ? static_cast<double>(diag) / static_cast<double>(row_total) : 0.0);
  }
  const std::int64_t total = result.total();
  if (total == 0) throw DataError("evaluate: no test samples");
  result.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  return result;
}

/// Header with the split name and accuracy in percent (2 decimals), then the
/// confusion matrix, one row of counts per true class.
inline void write_eval_report(std::ostream& out, const std::string& split_name,
                              const EvalResult& result) {
  char acc[32];
  std::snprintf(acc, sizeof acc, "%.2f", 100.0 * result.accuracy);
  out << split_name << ' ' << acc << "\n";
  for (const auto& row : result.confusion) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) out << ' ';
      out << row[k];
    }
    out << "\n";
  }
}

}  // namespace skelrnn
