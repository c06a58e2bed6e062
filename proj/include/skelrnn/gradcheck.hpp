#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "skelrnn/model.hpp"
#include "skelrnn/numerics.hpp"

namespace skelrnn {

// ---------------------------------------------------------------------------
// Central finite-difference check of the analytic backward pass. Uses only
// forward() and the loss, never backward()'s internals.
// ---------------------------------------------------------------------------

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_stack;
  int worst_index = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

/// Relative error |a - n| / max(|a|, |n|, 1e-3); the floor turns the measure
/// into a scaled absolute error for near-zero gradients.
inline double gradcheck_rel_err(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / denom;
}

/// When dropout_seed is set, every loss evaluation re-seeds the dropout
/// stream with it, so all evaluations see identical masks and the check
/// remains exact under dropout.
inline GradCheckResult check_gradients(const NetworkSpec& spec, const NetworkParams& params,
                                       const std::vector<StepInputs>& inputs, int label,
                                       double epsilon = 1e-5,
                                       std::optional<std::uint64_t> dropout_seed = std::nullopt) {
  NetworkParams work = params;

  auto run_forward = [&]() {
    if (dropout_seed) {
      Rng rng(*dropout_seed);
      return forward(spec, work, inputs, &rng);
    }
    return forward(spec, work, inputs);
  };

  const ForwardResult fr = run_forward();
  const NetworkParams analytic = backward(spec, work, fr.cache, label);

  auto loss_at = [&]() { return sequence_loss(run_forward().probs, label); };

  std::vector<GateStack*> work_stacks;
  std::vector<std::string> names;
  for_each_stack(work, [&](const std::string& name, GateStack& s) {
    work_stacks.push_back(&s);
    names.push_back(name);
  });
  std::vector<const GateStack*> grad_stacks;
  for_each_stack(analytic, [&](const std::string&, const GateStack& s) {
    grad_stacks.push_back(&s);
  });

  GradCheckResult result;
  for (std::size_t s = 0; s < work_stacks.size(); ++s) {
    const std::size_t n_w = work_stacks[s]->w.size();
    const std::size_t n_b = work_stacks[s]->b.size();
    for (std::size_t idx = 0; idx < n_w + n_b; ++idx) {
      double* slot = idx < n_w ? work_stacks[s]->w.data() + idx
                               : work_stacks[s]->b.data() + (idx - n_w);
      const double a = idx < n_w ? grad_stacks[s]->w.data()[idx]
                                 : grad_stacks[s]->b[idx - n_w];
      const double original = *slot;
      *slot = original + epsilon;
      const double loss_plus = loss_at();
      *slot = original - epsilon;
      const double loss_minus = loss_at();
      *slot = original;
      const double numeric = (loss_plus - loss_minus) / (2.0 * epsilon);
      const double rel = gradcheck_rel_err(a, numeric);
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_stack = names[s];
        result.worst_index = static_cast<int>(idx);
        result.analytic_at_worst = a;
        result.numeric_at_worst = numeric;
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Random small configurations for sweeping the checker over every cell kind.
// ---------------------------------------------------------------------------

struct GradCheckCase {
  NetworkSpec spec;
  NetworkParams params;
  std::vector<StepInputs> inputs;
  int label = 0;
};

/// Small random net: per-part input dims totalling <= 20, hidden <= 12, T=4.
inline GradCheckCase random_gradcheck_case(CellKind kind, int layers, Rng& rng) {
  GradCheckCase cs;
  cs.spec.kind = kind;
  cs.spec.layers = layers;
  cs.spec.classes = static_cast<int>(rng.uniform_int(2, 6));
  cs.spec.dropout = 0.0;
  cs.spec.biases = rng.uniform() < 0.5;
  if (kind == CellKind::plstm) {
    const int parts = static_cast<int>(rng.uniform_int(2, 4));
    int hidden = 0;
    for (int p = 0; p < parts; ++p) {
      const int dp = static_cast<int>(rng.uniform_int(1, 5));
      cs.spec.part_sizes.push_back(dp);
      hidden += dp;
      cs.spec.input_dims.push_back(static_cast<int>(rng.uniform_int(1, 7)));
    }
    cs.spec.hidden = hidden;
  } else {
    cs.spec.hidden = static_cast<int>(rng.uniform_int(2, 13));
    cs.spec.input_dims = {static_cast<int>(rng.uniform_int(1, 21))};
  }
  cs.params = init_params(cs.spec, rng.next_u64());
  const int t_steps = 4;
  for (int t = 0; t < t_steps; ++t) {
    StepInputs step;
    for (int d : cs.spec.input_dims) {
      Vector v(static_cast<std::size_t>(d));
      for (double& x : v) x = rng.uniform(-1.0, 1.0);
      step.push_back(std::move(v));
    }
    cs.inputs.push_back(std::move(step));
  }
  cs.label = static_cast<int>(rng.uniform_int(0, cs.spec.classes));
  return cs;
}

}  // namespace skelrnn
