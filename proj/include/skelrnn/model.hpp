#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "skelrnn/errors.hpp"
#include "skelrnn/numerics.hpp"
#include "skelrnn/textio.hpp"

namespace skelrnn {

// ---------------------------------------------------------------------------
// Network specification
// ---------------------------------------------------------------------------

enum class CellKind { rnn, lstm, plstm };

inline std::string to_string(CellKind k) {
  switch (k) {
    case CellKind::rnn: return "rnn";
    case CellKind::lstm: return "lstm";
    case CellKind::plstm: return "plstm";
  }
  return "?";
}

inline CellKind parse_cell_kind(const std::string& s) {
  if (s == "rnn") return CellKind::rnn;
  if (s == "lstm") return CellKind::lstm;
  if (s == "plstm") return CellKind::plstm;
  throw DataError("unknown cell kind '" + s + "' (expected rnn, lstm or plstm)");
}

/// Inputs at one time step: one vector per part. Plain RNN/LSTM cells consume
/// the concatenation; the part-aware cell consumes the parts individually.
using StepInputs = std::vector<Vector>;

struct NetworkSpec {
  CellKind kind = CellKind::lstm;
  int layers = 1;               // stacked depth, 1 or 2
  int hidden = 40;              // hidden size D per layer
  std::vector<int> part_sizes;  // plstm: per-part cell sizes d_p, sum = hidden
  std::vector<int> input_dims;  // per-part input dims at layer 1
  int classes = 2;
  double dropout = 0.5;         // rate on non-recurrent connections at train time
  bool biases = true;

  int parts() const { return static_cast<int>(input_dims.size()); }
  int input_total() const { return std::accumulate(input_dims.begin(), input_dims.end(), 0); }

  void validate() const {
    if (layers != 1 && layers != 2) {
      throw DimensionError("spec: layers must be 1 or 2, got " + std::to_string(layers));
    }
    if (hidden < 1) throw DimensionError("spec: hidden size must be positive");
    if (classes < 2) throw DimensionError("spec: need at least 2 classes");
    if (input_dims.empty()) throw DimensionError("spec: no input dims");
    for (int d : input_dims) {
      if (d < 1) throw DimensionError("spec: non-positive input dim");
    }
    if (dropout < 0.0 || dropout >= 1.0) {
      throw DimensionError("spec: dropout rate must be in [0, 1)");
    }
    if (kind == CellKind::plstm) {
      if (part_sizes.size() != input_dims.size()) {
        throw DimensionError("spec: plstm has " + std::to_string(part_sizes.size()) +
                             " part sizes but " + std::to_string(input_dims.size()) +
                             " input parts");
      }
      int sum = 0;
      for (int d : part_sizes) {
        if (d < 1) throw DimensionError("spec: non-positive part size");
        sum += d;
      }
      if (sum != hidden) {
        throw DimensionError("spec: part sizes sum to " + std::to_string(sum) +
                             ", expected hidden " + std::to_string(hidden));
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Parameters
//
// Every weight family lives in a GateStack: a matrix whose row blocks are the
// stacked gates, plus its bias (empty when biases are disabled).
//   rnn layer    one stack, rows (h)
//   lstm layer   one stack, rows (i, f, o, g)
//   plstm layer  one stack per part, rows (i, f, g); a shared output stack
//   classifier   one stack, rows = classes
// ---------------------------------------------------------------------------

struct GateStack {
  Matrix w;
  Vector b;
};

struct LayerParams {
  std::vector<GateStack> cells;
  GateStack out;  // plstm shared output gate; unused otherwise
};

struct NetworkParams {
  std::vector<LayerParams> layers;
  GateStack classifier;
};

namespace detail {

/// Per-part input dims of a given layer. Stacked part-aware layers split the
/// previous hidden vector into contiguous d_p blocks in part order.
inline std::vector<int> layer_part_dims(const NetworkSpec& spec, int layer) {
  if (layer == 0) return spec.input_dims;
  if (spec.kind == CellKind::plstm) return spec.part_sizes;
  return {spec.hidden};
}

}  // namespace detail

/// Zero-initialized parameters of the right shapes.
inline NetworkParams make_params(const NetworkSpec& spec) {
  spec.validate();
  auto bias = [&spec](int n) { return spec.biases ? Vector(static_cast<std::size_t>(n), 0.0) : Vector{}; };
  NetworkParams params;
  for (int l = 0; l < spec.layers; ++l) {
    const std::vector<int> dims = detail::layer_part_dims(spec, l);
    const int total = std::accumulate(dims.begin(), dims.end(), 0);
    LayerParams layer;
    switch (spec.kind) {
      case CellKind::rnn:
        layer.cells.push_back({Matrix(spec.hidden, total + spec.hidden), bias(spec.hidden)});
        break;
      case CellKind::lstm:
        layer.cells.push_back(
            {Matrix(4 * spec.hidden, total + spec.hidden), bias(4 * spec.hidden)});
        break;
      case CellKind::plstm: {
        for (std::size_t p = 0; p < dims.size(); ++p) {
          const int dp = spec.part_sizes[p];
          layer.cells.push_back({Matrix(3 * dp, dims[p] + spec.hidden), bias(3 * dp)});
        }
        layer.out = {Matrix(spec.hidden, total + spec.hidden), bias(spec.hidden)};
        break;
      }
    }
    params.layers.push_back(std::move(layer));
  }
  params.classifier = {Matrix(spec.classes, spec.hidden), bias(spec.classes)};
  return params;
}

template <typename Params, typename Fn>
inline void for_each_stack(Params& params, Fn&& fn) {
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& layer = params.layers[l];
    for (std::size_t c = 0; c < layer.cells.size(); ++c) {
      fn("layer" + std::to_string(l) + ".cell" + std::to_string(c), layer.cells[c]);
    }
    if (!layer.out.w.empty()) fn("layer" + std::to_string(l) + ".out", layer.out);
  }
  fn("classifier", params.classifier);
}

/// Uniform weights in [-0.08, 0.08], zero biases, drawn in stack order.
inline NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed) {
  NetworkParams params = make_params(spec);
  Rng rng(seed);
  for_each_stack(params, [&rng](const std::string&, GateStack& stack) {
    double* w = stack.w.data();
    for (std::size_t i = 0; i < stack.w.size(); ++i) w[i] = rng.uniform(-0.08, 0.08);
  });
  return params;
}

/// Exact count of trainable values.
inline std::int64_t param_count(const NetworkSpec& spec) {
  NetworkParams params = make_params(spec);
  std::int64_t n = 0;
  for_each_stack(params, [&n](const std::string&, const GateStack& stack) {
    n += static_cast<std::int64_t>(stack.w.size()) + static_cast<std::int64_t>(stack.b.size());
  });
  return n;
}

// ---------------------------------------------------------------------------
// Single-step cells
// ---------------------------------------------------------------------------

namespace detail {

inline Vector affine(const GateStack& stack, const Vector& z) {
  Vector a = matvec(stack.w, z);
  if (!stack.b.empty()) add_inplace(a, stack.b);
  return a;
}

inline Vector join2(const Vector& x, const Vector& h) {
  Vector z;
  z.reserve(x.size() + h.size());
  z.insert(z.end(), x.begin(), x.end());
  z.insert(z.end(), h.begin(), h.end());
  return z;
}

}  // namespace detail

/// h_t = Tanh(W [x_t; h_prev] + b)
inline Vector rnn_step(const GateStack& cell, const Vector& x_t, const Vector& h_prev) {
  if (cell.w.cols() != static_cast<int>(x_t.size() + h_prev.size())) {
    throw DimensionError("rnn_step: W is " + shape_of(cell.w) + " but [x;h] has length " +
                         std::to_string(x_t.size() + h_prev.size()));
  }
  return tanh(detail::affine(cell, detail::join2(x_t, h_prev)));
}

struct LstmState {
  Vector h;
  Vector c;
};

/// Gates (i,f,o) by Sigm and g by Tanh over the packed rows of
/// W [x_t; h_prev] + b; then c_t = f.c_prev + i.g and h_t = o.Tanh(c_t).
inline LstmState lstm_step(const GateStack& cell, const Vector& x_t, const Vector& h_prev,
                           const Vector& c_prev) {
  const int hidden = static_cast<int>(h_prev.size());
  if (cell.w.rows() != 4 * hidden ||
      cell.w.cols() != static_cast<int>(x_t.size()) + hidden ||
      static_cast<int>(c_prev.size()) != hidden) {
    throw DimensionError("lstm_step: W is " + shape_of(cell.w) + " for input " +
                         std::to_string(x_t.size()) + ", hidden " + std::to_string(hidden));
  }
  const Vector a = detail::affine(cell, detail::join2(x_t, h_prev));
  LstmState out;
  out.h.resize(static_cast<std::size_t>(hidden));
  out.c.resize(static_cast<std::size_t>(hidden));
  for (int k = 0; k < hidden; ++k) {
    const double i = sigmoid(a[static_cast<std::size_t>(k)]);
    const double f = sigmoid(a[static_cast<std::size_t>(hidden + k)]);
    const double o = sigmoid(a[static_cast<std::size_t>(2 * hidden + k)]);
    const double g = std::tanh(a[static_cast<std::size_t>(3 * hidden + k)]);
    const double c = f * c_prev[static_cast<std::size_t>(k)] + i * g;
    out.c[static_cast<std::size_t>(k)] = c;
    out.h[static_cast<std::size_t>(k)] = o * std::tanh(c);
  }
  return out;
}

struct PlstmState {
  Vector h;
  std::vector<Vector> c_parts;
};

/// Per part: (i,f) by Sigm and g by Tanh over W_p [x_p; h_prev] + b_p, each
/// gate seeing the full previous hidden state; sub-cells update
/// independently. One shared output gate over [x_1..x_P; h_prev] scales
/// Tanh of the concatenated sub-cells.
inline PlstmState plstm_step(const LayerParams& layer, const StepInputs& x_parts,
                             const Vector& h_prev, const std::vector<Vector>& c_prev_parts) {
  const std::size_t n_parts = layer.cells.size();
  if (x_parts.size() != n_parts || c_prev_parts.size() != n_parts) {
    throw DimensionError("plstm_step: " + std::to_string(n_parts) + " parts in params, " +
                         std::to_string(x_parts.size()) + " inputs, " +
                         std::to_string(c_prev_parts.size()) + " cell states");
  }
  PlstmState out;
  out.c_parts.resize(n_parts);
  std::vector<Vector> tanh_blocks(n_parts);
  for (std::size_t p = 0; p < n_parts; ++p) {
    const GateStack& cell = layer.cells[p];
    const int dp = static_cast<int>(c_prev_parts[p].size());
    if (cell.w.rows() != 3 * dp ||
        cell.w.cols() != static_cast<int>(x_parts[p].size() + h_prev.size())) {
      throw DimensionError("plstm_step: part " + std::to_string(p) + " W is " +
                           shape_of(cell.w) + " for input " + std::to_string(x_parts[p].size()) +
                           ", hidden " + std::to_string(h_prev.size()) + ", cell " +
                           std::to_string(dp));
    }
    const Vector a = detail::affine(cell, detail::join2(x_parts[p], h_prev));
    Vector c(static_cast<std::size_t>(dp));
    for (int k = 0; k < dp; ++k) {
      const double i = sigmoid(a[static_cast<std::size_t>(k)]);
      const double f = sigmoid(a[static_cast<std::size_t>(dp + k)]);
      const double g = std::tanh(a[static_cast<std::size_t>(2 * dp + k)]);
      c[static_cast<std::size_t>(k)] = f * c_prev_parts[p][static_cast<std::size_t>(k)] + i * g;
    }
    out.c_parts[p] = std::move(c);
  }
  Vector zo = concat(x_parts);
  zo.insert(zo.end(), h_prev.begin(), h_prev.end());
  const Vector o = sigmoid(detail::affine(layer.out, zo));
  const Vector cc = concat(out.c_parts);
  if (o.size() != cc.size()) {
    throw DimensionError("plstm_step: output gate size " + std::to_string(o.size()) +
                         " vs cell size " + std::to_string(cc.size()));
  }
  out.h.resize(cc.size());
  for (std::size_t k = 0; k < cc.size(); ++k) out.h[k] = o[k] * std::tanh(cc[k]);
  return out;
}

// ---------------------------------------------------------------------------
// Full forward pass with cached activations
// ---------------------------------------------------------------------------

namespace detail {

struct RnnCache {
  Vector z;  // [x; h_prev] after input dropout
  Vector h;
};

struct LstmCache {
  Vector z;
  Vector i, f, o, g;
  Vector c_prev, c, tanh_c;
  Vector h;
};

struct PlstmCache {
  std::vector<Vector> z_parts;  // per part [x_p; h_prev]
  std::vector<Vector> i, f, g;
  std::vector<Vector> c_prev_parts, c_parts;
  Vector zo, o, cc_tanh;
  Vector h;
};

}  // namespace detail

struct ForwardCache {
  int t_steps = 0;
  // [layer][t]; only the member matching the cell kind is populated
  std::vector<std::vector<detail::RnnCache>> rnn;
  std::vector<std::vector<detail::LstmCache>> lstm;
  std::vector<std::vector<detail::PlstmCache>> plstm;
  // inverted-dropout masks over each layer's input and over h^L before the
  // classifier; empty vectors mean no dropout was applied
  std::vector<std::vector<Vector>> input_masks;  // [layer][t]
  std::vector<Vector> head_mask;                 // [t]
  std::vector<Vector> head_in;                   // [t] h^L after dropout
  std::vector<Vector> probs;                     // [t]
};

struct ForwardResult {
  std::vector<Vector> probs;  // per-step class probabilities
  ForwardCache cache;
};

namespace detail {

inline Vector draw_mask(int len, double rate, Rng& rng) {
  Vector mask(static_cast<std::size_t>(len));
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

inline void apply_mask(Vector& v, const Vector& mask, std::size_t offset) {
  for (std::size_t k = 0; k < v.size(); ++k) v[k] *= mask[offset + k];
}

}  // namespace detail

/// Runs the network over T steps from zero initial state; y_t is the softmax
/// of the classifier on the top hidden state at every step. Pass a dropout
/// rng to run in training mode; evaluation mode applies no dropout.
inline ForwardResult forward(const NetworkSpec& spec, const NetworkParams& params,
                             const std::vector<StepInputs>& inputs, Rng* dropout_rng = nullptr) {
  spec.validate();
  if (inputs.empty()) throw DimensionError("forward: empty input sequence");
  const int t_steps = static_cast<int>(inputs.size());
  const bool drop = dropout_rng != nullptr && spec.dropout > 0.0;

  for (int t = 0; t < t_steps; ++t) {
    if (static_cast<int>(inputs[static_cast<std::size_t>(t)].size()) != spec.parts()) {
      throw DimensionError("forward: step " + std::to_string(t) + " has " +
                           std::to_string(inputs[static_cast<std::size_t>(t)].size()) +
                           " parts, spec expects " + std::to_string(spec.parts()));
    }
    for (int p = 0; p < spec.parts(); ++p) {
      const auto& v = inputs[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
      if (static_cast<int>(v.size()) != spec.input_dims[static_cast<std::size_t>(p)]) {
        throw DimensionError("forward: step " + std::to_string(t) + " part " + std::to_string(p) +
                             " has dim " + std::to_string(v.size()) + ", spec expects " +
                             std::to_string(spec.input_dims[static_cast<std::size_t>(p)]));
      }
    }
  }

  ForwardCache cache;
  cache.t_steps = t_steps;
  const std::size_t n_layers = static_cast<std::size_t>(spec.layers);
  cache.input_masks.resize(n_layers);
  switch (spec.kind) {
    case CellKind::rnn: cache.rnn.resize(n_layers); break;
    case CellKind::lstm: cache.lstm.resize(n_layers); break;
    case CellKind::plstm: cache.plstm.resize(n_layers); break;
  }

  // recurrent state per layer
  std::vector<Vector> h(n_layers, Vector(static_cast<std::size_t>(spec.hidden), 0.0));
  std::vector<Vector> c(n_layers, Vector(static_cast<std::size_t>(spec.hidden), 0.0));
  std::vector<std::vector<Vector>> c_parts(n_layers);
  if (spec.kind == CellKind::plstm) {
    for (auto& cp : c_parts) {
      for (int dp : spec.part_sizes) cp.emplace_back(static_cast<std::size_t>(dp), 0.0);
    }
  }

  ForwardResult result;
  for (int t = 0; t < t_steps; ++t) {
    std::vector<Vector> below = inputs[static_cast<std::size_t>(t)];
    for (std::size_t l = 0; l < n_layers; ++l) {
      const std::vector<int> dims = detail::layer_part_dims(spec, static_cast<int>(l));
      // layer input: parts from below (layer 0) or the previous layer's h
      std::vector<Vector> x_parts;
      if (l == 0) {
        x_parts = std::move(below);
      } else if (spec.kind == CellKind::plstm) {
        std::size_t off = 0;
        for (int dp : dims) {
          x_parts.push_back(slice(h[l - 1], off, static_cast<std::size_t>(dp)));
          off += static_cast<std::size_t>(dp);
        }
      } else {
        x_parts = {h[l - 1]};
      }
      if (drop) {
        Vector mask;
        {
          int total = 0;
          for (int d : dims) total += d;
          mask = detail::draw_mask(total, spec.dropout, *dropout_rng);
        }
        std::size_t off = 0;
        for (Vector& xp : x_parts) {
          detail::apply_mask(xp, mask, off);
          off += xp.size();
        }
        cache.input_masks[l].push_back(std::move(mask));
      }

      switch (spec.kind) {
        case CellKind::rnn: {
          Vector x = x_parts.size() == 1 ? std::move(x_parts[0]) : concat(x_parts);
          detail::RnnCache sc;
          sc.z = detail::join2(x, h[l]);
          sc.h = tanh(detail::affine(params.layers[l].cells[0], sc.z));
          h[l] = sc.h;
          cache.rnn[l].push_back(std::move(sc));
          break;
        }
        case CellKind::lstm: {
          Vector x = x_parts.size() == 1 ? std::move(x_parts[0]) : concat(x_parts);
          const GateStack& cell = params.layers[l].cells[0];
          detail::LstmCache sc;
          sc.z = detail::join2(x, h[l]);
          sc.c_prev = c[l];
          const Vector a = detail::affine(cell, sc.z);
          const int hd = spec.hidden;
          sc.i.resize(static_cast<std::size_t>(hd));
          sc.f.resize(static_cast<std::size_t>(hd));
          sc.o.resize(static_cast<std::size_t>(hd));
          sc.g.resize(static_cast<std::size_t>(hd));
          sc.c.resize(static_cast<std::size_t>(hd));
          sc.tanh_c.resize(static_cast<std::size_t>(hd));
          sc.h.resize(static_cast<std::size_t>(hd));
          for (int k = 0; k < hd; ++k) {
            const std::size_t ks = static_cast<std::size_t>(k);
            sc.i[ks] = sigmoid(a[ks]);
            sc.f[ks] = sigmoid(a[static_cast<std::size_t>(hd + k)]);
            sc.o[ks] = sigmoid(a[static_cast<std::size_t>(2 * hd + k)]);
            sc.g[ks] = std::tanh(a[static_cast<std::size_t>(3 * hd + k)]);
            sc.c[ks] = sc.f[ks] * sc.c_prev[ks] + sc.i[ks] * sc.g[ks];
            sc.tanh_c[ks] = std::tanh(sc.c[ks]);
            sc.h[ks] = sc.o[ks] * sc.tanh_c[ks];
          }
          h[l] = sc.h;
          c[l] = sc.c;
          cache.lstm[l].push_back(std::move(sc));
          break;
        }
        case CellKind::plstm: {
          const LayerParams& layer = params.layers[l];
          const std::size_t n_parts = layer.cells.size();
          detail::PlstmCache sc;
          sc.c_prev_parts = c_parts[l];
          sc.z_parts.resize(n_parts);
          sc.i.resize(n_parts);
          sc.f.resize(n_parts);
          sc.g.resize(n_parts);
          sc.c_parts.resize(n_parts);
          for (std::size_t p = 0; p < n_parts; ++p) {
            const int dp = spec.part_sizes[p];
            sc.z_parts[p] = detail::join2(x_parts[p], h[l]);
            const Vector a = detail::affine(layer.cells[p], sc.z_parts[p]);
            sc.i[p].resize(static_cast<std::size_t>(dp));
            sc.f[p].resize(static_cast<std::size_t>(dp));
            sc.g[p].resize(static_cast<std::size_t>(dp));
            sc.c_parts[p].resize(static_cast<std::size_t>(dp));
            for (int k = 0; k < dp; ++k) {
              const std::size_t ks = static_cast<std::size_t>(k);
              sc.i[p][ks] = sigmoid(a[ks]);
              sc.f[p][ks] = sigmoid(a[static_cast<std::size_t>(dp + k)]);
              sc.g[p][ks] = std::tanh(a[static_cast<std::size_t>(2 * dp + k)]);
              sc.c_parts[p][ks] =
                  sc.f[p][ks] * sc.c_prev_parts[p][ks] + sc.i[p][ks] * sc.g[p][ks];
            }
          }
          sc.zo = concat(x_parts);
          sc.zo.insert(sc.zo.end(), h[l].begin(), h[l].end());
          sc.o = sigmoid(detail::affine(layer.out, sc.zo));
          const Vector cc = concat(sc.c_parts);
          sc.cc_tanh.resize(cc.size());
          sc.h.resize(cc.size());
          for (std::size_t k = 0; k < cc.size(); ++k) {
            sc.cc_tanh[k] = std::tanh(cc[k]);
            sc.h[k] = sc.o[k] * sc.cc_tanh[k];
          }
          h[l] = sc.h;
          c_parts[l] = sc.c_parts;
          cache.plstm[l].push_back(std::move(sc));
          break;
        }
      }
    }

    Vector head = h[n_layers - 1];
    if (drop) {
      Vector mask = detail::draw_mask(spec.hidden, spec.dropout, *dropout_rng);
      detail::apply_mask(head, mask, 0);
      cache.head_mask.push_back(std::move(mask));
    }
    Vector probs = softmax(detail::affine(params.classifier, head));
    cache.head_in.push_back(std::move(head));
    cache.probs.push_back(probs);
    result.probs.push_back(std::move(probs));
  }
  result.cache = std::move(cache);
  return result;
}

/// Total loss of one sequence: cross-entropy against the fixed label at
/// every step.
inline double sequence_loss(const std::vector<Vector>& probs, int label) {
  double loss = 0.0;
  for (const Vector& y : probs) loss += cross_entropy(y, label);
  return loss;
}

// ---------------------------------------------------------------------------
// Exact backward pass (reverse-mode through the whole unrolled sequence)
// ---------------------------------------------------------------------------

inline NetworkParams backward(const NetworkSpec& spec, const NetworkParams& params,
                              const ForwardCache& cache, int label) {
  spec.validate();
  if (label < 0 || label >= spec.classes) {
    throw DimensionError("backward: label " + std::to_string(label) + " out of range");
  }
  const int t_steps = cache.t_steps;
  const std::size_t n_layers = static_cast<std::size_t>(spec.layers);
  {
    const std::size_t have = spec.kind == CellKind::rnn    ? cache.rnn.size()
                             : spec.kind == CellKind::lstm ? cache.lstm.size()
                                                           : cache.plstm.size();
    if (have != n_layers || static_cast<int>(cache.probs.size()) != t_steps) {
      throw DimensionError("backward: cache does not match spec");
    }
  }

  NetworkParams grads = make_params(spec);
  const std::size_t hidden = static_cast<std::size_t>(spec.hidden);

  std::vector<Vector> dh_carry(n_layers, Vector(hidden, 0.0));
  std::vector<Vector> dc_carry(n_layers, Vector(hidden, 0.0));  // lstm
  std::vector<std::vector<Vector>> dc_parts_carry(n_layers);    // plstm
  if (spec.kind == CellKind::plstm) {
    for (auto& cp : dc_parts_carry) {
      for (int dp : spec.part_sizes) cp.emplace_back(static_cast<std::size_t>(dp), 0.0);
    }
  }

  const bool dropped = !cache.input_masks.empty() && !cache.input_masks[0].empty();

  for (int t = t_steps - 1; t >= 0; --t) {
    const std::size_t ts = static_cast<std::size_t>(t);

    // softmax + cross-entropy head: d(logits) = y - onehot(label)
    Vector da = cache.probs[ts];
    da[static_cast<std::size_t>(label)] -= 1.0;
    add_outer(grads.classifier.w, da, cache.head_in[ts]);
    if (!grads.classifier.b.empty()) add_inplace(grads.classifier.b, da);
    Vector dtop = matvec_transposed(params.classifier.w, da);
    if (dropped) {
      for (std::size_t k = 0; k < dtop.size(); ++k) dtop[k] *= cache.head_mask[ts][k];
    }

    Vector d_from_above = std::move(dtop);
    for (int l = static_cast<int>(n_layers) - 1; l >= 0; --l) {
      const std::size_t ls = static_cast<std::size_t>(l);
      Vector dh = std::move(d_from_above);
      add_inplace(dh, dh_carry[ls]);

      Vector dx;  // gradient w.r.t. this layer's post-dropout input
      switch (spec.kind) {
        case CellKind::rnn: {
          const detail::RnnCache& sc = cache.rnn[ls][ts];
          const GateStack& cell = params.layers[ls].cells[0];
          Vector da_cell(hidden);
          for (std::size_t k = 0; k < hidden; ++k) {
            da_cell[k] = dh[k] * (1.0 - sc.h[k] * sc.h[k]);
          }
          add_outer(grads.layers[ls].cells[0].w, da_cell, sc.z);
          if (!grads.layers[ls].cells[0].b.empty()) {
            add_inplace(grads.layers[ls].cells[0].b, da_cell);
          }
          const Vector dz = matvec_transposed(cell.w, da_cell);
          const std::size_t in_dim = sc.z.size() - hidden;
          dx = slice(dz, 0, in_dim);
          dh_carry[ls] = slice(dz, in_dim, hidden);
          break;
        }
        case CellKind::lstm: {
          const detail::LstmCache& sc = cache.lstm[ls][ts];
          const GateStack& cell = params.layers[ls].cells[0];
          Vector dc = dc_carry[ls];
          Vector da_cell(4 * hidden);
          for (std::size_t k = 0; k < hidden; ++k) {
            dc[k] += dh[k] * sc.o[k] * (1.0 - sc.tanh_c[k] * sc.tanh_c[k]);
            const double d_o = dh[k] * sc.tanh_c[k];
            const double d_i = dc[k] * sc.g[k];
            const double d_f = dc[k] * sc.c_prev[k];
            const double d_g = dc[k] * sc.i[k];
            da_cell[k] = d_i * sc.i[k] * (1.0 - sc.i[k]);
            da_cell[hidden + k] = d_f * sc.f[k] * (1.0 - sc.f[k]);
            da_cell[2 * hidden + k] = d_o * sc.o[k] * (1.0 - sc.o[k]);
            da_cell[3 * hidden + k] = d_g * (1.0 - sc.g[k] * sc.g[k]);
            dc[k] *= sc.f[k];  // becomes dc_prev
          }
          dc_carry[ls] = std::move(dc);
          add_outer(grads.layers[ls].cells[0].w, da_cell, sc.z);
          if (!grads.layers[ls].cells[0].b.empty()) {
            add_inplace(grads.layers[ls].cells[0].b, da_cell);
          }
          const Vector dz = matvec_transposed(cell.w, da_cell);
          const std::size_t in_dim = sc.z.size() - hidden;
          dx = slice(dz, 0, in_dim);
          dh_carry[ls] = slice(dz, in_dim, hidden);
          break;
        }
        case CellKind::plstm: {
          const detail::PlstmCache& sc = cache.plstm[ls][ts];
          const LayerParams& layer = params.layers[ls];
          const std::size_t n_parts = layer.cells.size();

          // shared output gate
          Vector dao(hidden);
          Vector dcc(hidden);
          for (std::size_t k = 0; k < hidden; ++k) {
            const double d_o = dh[k] * sc.cc_tanh[k];
            dao[k] = d_o * sc.o[k] * (1.0 - sc.o[k]);
            dcc[k] = dh[k] * sc.o[k] * (1.0 - sc.cc_tanh[k] * sc.cc_tanh[k]);
          }
          add_outer(grads.layers[ls].out.w, dao, sc.zo);
          if (!grads.layers[ls].out.b.empty()) add_inplace(grads.layers[ls].out.b, dao);
          const Vector dzo = matvec_transposed(layer.out.w, dao);

          const std::size_t in_total = sc.zo.size() - hidden;
          dx.assign(in_total, 0.0);
          for (std::size_t k = 0; k < in_total; ++k) dx[k] = dzo[k];
          Vector dh_prev(hidden, 0.0);
          for (std::size_t k = 0; k < hidden; ++k) dh_prev[k] = dzo[in_total + k];

          std::size_t cell_off = 0;  // offset of part p inside the concatenated cell
          std::size_t in_off = 0;    // offset of part p inside the concatenated input
          for (std::size_t p = 0; p < n_parts; ++p) {
            const std::size_t dp = sc.c_parts[p].size();
            const std::size_t in_dim = sc.z_parts[p].size() - hidden;
            Vector da_cell(3 * dp);
            Vector& dc_part = dc_parts_carry[ls][p];
            for (std::size_t k = 0; k < dp; ++k) {
              const double dc = dc_part[k] + dcc[cell_off + k];
              const double d_i = dc * sc.g[p][k];
              const double d_f = dc * sc.c_prev_parts[p][k];
              const double d_g = dc * sc.i[p][k];
              da_cell[k] = d_i * sc.i[p][k] * (1.0 - sc.i[p][k]);
              da_cell[dp + k] = d_f * sc.f[p][k] * (1.0 - sc.f[p][k]);
              da_cell[2 * dp + k] = d_g * (1.0 - sc.g[p][k] * sc.g[p][k]);
              dc_part[k] = dc * sc.f[p][k];  // dc_prev for step t-1
            }
            add_outer(grads.layers[ls].cells[p].w, da_cell, sc.z_parts[p]);
            if (!grads.layers[ls].cells[p].b.empty()) {
              add_inplace(grads.layers[ls].cells[p].b, da_cell);
            }
            const Vector dz = matvec_transposed(layer.cells[p].w, da_cell);
            for (std::size_t k = 0; k < in_dim; ++k) dx[in_off + k] += dz[k];
            for (std::size_t k = 0; k < hidden; ++k) dh_prev[k] += dz[in_dim + k];
            cell_off += dp;
            in_off += in_dim;
          }
          dh_carry[ls] = std::move(dh_prev);
          break;
        }
      }

      if (dropped) {
        const Vector& mask = cache.input_masks[ls][ts];
        for (std::size_t k = 0; k < dx.size(); ++k) dx[k] *= mask[k];
      }
      if (l > 0) {
        d_from_above = std::move(dx);  // length == hidden by construction
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Classification over a sampled sequence
// ---------------------------------------------------------------------------

/// Argmax over classes of the mean log-probability across steps; ties go to
/// the smallest class index.
inline int classify_steps(const NetworkSpec& spec, const NetworkParams& params,
                          const std::vector<StepInputs>& steps) {
  const ForwardResult fr = forward(spec, params, steps);
  Vector score(static_cast<std::size_t>(spec.classes), 0.0);
  for (const Vector& y : fr.probs) {
    for (std::size_t k = 0; k < score.size(); ++k) {
      score[k] += std::log(std::max(y[k], 1e-30));
    }
  }
  int best = 0;
  for (int k = 1; k < spec.classes; ++k) {
    if (score[static_cast<std::size_t>(k)] > score[static_cast<std::size_t>(best)]) best = k;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Checkpoint format (text):
//
//   SKELCKPT 1
//   kind <rnn|lstm|plstm>
//   layers <L>
//   hidden <D>
//   classes <K>
//   dropout <rate>
//   biases <0|1>
//   input_dims <d...>
//   part_sizes <d...>        (plstm only)
//   stack <name> <rows> <cols>
//   <one line of cols values per row>
//   bias <values> | bias -
//   end
// ---------------------------------------------------------------------------

inline void save_checkpoint(std::ostream& out, const NetworkSpec& spec,
                            const NetworkParams& params) {
  out << "SKELCKPT 1\n";
  out << "kind " << to_string(spec.kind) << "\n";
  out << "layers " << spec.layers << "\n";
  out << "hidden " << spec.hidden << "\n";
  out << "classes " << spec.classes << "\n";
  out << "dropout " << format_double(spec.dropout) << "\n";
  out << "biases " << (spec.biases ? 1 : 0) << "\n";
  out << "input_dims";
  for (int d : spec.input_dims) out << ' ' << d;
  out << "\n";
  if (spec.kind == CellKind::plstm) {
    out << "part_sizes";
    for (int d : spec.part_sizes) out << ' ' << d;
    out << "\n";
  }
  for_each_stack(params, [&out](const std::string& name, const GateStack& stack) {
    out << "stack " << name << ' ' << stack.w.rows() << ' ' << stack.w.cols() << "\n";
    for (int r = 0; r < stack.w.rows(); ++r) {
      const double* row = stack.w.row(r);
      for (int c = 0; c < stack.w.cols(); ++c) {
        if (c) out << ' ';
        out << format_double(row[c]);
      }
      out << "\n";
    }
    if (stack.b.empty()) {
      out << "bias -\n";
    } else {
      out << "bias";
      for (double v : stack.b) out << ' ' << format_double(v);
      out << "\n";
    }
  });
  out << "end\n";
}

struct Checkpoint {
  NetworkSpec spec;
  NetworkParams params;
};

inline Checkpoint load_checkpoint(std::istream& in) {
  if (require_line(in, "checkpoint magic") != "SKELCKPT 1") {
    throw DataError("load_checkpoint: bad magic");
  }
  NetworkSpec spec;
  auto kv = [&in](const std::string& key) {
    auto tok = split_tokens(require_line(in, key));
    if (tok.size() < 2 || tok[0] != key) {
      throw DataError("load_checkpoint: expected '" + key + " ...'");
    }
    tok.erase(tok.begin());
    return tok;
  };
  spec.kind = parse_cell_kind(kv("kind")[0]);
  spec.layers = static_cast<int>(parse_int(kv("layers")[0], "layers"));
  spec.hidden = static_cast<int>(parse_int(kv("hidden")[0], "hidden"));
  spec.classes = static_cast<int>(parse_int(kv("classes")[0], "classes"));
  spec.dropout = parse_double(kv("dropout")[0], "dropout");
  spec.biases = parse_int(kv("biases")[0], "biases") != 0;
  for (const std::string& tok : kv("input_dims")) {
    spec.input_dims.push_back(static_cast<int>(parse_int(tok, "input dim")));
  }
  if (spec.kind == CellKind::plstm) {
    for (const std::string& tok : kv("part_sizes")) {
      spec.part_sizes.push_back(static_cast<int>(parse_int(tok, "part size")));
    }
  }
  spec.validate();

  Checkpoint ck{spec, make_params(spec)};
  for_each_stack(ck.params, [&in](const std::string& name, GateStack& stack) {
    auto head = split_tokens(require_line(in, "stack header"));
    if (head.size() != 4 || head[0] != "stack" || head[1] != name) {
      throw DataError("load_checkpoint: expected stack " + name);
    }
    if (parse_int(head[2], "rows") != stack.w.rows() ||
        parse_int(head[3], "cols") != stack.w.cols()) {
      throw DataError("load_checkpoint: stack " + name + " has shape " + head[2] + "x" + head[3] +
                      ", expected " + shape_of(stack.w));
    }
    for (int r = 0; r < stack.w.rows(); ++r) {
      auto row = split_tokens(require_line(in, "stack row"));
      if (static_cast<int>(row.size()) != stack.w.cols()) {
        throw DataError("load_checkpoint: stack " + name + " row " + std::to_string(r) +
                        " has " + std::to_string(row.size()) + " values");
      }
      for (int c = 0; c < stack.w.cols(); ++c) {
        stack.w(r, c) = parse_double(row[static_cast<std::size_t>(c)], "weight");
      }
    }
    auto bias = split_tokens(require_line(in, "bias line"));
    if (bias.empty() || bias[0] != "bias") throw DataError("load_checkpoint: expected bias line");
    if (bias.size() == 2 && bias[1] == "-") {
      if (!stack.b.empty()) throw DataError("load_checkpoint: stack " + name + " missing bias");
    } else {
      if (bias.size() - 1 != stack.b.size()) {
        throw DataError("load_checkpoint: stack " + name + " bias length " +
                        std::to_string(bias.size() - 1));
      }
      for (std::size_t k = 0; k < stack.b.size(); ++k) {
        stack.b[k] = parse_double(bias[k + 1], "bias");
      }
    }
  });
  if (require_line(in, "end marker") != "end") throw DataError("load_checkpoint: missing end");
  return ck;
}

}  // namespace skelrnn
