#pragma once

// Straight-line reference evaluation of the recurrent cells, written with raw
// loops over the weight matrices. Deliberately shares no step/forward code
// with the library so it can serve as an independent oracle.

#include <cmath>
#include <vector>

#include "skelrnn/model.hpp"

namespace oracle {

using skelrnn::Matrix;
using skelrnn::NetworkParams;
using skelrnn::NetworkSpec;
using skelrnn::StepInputs;
using skelrnn::Vector;

inline double sg(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vector mv(const Matrix& w, const Vector& b, const Vector& z) {
  Vector a(static_cast<std::size_t>(w.rows()), 0.0);
  for (int r = 0; r < w.rows(); ++r) {
    double acc = 0.0;
    for (int c = 0; c < w.cols(); ++c) acc += w(r, c) * z[static_cast<std::size_t>(c)];
    a[static_cast<std::size_t>(r)] = acc + (b.empty() ? 0.0 : b[static_cast<std::size_t>(r)]);
  }
  return a;
}

inline void lstm_step_ref(const Matrix& w, const Vector& b, const Vector& x,
                          const Vector& h_prev, const Vector& c_prev, Vector& h_out,
                          Vector& c_out) {
  const std::size_t hidden = h_prev.size();
  Vector z(x);
  z.insert(z.end(), h_prev.begin(), h_prev.end());
  const Vector a = mv(w, b, z);
  h_out.assign(hidden, 0.0);
  c_out.assign(hidden, 0.0);
  for (std::size_t k = 0; k < hidden; ++k) {
    const double i = sg(a[k]);
    const double f = sg(a[hidden + k]);
    const double o = sg(a[2 * hidden + k]);
    const double g = std::tanh(a[3 * hidden + k]);
    c_out[k] = f * c_prev[k] + i * g;
    h_out[k] = o * std::tanh(c_out[k]);
  }
}

/// Full forward for any cell kind and depth; returns per-step class
/// probabilities. No dropout.
inline std::vector<Vector> forward_ref(const NetworkSpec& spec, const NetworkParams& params,
                                       const std::vector<StepInputs>& inputs) {
  const std::size_t n_layers = static_cast<std::size_t>(spec.layers);
  const std::size_t hidden = static_cast<std::size_t>(spec.hidden);
  std::vector<Vector> h(n_layers, Vector(hidden, 0.0));
  std::vector<Vector> c(n_layers, Vector(hidden, 0.0));

  std::vector<Vector> probs;
  for (const StepInputs& step : inputs) {
    for (std::size_t l = 0; l < n_layers; ++l) {
      // assemble this layer's input parts
      std::vector<Vector> parts;
      if (l == 0) {
        parts = step;
      } else if (spec.kind == skelrnn::CellKind::plstm) {
        std::size_t off = 0;
        for (int dp : spec.part_sizes) {
          parts.emplace_back(h[l - 1].begin() + static_cast<long>(off),
                             h[l - 1].begin() + static_cast<long>(off + dp));
          off += static_cast<std::size_t>(dp);
        }
      } else {
        parts = {h[l - 1]};
      }

      if (spec.kind == skelrnn::CellKind::rnn) {
        Vector z;
        for (const Vector& p : parts) z.insert(z.end(), p.begin(), p.end());
        z.insert(z.end(), h[l].begin(), h[l].end());
        const Vector a = mv(params.layers[l].cells[0].w, params.layers[l].cells[0].b, z);
        for (std::size_t k = 0; k < hidden; ++k) h[l][k] = std::tanh(a[k]);
      } else if (spec.kind == skelrnn::CellKind::lstm) {
        Vector x;
        for (const Vector& p : parts) x.insert(x.end(), p.begin(), p.end());
        Vector h_new, c_new;
        lstm_step_ref(params.layers[l].cells[0].w, params.layers[l].cells[0].b, x, h[l], c[l],
                      h_new, c_new);
        h[l] = h_new;
        c[l] = c_new;
      } else {
        // part-aware cell
        Vector c_new;
        std::size_t cell_off = 0;
        for (std::size_t p = 0; p < parts.size(); ++p) {
          const std::size_t dp = static_cast<std::size_t>(spec.part_sizes[p]);
          Vector z(parts[p]);
          z.insert(z.end(), h[l].begin(), h[l].end());
          const Vector a = mv(params.layers[l].cells[p].w, params.layers[l].cells[p].b, z);
          for (std::size_t k = 0; k < dp; ++k) {
            const double i = sg(a[k]);
            const double f = sg(a[dp + k]);
            const double g = std::tanh(a[2 * dp + k]);
            c_new.push_back(f * c[l][cell_off + k] + i * g);
          }
          cell_off += dp;
        }
        Vector zo;
        for (const Vector& p : parts) zo.insert(zo.end(), p.begin(), p.end());
        zo.insert(zo.end(), h[l].begin(), h[l].end());
        const Vector ao = mv(params.layers[l].out.w, params.layers[l].out.b, zo);
        for (std::size_t k = 0; k < hidden; ++k) {
          h[l][k] = sg(ao[k]) * std::tanh(c_new[k]);
        }
        c[l] = c_new;
      }
    }

    const Vector a = mv(params.classifier.w, params.classifier.b, h[n_layers - 1]);
    double mx = a[0];
    for (double v : a) mx = std::max(mx, v);
    Vector y(a.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      y[k] = std::exp(a[k] - mx);
      sum += y[k];
    }
    for (double& v : y) v /= sum;
    probs.push_back(std::move(y));
  }
  return probs;
}

}  // namespace oracle
