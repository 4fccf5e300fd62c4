#pragma once

// Reference implementations used to check the library. Each one follows the
// textbook definition directly and shares no code with include/crowdlabel.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace oracle {

// AUC by counting every positive-negative pair; ties count one half.
inline double auc_pairs(const std::vector<double>& scores, const std::vector<int>& is_pos) {
  double wins = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!is_pos[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (is_pos[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

// AP = sum over distinct thresholds t (descending) of (R(t) - R(prev)) * P(t),
// where everything scoring >= t is predicted positive.
inline double average_precision_sweep(const std::vector<double>& scores, const std::vector<int>& is_pos) {
  std::vector<double> thresholds = scores;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double n_pos = 0;
  for (int p : is_pos) n_pos += p;
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    double tp = 0, predicted = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) {
        ++predicted;
        tp += is_pos[i];
      }
    }
    const double recall = tp / n_pos;
    ap += (recall - prev_recall) * (tp / predicted);
    prev_recall = recall;
  }
  return ap;
}

// Kappa from a contingency table of counts, via p_o and p_e in floating point.
template <std::size_t K>
double kappa_from_table(const std::array<std::array<double, K>, K>& t) {
  double n = 0, diag = 0;
  std::array<double, K> row{}, col{};
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = 0; j < K; ++j) {
      n += t[i][j];
      row[i] += t[i][j];
      col[j] += t[i][j];
    }
    diag += t[i][i];
  }
  const double po = diag / n;
  double pe = 0;
  for (std::size_t i = 0; i < K; ++i) pe += (row[i] / n) * (col[i] / n);
  if (pe == 1.0) return po == 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

// Soft-margin objective with the bias inside the regularizer:
// 0.5 (|w|^2 + b^2) + C sum_i c_{y_i} max(0, 1 - y_i (w.x_i + b)).
struct SvmProblem {
  std::vector<std::vector<double>> x;
  std::vector<int> y;  // +1 / -1
  double c = 1.0, c_pos = 1.0, c_neg = 1.0;

  std::size_t dim() const { return x.empty() ? 0 : x[0].size(); }

  // theta = (w..., b)
  double objective(const std::vector<double>& theta) const {
    const std::size_t d = dim();
    double reg = 0;
    for (double v : theta) reg += v * v;
    double loss = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double s = theta[d];
      for (std::size_t j = 0; j < d; ++j) s += theta[j] * x[i][j];
      loss += (y[i] > 0 ? c_pos : c_neg) * std::max(0.0, 1.0 - y[i] * s);
    }
    return 0.5 * reg + c * loss;
  }

  double min_margin_gap(const std::vector<double>& theta) const {
    const std::size_t d = dim();
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < x.size(); ++i) {
      double s = theta[d];
      for (std::size_t j = 0; j < d; ++j) s += theta[j] * x[i][j];
      gap = std::min(gap, std::abs(1.0 - y[i] * s));
    }
    return gap;
  }
};

// Exact minimizer for tiny problems by enumerating active sets. At the
// optimum every point is either outside the margin, strictly inside it, or
// exactly on it; for each of the 3^n assignments, theta solves the
// equality-constrained QP
//   min 0.5 |theta|^2 - sum_{inside} C c_i theta.z_i   s.t. theta.z_i = 1 on the margin,
// with z_i = y_i (x_i, 1). The optimum is one of these candidates, so the
// smallest true objective over all of them is the minimum.
inline std::vector<double> svm_active_set_minimize(const SvmProblem& p) {
  const std::size_t n = p.x.size(), D = p.dim() + 1;
  std::vector<std::vector<double>> z(n, std::vector<double>(D));
  std::vector<double> cw(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k + 1 < D; ++k) z[i][k] = p.y[i] * p.x[i][k];
    z[i][D - 1] = p.y[i];
    cw[i] = p.c * (p.y[i] > 0 ? p.c_pos : p.c_neg);
  }
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
  };
  std::vector<double> best(D, 0.0);
  double best_val = p.objective(best);
  std::size_t combos = 1;
  for (std::size_t i = 0; i < n; ++i) combos *= 3;
  for (std::size_t code = 0; code < combos; ++code) {
    std::vector<double> u(D, 0.0);
    std::vector<std::size_t> margin;
    std::size_t c = code;
    for (std::size_t i = 0; i < n; ++i, c /= 3) {
      if (c % 3 == 1) {
        for (std::size_t k = 0; k < D; ++k) u[k] += cw[i] * z[i][k];
      } else if (c % 3 == 2) {
        margin.push_back(i);
      }
    }
    const std::size_t m = margin.size();
    if (m > D) continue;
    // Gram system G lambda = 1 - u.z_j, by Gaussian elimination with pivoting.
    std::vector<std::vector<double>> g(m, std::vector<double>(m + 1));
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = 0; b < m; ++b) g[a][b] = dot(z[margin[a]], z[margin[b]]);
      g[a][m] = 1.0 - dot(u, z[margin[a]]);
    }
    bool singular = false;
    for (std::size_t col = 0; col < m && !singular; ++col) {
      std::size_t piv = col;
      for (std::size_t r = col + 1; r < m; ++r) {
        if (std::abs(g[r][col]) > std::abs(g[piv][col])) piv = r;
      }
      if (std::abs(g[piv][col]) < 1e-10) {
        singular = true;
        break;
      }
      std::swap(g[piv], g[col]);
      for (std::size_t r = 0; r < m; ++r) {
        if (r == col) continue;
        const double f = g[r][col] / g[col][col];
        for (std::size_t k = col; k <= m; ++k) g[r][k] -= f * g[col][k];
      }
    }
    if (singular) continue;
    std::vector<double> theta = u;
    for (std::size_t a = 0; a < m; ++a) {
      const double lambda = g[a][m] / g[a][a];
      for (std::size_t k = 0; k < D; ++k) theta[k] += lambda * z[margin[a]][k];
    }
    const double v = p.objective(theta);
    if (v < best_val) best_val = v, best = theta;
  }
  return best;
}

}  // namespace oracle
