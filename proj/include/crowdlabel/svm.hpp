#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "annotation.hpp"
#include "error.hpp"
#include "io.hpp"
#include "random.hpp"
#include "textprep.hpp"

namespace crowdlabel {

// ---------------------------------------------------------------------------
// Row types the trainer accepts. A row provides its dimension, a dot product
// with a dense weight vector, its squared norm and an axpy into a dense vector.
// ---------------------------------------------------------------------------

/// Dense real-valued row.
struct DenseRow {
  std::vector<double> values;
};

inline std::size_t row_dimension(const DenseRow& r) { return r.values.size(); }

inline double row_dot(const DenseRow& r, std::span<const double> w) {
  double s = 0.0;
  for (std::size_t i = 0; i < r.values.size(); ++i) s += r.values[i] * w[i];
  return s;
}

inline double row_squared_norm(const DenseRow& r) {
  double s = 0.0;
  for (double v : r.values) s += v * v;
  return s;
}

inline void row_axpy(std::span<double> w, const DenseRow& r, double scale) {
  for (std::size_t i = 0; i < r.values.size(); ++i) w[i] += scale * r.values[i];
}

inline std::size_t row_dimension(const FeatureVector& r) { return r.dimension; }

inline double row_dot(const FeatureVector& r, std::span<const double> w) {
  double s = 0.0;
  for (auto i : r.active) s += w[i];
  return s;
}

inline double row_squared_norm(const FeatureVector& r) { return static_cast<double>(r.active.size()); }

inline void row_axpy(std::span<double> w, const FeatureVector& r, double scale) {
  for (auto i : r.active) w[i] += scale;
}

template <class R>
concept FeatureRow = requires(const R& r, std::span<const double> cw, std::span<double> w, double s) {
  { row_dimension(r) } -> std::convertible_to<std::size_t>;
  { row_dot(r, cw) } -> std::convertible_to<double>;
  { row_squared_norm(r) } -> std::convertible_to<double>;
  row_axpy(w, r, s);
};

// ---------------------------------------------------------------------------
// Model.
// ---------------------------------------------------------------------------

struct TrainConfig {
  double reg_c = 1.0;
  double class_weight_pos = 1.0;
  double class_weight_neg = 1.0;
  double tol = 1e-6;
  std::size_t max_epochs = 2000;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(reg_c > 0) || !(class_weight_pos > 0) || !(class_weight_neg > 0)) {
      throw InputError("C and class weights must be strictly positive");
    }
    if (!(tol > 0 && tol < 1)) throw InputError("tol must lie in (0, 1)");
    if (max_epochs == 0) throw InputError("max_epochs must be at least 1");
  }

  double class_weight(BinaryClass y) const {
    return y == BinaryClass::positive ? class_weight_pos : class_weight_neg;
  }
};

/// w and b of the separating hyperplane. The bias is trained as the weight of
/// an implicit constant feature, so it is regularized along with w.
struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
  TrainConfig config;
  double objective_value = 0.0;
  std::size_t epochs = 0;
  std::vector<double> objective_trace;  // objective of the returned iterate after each epoch
};

namespace detail {

template <FeatureRow R>
void check_dimensions(std::span<const R> rows, std::span<const BinaryClass> labels, std::size_t dim) {
  if (rows.size() != labels.size()) throw InputError("rows and labels differ in length");
  for (const auto& r : rows) {
    if (row_dimension(r) != dim) {
      throw InputError("feature dimension " + std::to_string(row_dimension(r)) + " does not match " +
                       std::to_string(dim));
    }
  }
}

}  // namespace detail

/// 1/2 (|w|^2 + b^2) + C * sum_i c_{y_i} * max(0, 1 - y_i (w.x_i + b)).
template <FeatureRow R>
double objective(std::span<const double> weights, double bias, std::span<const R> rows,
                 std::span<const BinaryClass> labels, const TrainConfig& config) {
  detail::check_dimensions(rows, labels, weights.size());
  double reg = bias * bias;
  for (double w : weights) reg += w * w;
  double loss = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double margin = sign(labels[i]) * (row_dot(rows[i], weights) + bias);
    if (margin < 1.0) loss += config.class_weight(labels[i]) * (1.0 - margin);
  }
  return 0.5 * reg + config.reg_c * loss;
}

template <FeatureRow R>
double objective(const LinearModel& model, std::span<const R> rows, std::span<const BinaryClass> labels) {
  return objective<R>(model.weights, model.bias, rows, labels, model.config);
}

/// Gradient of the objective where it is differentiable (no margin exactly 1).
/// Layout: d weight components followed by the bias component.
template <FeatureRow R>
std::vector<double> objective_gradient(std::span<const double> weights, double bias, std::span<const R> rows,
                                       std::span<const BinaryClass> labels, const TrainConfig& config) {
  detail::check_dimensions(rows, labels, weights.size());
  std::vector<double> g(weights.begin(), weights.end());
  g.push_back(bias);
  std::span<double> gw(g.data(), weights.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int y = sign(labels[i]);
    const double margin = y * (row_dot(rows[i], weights) + bias);
    if (margin < 1.0) {
      const double s = -config.reg_c * config.class_weight(labels[i]) * y;
      row_axpy(gw, rows[i], s);
      g.back() += s;
    }
  }
  return g;
}

/// Dual coordinate descent on the box-constrained dual, one pass over a
/// seeded permutation per epoch. After every epoch the best primal iterate so
/// far is kept; training stops once its duality gap falls below tol relative
/// to its objective, or after max_epochs.
template <FeatureRow R>
LinearModel train(std::span<const R> rows, std::span<const BinaryClass> labels, const TrainConfig& config) {
  config.validate();
  if (rows.empty()) throw InputError("cannot train on an empty data set");
  const std::size_t dim = row_dimension(rows.front());
  detail::check_dimensions(rows, labels, dim);
  const std::size_t n = rows.size();

  std::vector<double> alpha(n, 0.0), upper(n), qdiag(n);
  for (std::size_t i = 0; i < n; ++i) {
    upper[i] = config.reg_c * config.class_weight(labels[i]);
    qdiag[i] = row_squared_norm(rows[i]) + 1.0;
  }
  std::vector<double> w(dim, 0.0);
  double b = 0.0;

  LinearModel best;
  best.config = config;
  best.weights = w;
  best.objective_value = std::accumulate(upper.begin(), upper.end(), 0.0);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(substream_seed(config.seed, "solver"));

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t i : order) {
      const int y = sign(labels[i]);
      const double grad = y * (row_dot(rows[i], w) + b) - 1.0;
      const double a = alpha[i];
      double projected = grad;
      if (a <= 0.0) projected = std::min(grad, 0.0);
      else if (a >= upper[i]) projected = std::max(grad, 0.0);
      if (projected == 0.0) continue;
      const double next = std::clamp(a - grad / qdiag[i], 0.0, upper[i]);
      const double delta = (next - a) * y;
      if (delta == 0.0) continue;
      row_axpy(std::span<double>(w), rows[i], delta);
      b += delta;
      alpha[i] = next;
    }

    const double primal = objective<R>(w, b, rows, labels, config);
    double sq = b * b;
    for (double v : w) sq += v * v;
    const double dual = std::accumulate(alpha.begin(), alpha.end(), 0.0) - 0.5 * sq;
    if (!std::isfinite(primal) || !std::isfinite(dual)) {
      throw std::runtime_error("svm solver diverged (non-finite objective) at epoch " + std::to_string(epoch));
    }
    if (primal < best.objective_value) {
      best.weights = w;
      best.bias = b;
      best.objective_value = primal;
    }
    best.objective_trace.push_back(best.objective_value);
    best.epochs = epoch;
    if (best.objective_value - dual <= config.tol * best.objective_value) break;
  }
  return best;
}

template <FeatureRow R>
LinearModel train(const std::vector<R>& rows, const std::vector<BinaryClass>& labels, const TrainConfig& config) {
  return train<R>(std::span<const R>(rows), std::span<const BinaryClass>(labels), config);
}

template <FeatureRow R>
double decision_function(const LinearModel& model, const R& x) {
  if (row_dimension(x) != model.weights.size()) throw InputError("feature dimension does not match model");
  return row_dot(x, model.weights) + model.bias;
}

/// Score 0 is a negative prediction.
inline BinaryClass predict_from_score(double score) {
  return score > 0.0 ? BinaryClass::positive : BinaryClass::negative;
}

template <FeatureRow R>
BinaryClass predict(const LinearModel& model, const R& x) {
  return predict_from_score(decision_function(model, x));
}

struct TopFeatures {
  std::vector<std::pair<std::string, double>> positive;  // largest weight first
  std::vector<std::pair<std::string, double>> negative;  // most negative first
};

inline TopFeatures top_features(const LinearModel& model, const Vocabulary& vocab, std::size_t k) {
  if (vocab.size() != model.weights.size()) throw InputError("vocabulary does not match model dimension");
  if (k > model.weights.size()) throw InputError("k exceeds the model dimension");
  std::vector<std::size_t> idx(model.weights.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto& w = model.weights;
  auto take = [&](auto better) {
    std::vector<std::size_t> sorted = idx;
    std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (w[a] != w[b]) return better(w[a], w[b]);
                        return vocab.entries[a] < vocab.entries[b];
                      });
    std::vector<std::pair<std::string, double>> out;
    for (std::size_t i = 0; i < k; ++i) out.emplace_back(vocab.entries[sorted[i]], w[sorted[i]]);
    return out;
  };
  return {take(std::greater<>{}), take(std::less<>{})};
}

// ---------------------------------------------------------------------------
// Serialization.
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"reg_c", c.reg_c},
          {"class_weight_pos", c.class_weight_pos},
          {"class_weight_neg", c.class_weight_neg},
          {"tol", c.tol},
          {"max_epochs", c.max_epochs},
          {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.reg_c = j.value("reg_c", c.reg_c);
  c.class_weight_pos = j.value("class_weight_pos", c.class_weight_pos);
  c.class_weight_neg = j.value("class_weight_neg", c.class_weight_neg);
  c.tol = j.value("tol", c.tol);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

inline nlohmann::json to_json(const LinearModel& m) {
  return {{"dimension", m.weights.size()},
          {"bias", m.bias},
          {"weights", m.weights},
          {"objective_value", m.objective_value},
          {"epochs", m.epochs},
          {"config", to_json(m.config)}};
}

inline LinearModel model_from_json(const nlohmann::json& j) {
  LinearModel m;
  m.weights = j.at("weights").get<std::vector<double>>();
  if (j.at("dimension").get<std::size_t>() != m.weights.size()) {
    throw InputError("model dimension does not match weight count");
  }
  m.bias = j.at("bias").get<double>();
  m.objective_value = j.value("objective_value", 0.0);
  m.epochs = j.value("epochs", std::size_t{0});
  m.config = train_config_from_json(j.value("config", nlohmann::json::object()));
  return m;
}

inline void save_model(const std::filesystem::path& path, const LinearModel& m) {
  write_file_atomic(path, to_json(m).dump(2) + "\n");
}

inline LinearModel load_model(const std::filesystem::path& path) {
  try {
    return model_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

}  // namespace crowdlabel
