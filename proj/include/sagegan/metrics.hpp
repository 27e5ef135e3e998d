#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sagegan/tensor.hpp"

namespace sagegan {

// Evaluation metrics on hard binary masks. Loss-side soft counterparts live
// in losses.hpp; these take {0,1} tensors and return plain numbers.

struct ConfusionCounts {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  int64_t total() const { return tp + fp + fn + tn; }
};

template <typename T>
inline ConfusionCounts confusion_counts(const Tensor<T>& pred, const Tensor<T>& gt) {
  check_same_shape(pred, gt, "confusion_counts");
  ConfusionCounts c;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    const T p = pred[i], g = gt[i];
    if ((p != T(0) && p != T(1)) || (g != T(0) && g != T(1)))
      throw DataError("confusion_counts: inputs must be binary {0,1}, found " +
                      std::to_string(static_cast<double>(p != T(0) && p != T(1) ? p : g)));
    if (p == T(1))
      g == T(1) ? ++c.tp : ++c.fp;
    else
      g == T(1) ? ++c.fn : ++c.tn;
  }
  return c;
}

/// (2 tp + smooth) / (2 tp + fp + fn + smooth); an all-empty pair (0/0 with
/// smooth = 0) counts as perfect agreement.
inline double dice_from_counts(const ConfusionCounts& c, double smooth = 0.0) {
  const double den = 2.0 * c.tp + c.fp + c.fn + smooth;
  if (den == 0.0) return 1.0;
  return (2.0 * c.tp + smooth) / den;
}

template <typename T>
inline double dice_score(const Tensor<T>& pred, const Tensor<T>& gt, double smooth = 0.0) {
  return dice_from_counts(confusion_counts(pred, gt), smooth);
}

/// Undefined ratios (0/0) resolve to 1: an empty prediction is perfectly
/// precise, an empty ground truth perfectly recalled.
inline std::pair<double, double> precision_recall(const ConfusionCounts& c) {
  const double precision = (c.tp + c.fp == 0) ? 1.0 : static_cast<double>(c.tp) / (c.tp + c.fp);
  const double recall = (c.tp + c.fn == 0) ? 1.0 : static_cast<double>(c.tp) / (c.tp + c.fn);
  return {precision, recall};
}

/// F_beta = (1 + b^2) P R / (b^2 P + R) with the precision_recall
/// conventions; a zero denominator with any disagreement present scores 0.
inline double f_score(const ConfusionCounts& c, double beta = 1.0) {
  if (beta <= 0) throw ParamError("f_score: beta must be positive");
  const auto [p, r] = precision_recall(c);
  const double b2 = beta * beta;
  const double den = b2 * p + r;
  if (den == 0.0) return 0.0;
  return (1.0 + b2) * p * r / den;
}

inline double f1_score(const ConfusionCounts& c) { return f_score(c, 1.0); }

/// Percentage improvement of `new_value` over `baseline`.
inline double relative_improvement_pct(double new_value, double baseline) {
  return (new_value - baseline) / baseline * 100.0;
}

/// Dataset-level evaluation record: one row per image plus image-averaged
/// aggregates.
struct SegReport {
  struct Row {
    std::string id;
    double dice = 0, f1 = 0, precision = 0, recall = 0;
  };
  std::vector<Row> per_image;
  double mean_dice = 0, mean_f1 = 0;
  nlohmann::json config;  // resolved settings echoed into the report

  void finalize() {
    mean_dice = mean_f1 = 0;
    for (const auto& r : per_image) {
      mean_dice += r.dice;
      mean_f1 += r.f1;
    }
    if (!per_image.empty()) {
      mean_dice /= static_cast<double>(per_image.size());
      mean_f1 /= static_cast<double>(per_image.size());
    }
  }
};

inline nlohmann::json report_to_json(const SegReport& r) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& row : r.per_image)
    per.push_back({{"id", row.id},
                   {"dice", row.dice},
                   {"f1", row.f1},
                   {"precision", row.precision},
                   {"recall", row.recall}});
  return {{"aggregate", {{"dice", r.mean_dice}, {"f1", r.mean_f1}}},
          {"per_image", per},
          {"config", r.config}};
}

inline SegReport report_from_json(const nlohmann::json& j) {
  SegReport r;
  for (const auto& row : j.at("per_image"))
    r.per_image.push_back({row.at("id").get<std::string>(), row.at("dice").get<double>(),
                           row.at("f1").get<double>(), row.at("precision").get<double>(),
                           row.at("recall").get<double>()});
  r.mean_dice = j.at("aggregate").at("dice").get<double>();
  r.mean_f1 = j.at("aggregate").at("f1").get<double>();
  if (j.contains("config")) r.config = j.at("config");
  return r;
}

}  // namespace sagegan
