#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "eusml/error.hpp"

namespace eusml {

/// k x k counts; rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int k) : k_(k), counts_(static_cast<std::size_t>(k) * k, 0) {
    require(k >= 1, ErrorKind::parameter, "class count must be >= 1");
  }

  ConfusionMatrix(int k, std::vector<std::uint64_t> counts) : k_(k), counts_(std::move(counts)) {
    require(k >= 1, ErrorKind::parameter, "class count must be >= 1");
    require(counts_.size() == static_cast<std::size_t>(k) * k, ErrorKind::parameter,
            "confusion matrix needs k*k entries");
  }

  int k() const noexcept { return k_; }
  std::uint64_t at(int truth, int predicted) const {
    return counts_[static_cast<std::size_t>(truth) * k_ + predicted];
  }
  std::uint64_t& at(int truth, int predicted) {
    return counts_[static_cast<std::size_t>(truth) * k_ + predicted];
  }

  std::uint64_t support(int i) const {
    std::uint64_t n = 0;
    for (int j = 0; j < k_; ++j) n += at(i, j);
    return n;
  }
  std::uint64_t predicted_total(int j) const {
    std::uint64_t n = 0;
    for (int i = 0; i < k_; ++i) n += at(i, j);
    return n;
  }
  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (auto c : counts_) n += c;
    return n;
  }
  std::uint64_t trace() const {
    std::uint64_t n = 0;
    for (int i = 0; i < k_; ++i) n += at(i, i);
    return n;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  int k_;
  std::vector<std::uint64_t> counts_;
};

inline ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted,
                                        int k) {
  require(truth.size() == predicted.size(), ErrorKind::input,
          "true and predicted label sequences differ in length");
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(truth[i] >= 0 && truth[i] < k && predicted[i] >= 0 && predicted[i] < k,
            ErrorKind::input, "label out of range at position " + std::to_string(i));
    ++cm.at(truth[i], predicted[i]);
  }
  return cm;
}

inline double recall_of(const ConfusionMatrix& cm, int i) {
  const auto n = cm.support(i);
  require(n > 0, ErrorKind::undefined_metric,
          "class " + std::to_string(i) + " has no true samples; recall undefined");
  return static_cast<double>(cm.at(i, i)) / static_cast<double>(n);
}

/// Precision of class i; 0 when nothing was predicted as i.
inline double precision_of(const ConfusionMatrix& cm, int i) {
  const auto n = cm.predicted_total(i);
  return n == 0 ? 0.0 : static_cast<double>(cm.at(i, i)) / static_cast<double>(n);
}

/// Mean over classes of TP_i / (TP_i + FN_i).
inline double balanced_accuracy(const ConfusionMatrix& cm) {
  double sum = 0.0;
  for (int i = 0; i < cm.k(); ++i) sum += recall_of(cm, i);
  return sum / cm.k();
}

/// Support-weighted mean of per-class precision.
inline double weighted_precision(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  require(total > 0, ErrorKind::undefined_metric, "confusion matrix is empty");
  double acc = 0.0;
  for (int i = 0; i < cm.k(); ++i) acc += static_cast<double>(cm.support(i)) * precision_of(cm, i);
  return acc / static_cast<double>(total);
}

/// Support-weighted mean of per-class recall (equals overall accuracy).
inline double weighted_recall(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  require(total > 0, ErrorKind::undefined_metric, "confusion matrix is empty");
  double acc = 0.0;
  for (int i = 0; i < cm.k(); ++i) acc += static_cast<double>(cm.support(i)) * recall_of(cm, i);
  return acc / static_cast<double>(total);
}

struct EvalReport {
  double balanced_accuracy = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<std::uint64_t> support;
  std::vector<bool> precision_undefined;  // column sum was zero, precision reported as 0
};

inline EvalReport evaluate(const ConfusionMatrix& cm) {
  EvalReport r;
  r.balanced_accuracy = balanced_accuracy(cm);
  r.weighted_precision = weighted_precision(cm);
  r.weighted_recall = weighted_recall(cm);
  for (int i = 0; i < cm.k(); ++i) {
    r.precision.push_back(precision_of(cm, i));
    r.recall.push_back(recall_of(cm, i));
    r.support.push_back(cm.support(i));
    r.precision_undefined.push_back(cm.predicted_total(i) == 0);
  }
  return r;
}

inline void to_json(nlohmann::json& j, const ConfusionMatrix& cm) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < cm.k(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int jj = 0; jj < cm.k(); ++jj) row.push_back(cm.at(i, jj));
    rows.push_back(row);
  }
  j = rows;
}

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"balanced_accuracy", r.balanced_accuracy},
       {"weighted_precision", r.weighted_precision},
       {"weighted_recall", r.weighted_recall},
       {"precision", r.precision},
       {"recall", r.recall},
       {"support", r.support},
       {"precision_undefined", r.precision_undefined}};
}

inline void from_json(const nlohmann::json& j, EvalReport& r) {
  r.balanced_accuracy = j.at("balanced_accuracy").get<double>();
  r.weighted_precision = j.at("weighted_precision").get<double>();
  r.weighted_recall = j.at("weighted_recall").get<double>();
  r.precision = j.at("precision").get<std::vector<double>>();
  r.recall = j.at("recall").get<std::vector<double>>();
  r.support = j.at("support").get<std::vector<std::uint64_t>>();
  r.precision_undefined = j.at("precision_undefined").get<std::vector<bool>>();
}

inline std::string percent1(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * fraction);
  return buf;
}

/// One results-table row: method, BA, precision, recall as 1-decimal percentages.
inline std::string format_table_row(const std::string& method, const EvalReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-20s %6s %10s %7s", method.c_str(),
                percent1(r.balanced_accuracy).c_str(), percent1(r.weighted_precision).c_str(),
                percent1(r.weighted_recall).c_str());
  return buf;
}

inline std::string format_table_header() {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-20s %6s %10s %7s", "Preprocessing", "BA", "Precision", "Recall");
  return buf;
}

}  // namespace eusml
