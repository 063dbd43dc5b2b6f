#pragma once

#include <optional>
#include <span>
#include <vector>

#include "voxdec/synth.hpp"

namespace voxdec {

/// counts[truth][pred]
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::vector<long>> counts;

  long total() const;
  long row_sum(std::size_t k) const;
  long col_sum(std::size_t k) const;
  double accuracy() const;  // trace / total
};

ConfusionMatrix confusion(std::span<const int> pred, std::span<const int> truth, std::size_t classes);

struct ClassScores {
  std::vector<double> recall;     // "accuracy of each state"
  std::vector<double> precision;
  std::vector<double> f1;
  std::vector<bool> recall_undefined;     // class absent from truth
  std::vector<bool> precision_undefined;  // class never predicted
  double macro_recall = 0.0;
  double macro_precision = 0.0;
  double macro_f1 = 0.0;
};

ClassScores class_scores(const ConfusionMatrix& cm);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) ... (1,1)
  double auc = 0.0;
};

/// One-vs-rest ROC from a score per frame and a 0/1 truth indicator.
RocCurve roc_auc(std::span<const double> scores, std::span<const int> positive);

/// Pearson correlation; throws DomainError for constant input.
double pcc(std::span<const double> a, std::span<const double> b);

struct ConditionSimilarity {
  int condition = 0;
  std::optional<double> pcc;  // empty when the condition is neither true nor predicted anywhere
};

/// Per non-rest condition: PCC between HRF-convolved predicted and true indicators.
std::vector<ConditionSimilarity> hrf_similarity(std::span<const int> pred, std::span<const int> truth,
                                                const TaskDesign& design, const std::vector<double>& hrf);

/// Frame accuracy within n contiguous segments; the remainder goes to the last one.
std::vector<double> segment_accuracy(std::span<const int> pred, std::span<const int> truth, std::size_t n_segments);

}  // namespace voxdec
