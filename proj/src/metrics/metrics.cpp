#include "voxdec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "voxdec/error.hpp"

namespace voxdec {

long ConfusionMatrix::total() const {
  long n = 0;
  for (const auto& row : counts) n += std::accumulate(row.begin(), row.end(), 0L);
  return n;
}

long ConfusionMatrix::row_sum(std::size_t k) const {
  return std::accumulate(counts[k].begin(), counts[k].end(), 0L);
}

long ConfusionMatrix::col_sum(std::size_t k) const {
  long n = 0;
  for (const auto& row : counts) n += row[k];
  return n;
}

double ConfusionMatrix::accuracy() const {
  long trace = 0;
  for (std::size_t k = 0; k < classes; ++k) trace += counts[k][k];
  const long n = total();
  return n ? static_cast<double>(trace) / static_cast<double>(n) : 0.0;
}

ConfusionMatrix confusion(std::span<const int> pred, std::span<const int> truth, std::size_t classes) {
  if (pred.size() != truth.size()) throw ShapeError("confusion: prediction and truth lengths differ");
  ConfusionMatrix cm{classes, std::vector<std::vector<long>>(classes, std::vector<long>(classes, 0))};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int p = pred[i], t = truth[i];
    if (p < 0 || t < 0 || static_cast<std::size_t>(p) >= classes || static_cast<std::size_t>(t) >= classes)
      throw DomainError("confusion: label out of range at frame " + std::to_string(i));
    cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)] += 1;
  }
  return cm;
}

ClassScores class_scores(const ConfusionMatrix& cm) {
  const auto k = cm.classes;
  ClassScores s;
  s.recall.assign(k, 0.0);
  s.precision.assign(k, 0.0);
  s.f1.assign(k, 0.0);
  s.recall_undefined.assign(k, false);
  s.precision_undefined.assign(k, false);
  for (std::size_t c = 0; c < k; ++c) {
    const double hit = static_cast<double>(cm.counts[c][c]);
    const long row = cm.row_sum(c), col = cm.col_sum(c);
    if (row == 0)
      s.recall_undefined[c] = true;
    else
      s.recall[c] = hit / static_cast<double>(row);
    if (col == 0)
      s.precision_undefined[c] = true;
    else
      s.precision[c] = hit / static_cast<double>(col);
    const double denom = s.recall[c] + s.precision[c];
    s.f1[c] = denom > 0.0 ? 2.0 * s.recall[c] * s.precision[c] / denom : 0.0;
  }
  const double kk = static_cast<double>(k);
  s.macro_recall = std::accumulate(s.recall.begin(), s.recall.end(), 0.0) / kk;
  s.macro_precision = std::accumulate(s.precision.begin(), s.precision.end(), 0.0) / kk;
  s.macro_f1 = std::accumulate(s.f1.begin(), s.f1.end(), 0.0) / kk;
  return s;
}

RocCurve roc_auc(std::span<const double> scores, std::span<const int> positive) {
  if (scores.size() != positive.size()) throw ShapeError("roc: score and truth lengths differ");
  const auto n = scores.size();
  long pos = 0;
  for (int p : positive) pos += p ? 1 : 0;
  const long neg = static_cast<long>(n) - pos;
  if (pos == 0 || neg == 0) throw DomainError("roc: truth must contain both positives and negatives");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.points.push_back({0.0, 0.0});
  long tp = 0, fp = 0;
  double area = 0.0;
  for (std::size_t i = 0; i < n;) {
    // all frames sharing one threshold move together
    std::size_t j = i;
    long dtp = 0, dfp = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (positive[order[j]])
        ++dtp;
      else
        ++dfp;
      ++j;
    }
    // trapezoid in count units: fp step times mean tp height
    area += static_cast<double>(dfp) * (static_cast<double>(tp) + 0.5 * static_cast<double>(dtp));
    tp += dtp;
    fp += dfp;
    roc.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                          static_cast<double>(tp) / static_cast<double>(pos)});
    i = j;
  }
  roc.auc = area / (static_cast<double>(pos) * static_cast<double>(neg));
  return roc;
}

double pcc(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw DomainError("pcc needs two series of equal length >= 2");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) throw DomainError("pcc is undefined for a constant series");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<ConditionSimilarity> hrf_similarity(std::span<const int> pred, std::span<const int> truth,
                                                const TaskDesign& design, const std::vector<double>& hrf) {
  if (pred.size() != design.frames || truth.size() != design.frames)
    throw ShapeError("hrf_similarity: label sequences must have the design's " + std::to_string(design.frames) +
                     " frames");
  std::vector<ConditionSimilarity> out;
  for (std::size_t c = 1; c < design.conditions.size(); ++c) {
    const int cond = static_cast<int>(c);
    std::vector<double> p(design.frames), t(design.frames);
    bool any = false;
    for (std::size_t i = 0; i < design.frames; ++i) {
      p[i] = pred[i] == cond ? 1.0 : 0.0;
      t[i] = truth[i] == cond ? 1.0 : 0.0;
      any = any || p[i] > 0.0 || t[i] > 0.0;
    }
    ConditionSimilarity s{cond, std::nullopt};
    if (any) {
      const auto pc = convolve_causal(p, hrf);
      const auto tc = convolve_causal(t, hrf);
      try {
        s.pcc = pcc(pc, tc);
      } catch (const DomainError&) {
        // one side never shows the condition: no linear association
        s.pcc = 0.0;
      }
    }
    out.push_back(s);
  }
  return out;
}

std::vector<double> segment_accuracy(std::span<const int> pred, std::span<const int> truth, std::size_t n_segments) {
  if (pred.size() != truth.size()) throw ShapeError("segment_accuracy: prediction and truth lengths differ");
  if (n_segments < 1 || n_segments > pred.size())
    throw DomainError("segment_accuracy: need 1 <= segments <= length");
  const auto base = pred.size() / n_segments;
  std::vector<double> acc;
  for (std::size_t s = 0; s < n_segments; ++s) {
    const auto lo = s * base;
    const auto hi = s + 1 == n_segments ? pred.size() : lo + base;
    std::size_t hits = 0;
    for (auto i = lo; i < hi; ++i) hits += pred[i] == truth[i] ? 1 : 0;
    acc.push_back(static_cast<double>(hits) / static_cast<double>(hi - lo));
  }
  return acc;
}

}  // namespace voxdec
