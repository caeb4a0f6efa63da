#pragma once

#include <cstdint>
#include <vector>

namespace convemo::metrics {

// Row = true label, column = predicted label.
struct Confusion {
  int num_classes = 0;
  std::vector<std::vector<int64_t>> counts;

  explicit Confusion(int num_classes);
  void add(int label, int prediction);
  int64_t total() const;
  int64_t support(int label) const;      // row sum
  int64_t predicted(int prediction) const;  // column sum
};

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int64_t support = 0;
};

// Precision/recall/F1 treat 0/0 as 0: a class with no predictions has
// precision 0, a class with no support has recall 0, and F1 is 0 whenever
// precision + recall is 0.
ClassScores class_scores(const Confusion& confusion, int label);

double accuracy(const Confusion& confusion);

// Support-weighted mean of per-class F1.
double weighted_f1(const Confusion& confusion);

Confusion confusion_from_pairs(const std::vector<int>& labels,
                               const std::vector<int>& predictions,
                               int num_classes);

}  // namespace convemo::metrics
