#include "convemo/metrics.hpp"

#include "convemo/errors.hpp"

namespace convemo::metrics {

Confusion::Confusion(int num_classes_) : num_classes(num_classes_) {
  if (num_classes <= 0)
    throw ValidationError("confusion matrix needs at least one class");
  counts.assign(static_cast<size_t>(num_classes),
                std::vector<int64_t>(static_cast<size_t>(num_classes), 0));
}

void Confusion::add(int label, int prediction) {
  if (label < 0 || label >= num_classes)
    throw ValidationError("label out of range for confusion matrix");
  if (prediction < 0 || prediction >= num_classes)
    throw ValidationError("prediction out of range for confusion matrix");
  ++counts[static_cast<size_t>(label)][static_cast<size_t>(prediction)];
}

int64_t Confusion::total() const {
  int64_t sum = 0;
  for (const auto& row : counts)
    for (int64_t c : row) sum += c;
  return sum;
}

int64_t Confusion::support(int label) const {
  int64_t sum = 0;
  for (int64_t c : counts[static_cast<size_t>(label)]) sum += c;
  return sum;
}

int64_t Confusion::predicted(int prediction) const {
  int64_t sum = 0;
  for (const auto& row : counts) sum += row[static_cast<size_t>(prediction)];
  return sum;
}

ClassScores class_scores(const Confusion& confusion, int label) {
  if (label < 0 || label >= confusion.num_classes)
    throw ValidationError("label out of range for class scores");
  ClassScores s;
  const int64_t tp =
      confusion.counts[static_cast<size_t>(label)][static_cast<size_t>(label)];
  const int64_t pred = confusion.predicted(label);
  const int64_t sup = confusion.support(label);
  s.support = sup;
  s.precision = pred > 0 ? static_cast<double>(tp) / static_cast<double>(pred)
                         : 0.0;
  s.recall = sup > 0 ? static_cast<double>(tp) / static_cast<double>(sup) : 0.0;
  const double pr = s.precision + s.recall;
  s.f1 = pr > 0.0 ? 2.0 * s.precision * s.recall / pr : 0.0;
  return s;
}

double accuracy(const Confusion& confusion) {
  const int64_t n = confusion.total();
  if (n == 0) return 0.0;
  int64_t correct = 0;
  for (int c = 0; c < confusion.num_classes; ++c)
    correct += confusion.counts[static_cast<size_t>(c)][static_cast<size_t>(c)];
  return static_cast<double>(correct) / static_cast<double>(n);
}

double weighted_f1(const Confusion& confusion) {
  const int64_t n = confusion.total();
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (int c = 0; c < confusion.num_classes; ++c) {
    const ClassScores s = class_scores(confusion, c);
    sum += static_cast<double>(s.support) / static_cast<double>(n) * s.f1;
  }
  return sum;
}

Confusion confusion_from_pairs(const std::vector<int>& labels,
                               const std::vector<int>& predictions,
                               int num_classes) {
  if (labels.size() != predictions.size())
    throw ValidationError("labels and predictions differ in length");
  Confusion c(num_classes);
  for (size_t i = 0; i < labels.size(); ++i) c.add(labels[i], predictions[i]);
  return c;
}

}  // namespace convemo::metrics
