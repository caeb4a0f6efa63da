#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "convemo/errors.hpp"
#include "convemo/metrics.hpp"

using namespace convemo;
using namespace convemo::metrics;

namespace {

// Independent per-sample counting oracle: no confusion matrix, just direct
// tallies per class.
double oracle_weighted_f1(const std::vector<int>& labels,
                          const std::vector<int>& preds, int classes) {
  const double n = static_cast<double>(labels.size());
  double result = 0.0;
  for (int c = 0; c < classes; ++c) {
    double tp = 0, fp = 0, fn = 0, support = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
      const bool is_c = labels[i] == c;
      const bool pred_c = preds[i] == c;
      if (is_c) ++support;
      if (is_c && pred_c) ++tp;
      if (!is_c && pred_c) ++fp;
      if (is_c && !pred_c) ++fn;
    }
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double f1 = precision + recall > 0
                          ? 2 * precision * recall / (precision + recall)
                          : 0.0;
    result += (support / n) * f1;
  }
  return result;
}

}  // namespace

TEST_CASE("confusion counts land in the right cells") {
  Confusion c(3);
  c.add(0, 0);
  c.add(0, 1);
  c.add(2, 1);
  CHECK(c.counts[0][0] == 1);
  CHECK(c.counts[0][1] == 1);
  CHECK(c.counts[2][1] == 1);
  CHECK(c.total() == 3);
  CHECK(c.support(0) == 2);
  CHECK(c.predicted(1) == 2);
  CHECK_THROWS_AS(c.add(3, 0), ValidationError);
  CHECK_THROWS_AS(c.add(0, -1), ValidationError);
}

TEST_CASE("perfect predictions give weighted F1 of 1 and diagonal confusion") {
  std::vector<int> labels = {0, 1, 2, 3, 0, 1, 2, 3};
  const Confusion c = confusion_from_pairs(labels, labels, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(c.counts[(size_t)i][(size_t)j] == (i == j ? 2 : 0));
  CHECK(weighted_f1(c) == doctest::Approx(1.0));
  CHECK(accuracy(c) == doctest::Approx(1.0));
}

TEST_CASE("hand-counted example: everything predicted as class 0") {
  // labels [0,0,1,1], preds [0,0,0,0]: class 0 has P=0.5, R=1, F1=2/3;
  // class 1 has F1=0; equal support, so weighted F1 = 1/3.
  const Confusion c = confusion_from_pairs({0, 0, 1, 1}, {0, 0, 0, 0}, 2);
  CHECK(class_scores(c, 0).f1 == doctest::Approx(2.0 / 3.0));
  CHECK(class_scores(c, 1).f1 == doctest::Approx(0.0));
  CHECK(weighted_f1(c) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("single-class predictions on balanced four classes") {
  std::vector<int> labels, preds;
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 25; ++i) {
      labels.push_back(c);
      preds.push_back(0);
    }
  const Confusion c = confusion_from_pairs(labels, preds, 4);
  CHECK(weighted_f1(c) ==
        doctest::Approx(oracle_weighted_f1(labels, preds, 4)));
  // Class 0: P=0.25, R=1 -> F1=0.4; others 0; weight 1/4 each.
  CHECK(weighted_f1(c) == doctest::Approx(0.1));
}

TEST_CASE("empty support class contributes zero weight") {
  // No sample is labeled 2; its F1 (whatever precision says) gets weight 0.
  const Confusion c = confusion_from_pairs({0, 1, 0}, {0, 1, 2}, 3);
  const double expected = oracle_weighted_f1({0, 1, 0}, {0, 1, 2}, 3);
  CHECK(weighted_f1(c) == doctest::Approx(expected));
  CHECK(class_scores(c, 2).support == 0);
  CHECK(class_scores(c, 2).recall == 0.0);
}

TEST_CASE("metrics match the counting oracle on random vectors exactly") {
  std::mt19937_64 gen(99);
  for (int rep = 0; rep < 1000; ++rep) {
    const int classes = 2 + static_cast<int>(gen() % 5);
    const size_t n = 1 + gen() % 60;
    std::vector<int> labels(n), preds(n);
    for (auto& v : labels) v = static_cast<int>(gen() % classes);
    for (auto& v : preds) v = static_cast<int>(gen() % classes);
    const Confusion c = confusion_from_pairs(labels, preds, classes);
    const double expect = oracle_weighted_f1(labels, preds, classes);
    CHECK(weighted_f1(c) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(c.total() == static_cast<int64_t>(n));
  }
}

TEST_CASE("permuting pairs leaves metrics unchanged") {
  std::mt19937_64 gen(5);
  std::vector<int> labels(40), preds(40);
  for (auto& v : labels) v = static_cast<int>(gen() % 4);
  for (auto& v : preds) v = static_cast<int>(gen() % 4);
  const double before = weighted_f1(confusion_from_pairs(labels, preds, 4));

  std::vector<size_t> order(40);
  for (size_t i = 0; i < 40; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), gen);
  std::vector<int> labels2, preds2;
  for (size_t i : order) {
    labels2.push_back(labels[i]);
    preds2.push_back(preds[i]);
  }
  CHECK(weighted_f1(confusion_from_pairs(labels2, preds2, 4)) ==
        doctest::Approx(before).epsilon(1e-15));
}

TEST_CASE("weighted F1 stays within [0,1]") {
  std::mt19937_64 gen(17);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<int> labels(30), preds(30);
    for (auto& v : labels) v = static_cast<int>(gen() % 4);
    for (auto& v : preds) v = static_cast<int>(gen() % 4);
    const double f1 = weighted_f1(confusion_from_pairs(labels, preds, 4));
    CHECK(f1 >= 0.0);
    CHECK(f1 <= 1.0);
  }
}

TEST_CASE("length mismatch is rejected") {
  CHECK_THROWS_AS(confusion_from_pairs({0, 1}, {0}, 2), ValidationError);
}
