#include "convemo/losses.hpp"

#include <algorithm>
#include <cmath>

#include "convemo/errors.hpp"

namespace convemo::losses {

std::string negative_policy_name(NegativePolicy policy) {
  switch (policy) {
    case NegativePolicy::DiffLabel: return "diff_label";
    case NegativePolicy::Any: return "any";
  }
  throw ValidationError("unknown negative policy");
}

NegativePolicy negative_policy_from_name(const std::string& name) {
  if (name == "diff_label") return NegativePolicy::DiffLabel;
  if (name == "any") return NegativePolicy::Any;
  throw ValidationError("unknown negative policy '" + name +
                        "' (expected diff_label or any)");
}

void DistillConfig::validate() const {
  if (!(margin >= 0.0)) throw ValidationError("distill.margin must be >= 0");
  if (!(p >= 1.0)) throw ValidationError("distill.p must be >= 1");
  if (!(alpha1 >= 0.0)) throw ValidationError("distill.alpha1 must be >= 0");
  if (!(alpha2 >= 0.0)) throw ValidationError("distill.alpha2 must be >= 0");
}

double cross_entropy(const Eigen::MatrixXd& logits,
                     const std::vector<int>& labels) {
  const Eigen::Index n = logits.rows();
  if (static_cast<size_t>(n) != labels.size())
    throw ValidationError("cross_entropy: one label per logits row required");
  if (n == 0) throw ValidationError("cross_entropy: empty batch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = labels[static_cast<size_t>(i)];
    if (label < 0 || label >= logits.cols())
      throw ValidationError("cross_entropy: label out of range");
    const double mx = logits.row(i).maxCoeff();
    const double lse =
        mx + std::log((logits.row(i).array() - mx).exp().sum());
    total += lse - logits(i, label);
  }
  return total / static_cast<double>(n);
}

namespace {

double p_norm(const Eigen::VectorXd& v, double p) {
  if (p == 2.0) return v.norm();
  if (p == 1.0) return v.lpNorm<1>();
  return std::pow(v.array().abs().pow(p).sum(), 1.0 / p);
}

}  // namespace

double triplet_loss(const Eigen::VectorXd& x, const Eigen::VectorXd& pos,
                    const Eigen::VectorXd& neg, double margin, double p) {
  if (x.size() != pos.size() || x.size() != neg.size())
    throw ValidationError("triplet_loss: embedding dimensions differ");
  if (!(margin >= 0.0)) throw ValidationError("triplet_loss: margin must be >= 0");
  if (!(p >= 1.0)) throw ValidationError("triplet_loss: p must be >= 1");
  const double d_pos = p_norm(x - pos, p);
  const double d_neg = p_norm(x - neg, p);
  return std::max(d_pos - d_neg + margin, 0.0);
}

std::size_t sample_negative(std::size_t anchor_index,
                            const std::vector<int>& batch_labels,
                            NegativePolicy policy, RandomStream& rng) {
  const std::size_t n = batch_labels.size();
  if (n < 2)
    throw ValidationError("sample_negative: batch must hold >= 2 utterances");
  if (anchor_index >= n)
    throw ValidationError("sample_negative: anchor index out of range");

  std::vector<std::size_t> candidates;
  candidates.reserve(n - 1);
  if (policy == NegativePolicy::DiffLabel) {
    const int anchor_label = batch_labels[anchor_index];
    for (std::size_t i = 0; i < n; ++i)
      if (i != anchor_index && batch_labels[i] != anchor_label)
        candidates.push_back(i);
  }
  if (candidates.empty()) {
    for (std::size_t i = 0; i < n; ++i)
      if (i != anchor_index) candidates.push_back(i);
  }
  return candidates[rng.uniform_index(candidates.size())];
}

double combined_loss(double ce, double triplet, const DistillConfig& config) {
  config.validate();
  if (!std::isfinite(ce) || !std::isfinite(triplet))
    throw NumericError("combined_loss: non-finite loss term");
  return config.alpha1 * triplet + config.alpha2 * ce;
}

}  // namespace convemo::losses
