#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "convemo/rng.hpp"

namespace convemo::losses {

// How the distillation negative is picked from the batch.
enum class NegativePolicy { DiffLabel, Any };

std::string negative_policy_name(NegativePolicy policy);
NegativePolicy negative_policy_from_name(const std::string& name);

struct DistillConfig {
  double margin = 1.0;   // hinge margin between positive and negative pairs
  double p = 2.0;        // order of the norm in the triplet terms
  double alpha1 = 1.0;   // weight on the triplet term
  double alpha2 = 1.0;   // weight on the cross-entropy term
  NegativePolicy negative_policy = NegativePolicy::DiffLabel;

  void validate() const;
};

// Mean over rows of -log softmax(row)[label], evaluated with log-sum-exp
// stabilization so large logits don't overflow.
double cross_entropy(const Eigen::MatrixXd& logits,
                     const std::vector<int>& labels);

// max(|x - pos|_p - |x - neg|_p + margin, 0) for one anchor/positive/negative
// triple of embeddings.
double triplet_loss(const Eigen::VectorXd& x, const Eigen::VectorXd& pos,
                    const Eigen::VectorXd& neg, double margin, double p);

// Picks the negative's index. DiffLabel: uniform over entries whose label
// differs from the anchor's, falling back to uniform over all non-anchor
// entries when every label matches. Any: uniform over all non-anchor entries.
// Consumes exactly one index draw from `rng`.
std::size_t sample_negative(std::size_t anchor_index,
                            const std::vector<int>& batch_labels,
                            NegativePolicy policy, RandomStream& rng);

// alpha1 * triplet + alpha2 * ce.
double combined_loss(double ce, double triplet, const DistillConfig& config);

}  // namespace convemo::losses
