#pragma once

#include <cstddef>
#include <vector>

#include "pshr/hrnet_reid.hpp"
#include "pshr/tensor.hpp"

namespace pshr::loss {

struct LossWeights {
  double margin = 0.1;
  double smoothing = 0.1;
  double ce = 1.15;
  double bh = 0.2;
  double sr = 0.5;
  double ps = 0.5;
  /// Indices into the ordered set {Seq(1),...,Seq(5), l_c} (0-based).
  std::vector<std::size_t> ps_combination{0, 3, 4, 5};
  /// Divide the batch sums by the batch size.
  bool mean_normalize = false;
  /// Average each PS element's L1 over its width instead of summing it.
  bool ps_element_mean = false;

  void validate() const;
};

struct BatchLayout {
  std::size_t identities = 0;  // P
  std::size_t instances = 0;   // K
};

/// Checks that `labels` hold exactly P identities with K samples each.
BatchLayout batch_layout(const std::vector<int>& labels);

/// Batch-hard triplet loss over a list of [N, D_t] sequence tensors, summed
/// over anchors and sequences.
Tensor triplet_bh(const std::vector<Tensor>& sequences, const std::vector<int>& labels, double margin,
                  bool mean_normalize = false);
/// Same, over Seq(1..5) of a bundle.
Tensor triplet_bh(const reid::SequenceBundle& bundle, const std::vector<int>& labels, double margin,
                  bool mean_normalize = false);

/// Smoothed target distribution for a 1-based ground-truth label.
std::vector<double> smoothed_targets(int label, std::size_t classes, double epsilon);

/// Label-smoothed cross-entropy summed over the batch; labels in 1..M.
Tensor ce_label_smooth(const Tensor& logits, const std::vector<int>& labels, double epsilon,
                       bool mean_normalize = false);

Tensor id_loss(const reid::SequenceBundle& bundle, const std::vector<int>& labels, const LossWeights& weights);

/// Sum over elements of `combination` of the L1 distance between the two
/// bundles' versions, summed over the batch.
Tensor ps_loss(const reid::SequenceBundle& hr, const reid::SequenceBundle& lr,
               const std::vector<std::size_t>& combination, bool mean_normalize = false,
               bool element_mean = false);

Tensor total_loss(const Tensor& id, const Tensor& sr, const Tensor& ps, const LossWeights& weights);

}  // namespace pshr::loss
