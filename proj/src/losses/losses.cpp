#include "pshr/losses.hpp"

#include <map>
#include <string>

#include "pshr/ops.hpp"

namespace pshr::loss {

namespace {

Tensor maybe_mean(const Tensor& total, std::size_t batch, bool mean_normalize) {
  return mean_normalize ? scale(total, 1.0 / static_cast<double>(batch)) : total;
}

}  // namespace

void LossWeights::validate() const {
  if (!(margin >= 0.0)) throw ContractError("margin must be non-negative");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ContractError("smoothing must lie in [0, 1)");
  for (double w : {ce, bh, sr, ps})
    if (!(w >= 0.0)) throw ContractError("loss weights must be non-negative");
  if (ps_combination.empty()) throw ContractError("PS combination must be nonempty");
  for (std::size_t i : ps_combination)
    if (i >= reid::kBundleElements) throw ContractError("PS combination index out of range: " + std::to_string(i));
}

BatchLayout batch_layout(const std::vector<int>& labels) {
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  if (counts.size() < 2) throw ContractError("batch-hard triplet needs at least 2 identities");
  const std::size_t k = counts.begin()->second;
  for (const auto& [label, c] : counts)
    if (c != k) throw ContractError("batch is not P x K: identity " + std::to_string(label) + " has " +
                                    std::to_string(c) + " samples, expected " + std::to_string(k));
  if (k < 2) throw ContractError("batch-hard triplet needs at least 2 instances per identity");
  return {counts.size(), k};
}

Tensor triplet_bh(const std::vector<Tensor>& sequences, const std::vector<int>& labels, double margin,
                  bool mean_normalize) {
  batch_layout(labels);
  const std::size_t n = labels.size();
  std::vector<Tensor> hinges;
  for (const auto& seq : sequences) {
    if (seq.rank() != 2 || seq.dim(0) != n) {
      throw ShapeError("triplet sequence must be [" + std::to_string(n) + ", D], got " + to_string(seq.shape()));
    }
    const Tensor dist = pairwise_distance(seq);
    const auto d = dist.data();
    std::vector<std::size_t> pos(n), neg(n);
    for (std::size_t a = 0; a < n; ++a) {
      std::size_t best_pos = a * n + a, best_neg = 0;
      bool have_neg = false;
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t idx = a * n + j;
        if (labels[j] == labels[a]) {
          if (d[idx] > d[best_pos]) best_pos = idx;
        } else if (!have_neg || d[idx] < d[best_neg]) {
          best_neg = idx;
          have_neg = true;
        }
      }
      pos[a] = best_pos;
      neg[a] = best_neg;
    }
    hinges.push_back(relu(add_scalar(sub(gather(dist, pos), gather(dist, neg)), margin)));
  }
  if (hinges.empty()) throw ContractError("triplet loss needs at least one sequence");
  return maybe_mean(sum(concat(hinges, 0)), n, mean_normalize);
}

Tensor triplet_bh(const reid::SequenceBundle& bundle, const std::vector<int>& labels, double margin,
                  bool mean_normalize) {
  return triplet_bh(std::vector<Tensor>(bundle.seq.begin(), bundle.seq.end()), labels, margin, mean_normalize);
}

std::vector<double> smoothed_targets(int label, std::size_t classes, double epsilon) {
  if (label < 1 || static_cast<std::size_t>(label) > classes) {
    throw ContractError("label " + std::to_string(label) + " outside 1.." + std::to_string(classes));
  }
  const double m = static_cast<double>(classes);
  std::vector<double> q(classes, epsilon / m);
  q[static_cast<std::size_t>(label - 1)] = 1.0 - (m - 1.0) * epsilon / m;
  return q;
}

Tensor ce_label_smooth(const Tensor& logits, const std::vector<int>& labels, double epsilon, bool mean_normalize) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("logits must be [batch, M] with one label per row, got " + to_string(logits.shape()) + " for " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t m = logits.dim(1);
  std::vector<double> q;
  q.reserve(logits.numel());
  for (int l : labels) {
    const auto row = smoothed_targets(l, m, epsilon);
    q.insert(q.end(), row.begin(), row.end());
  }
  const Tensor targets = Tensor::from(logits.shape(), std::move(q));
  return maybe_mean(scale(sum(mul(targets, log_softmax(logits))), -1.0), labels.size(), mean_normalize);
}

Tensor id_loss(const reid::SequenceBundle& bundle, const std::vector<int>& labels, const LossWeights& w) {
  const Tensor ce = ce_label_smooth(bundle.logits, labels, w.smoothing, w.mean_normalize);
  const Tensor bh = triplet_bh(bundle, labels, w.margin, w.mean_normalize);
  return add(scale(ce, w.ce), scale(bh, w.bh));
}

Tensor ps_loss(const reid::SequenceBundle& hr, const reid::SequenceBundle& lr,
               const std::vector<std::size_t>& combination, bool mean_normalize, bool element_mean) {
  if (combination.empty()) throw ContractError("PS combination must be nonempty");
  Tensor total;
  for (std::size_t i : combination) {
    const Tensor& a = hr.element(i);
    const Tensor& b = lr.element(i);
    if (a.shape() != b.shape()) {
      throw ContractError("PS element " + std::to_string(i) + " dimensions differ: " + to_string(a.shape()) + " vs " +
                          to_string(b.shape()));
    }
    Tensor s = sum(abs(sub(a, b)));
    if (element_mean) s = scale(s, 1.0 / static_cast<double>(a.numel() / a.dim(0)));
    total = total.defined() ? add(total, s) : s;
  }
  return maybe_mean(total, hr.batch(), mean_normalize);
}

Tensor total_loss(const Tensor& id, const Tensor& sr, const Tensor& ps, const LossWeights& w) {
  return add(add(id, scale(sr, w.sr)), scale(ps, w.ps));
}

}  // namespace pshr::loss
