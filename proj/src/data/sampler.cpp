#include <algorithm>
#include <map>
#include <set>

#include "pshr/data.hpp"

namespace pshr::data {

PkSampler::PkSampler(std::vector<SampleRecord> records, const SamplerOptions& options, std::uint64_t seed)
    : records_(std::move(records)), options_(options), rng_(seed) {
  if (options.identities == 0 || options.instances == 0) throw ContractError("P and K must be positive");
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.is_lr()) throw ContractError("sampler expects HR records, got an LR record for id " + std::to_string(r.id));
    if (r.image.empty()) throw ContractError("sampler record " + std::to_string(i) + " has no pixels");
    if (r.image.height != records_[0].image.height || r.image.width != records_[0].image.width) {
      throw ShapeError("sampler records must share one image size");
    }
    groups[r.id].push_back(i);
  }
  if (groups.size() < options.identities) {
    throw ContractError("need at least P=" + std::to_string(options.identities) + " identities, have " +
                        std::to_string(groups.size()));
  }
  by_id_.assign(groups.begin(), groups.end());
}

std::size_t PkSampler::batches_per_epoch() const {
  return (by_id_.size() + options_.identities - 1) / options_.identities;
}

std::vector<Batch> PkSampler::next_epoch() {
  std::vector<int> order(by_id_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::shuffle(order.begin(), order.end(), rng_);
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += options_.identities) {
    std::vector<int> group(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(start + options_.identities, order.size())));
    // A short final group is topped up with other identities.
    while (group.size() < options_.identities) {
      const int pick = static_cast<int>(rng_() % by_id_.size());
      if (std::find(group.begin(), group.end(), pick) == group.end()) group.push_back(pick);
    }
    out.push_back(build(group));
  }
  return out;
}

Batch PkSampler::build(const std::vector<int>& ids) {
  const std::size_t K = options_.instances;
  const std::size_t H = records_[0].image.height, W = records_[0].image.width;
  std::uniform_int_distribution<std::size_t> rate(2, 4);
  std::vector<Image> hr, lr;
  Batch batch;
  for (int slot : ids) {
    const auto& [label, members] = by_id_[static_cast<std::size_t>(slot)];
    std::vector<std::size_t> chosen;
    if (members.size() >= K) {
      chosen = members;
      std::shuffle(chosen.begin(), chosen.end(), rng_);
      chosen.resize(K);
    } else {
      std::uniform_int_distribution<std::size_t> any(0, members.size() - 1);
      for (std::size_t k = 0; k < K; ++k) chosen.push_back(members[any(rng_)]);
    }
    for (std::size_t idx : chosen) {
      const Image& full = records_[idx].image;
      const std::size_t r = rate(rng_);
      Image up = upscale(decimate(full, r), H, W, options_.upscale);
      if (options_.augment) {
        const auto params = draw_augment(H, W, rng_);
        hr.push_back(apply_augment(full, params));
        lr.push_back(apply_augment(up, params));
      } else {
        hr.push_back(full);
        lr.push_back(std::move(up));
      }
      batch.labels.push_back(label);
      batch.rates.push_back(r);
      batch.records.push_back(idx);
    }
  }
  std::vector<const Image*> hp, lp;
  for (std::size_t i = 0; i < hr.size(); ++i) {
    hp.push_back(&hr[i]);
    lp.push_back(&lr[i]);
  }
  batch.hr = to_batch(hp);
  batch.lr_up = to_batch(lp);
  batch.identities = ids.size();
  batch.instances = K;

  std::map<int, std::size_t> counts;
  for (int l : batch.labels) ++counts[l];
  if (counts.size() != ids.size()) throw ContractError("batch does not hold P distinct identities");
  for (const auto& [label, c] : counts)
    if (c != K) throw ContractError("batch identity " + std::to_string(label) + " does not hold K samples");
  return batch;
}

}  // namespace pshr::data
