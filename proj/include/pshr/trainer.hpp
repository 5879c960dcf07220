#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pshr/data.hpp"
#include "pshr/hrnet_reid.hpp"
#include "pshr/losses.hpp"
#include "pshr/parameters.hpp"
#include "pshr/vdsr_ca.hpp"

namespace pshr::train {

struct SgdConfig {
  double lr = 1e-2;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double decay_factor = 0.1;
  std::size_t decay_every = 30;  // epochs

  void validate() const;
  /// Learning rate for a 0-based epoch index.
  double lr_at(std::size_t epoch) const;
};

/// Momentum SGD; weight decay is added to the gradient.
class Sgd {
 public:
  Sgd(ParameterList params, const SgdConfig& config);

  void step();
  void zero_grad();
  void set_epoch(std::size_t epoch) { lr_ = config_.lr_at(epoch); }
  double lr() const { return lr_; }
  const ParameterList& parameters() const { return params_; }

 private:
  ParameterList params_;
  SgdConfig config_;
  double lr_;
  std::vector<std::vector<double>> velocity_;
};

struct ModelConfig {
  reid::BackboneConfig backbone;
  reid::HeadConfig head;
  sr::VdsrCaConfig sr;
};

struct TrainRunConfig {
  std::size_t phase1_epochs = 30;
  std::size_t phase2_epochs = 30;
  std::size_t identities = 4;  // P
  std::size_t instances = 6;   // K
  loss::LossWeights losses;
  SgdConfig reid_optimizer{.lr = 1e-2};
  SgdConfig sr_optimizer{.lr = 1e-3};
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 0;  // epochs; 0 keeps only the final one
  bool freeze_hr = true;
  bool literal_route = false;  // L_ID on HRNet-ReID-H(restored)
  bool augment = true;

  void validate() const;
};

struct EpochLosses {
  std::size_t epoch = 0;  // 1-based
  int phase = 1;
  double id = 0.0;
  double sr = 0.0;
  double ps = 0.0;
  double total = 0.0;
};

/// Loss-curve CSV: epoch,phase,L_ID,L_SR,L_PS,L_TOTAL
std::string loss_curve_csv(const std::vector<EpochLosses>& curve);

/// Deterministic sub-seed for one consumer of the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Maps identity ids to contiguous class labels 1..M.
class LabelMap {
 public:
  explicit LabelMap(const std::vector<data::SampleRecord>& records);
  int operator()(int id) const;
  std::size_t classes() const { return ids_.size(); }

 private:
  std::vector<int> ids_;
};

using CheckpointSink = std::function<void(std::size_t epoch, const ParameterList& params)>;
using EpochObserver = std::function<void(const EpochLosses&)>;

struct Phase1Result {
  std::unique_ptr<reid::ReIdNet> hr_net;
  std::vector<EpochLosses> curve;
};

Phase1Result train_phase1(const ModelConfig& model, const TrainRunConfig& run,
                          const std::vector<data::SampleRecord>& hr_records, const CheckpointSink& sink = {},
                          const EpochObserver& observer = {});

struct Phase2Models {
  std::unique_ptr<sr::VdsrCaNet> restorer;
  std::unique_ptr<reid::ReIdNet> lr_net;  // HRNet-ReID-L
  std::unique_ptr<reid::ReIdNet> hr_net;  // HRNet-ReID-H

  /// sr.*, reid.* and, when the teacher trains, teacher.*
  ParameterList checkpoint_parameters(bool include_teacher) const;
};

struct Phase2Result {
  Phase2Models models;
  std::vector<EpochLosses> curve;
};

struct StepLosses {
  double id = 0.0, sr = 0.0, ps = 0.0, total = 0.0;
};

/// Builds Phase-2 models: a fresh restorer and L and H both loaded from the
/// Phase-1 weights.
Phase2Models init_phase2(const ModelConfig& model, const TrainRunConfig& run, const ParameterList& phase1_weights);

/// One joint step on a batch; returns the component values.
StepLosses phase2_step(Phase2Models& models, const TrainRunConfig& run, const data::Batch& batch,
                       const LabelMap& labels, std::vector<Sgd*> optimizers);

Phase2Result train_phase2(const ModelConfig& model, const TrainRunConfig& run, const ParameterList& phase1_weights,
                          const std::vector<data::SampleRecord>& hr_records, const CheckpointSink& sink = {},
                          const EpochObserver& observer = {});

}  // namespace pshr::train
