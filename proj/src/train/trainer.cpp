#include "pshr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "pshr/ops.hpp"

namespace pshr::train {

void SgdConfig::validate() const {
  if (!(lr > 0.0)) throw ContractError("learning rate must be positive");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ContractError("lr decay factor must lie in (0, 1]");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ContractError("weight decay must be non-negative");
  if (decay_every == 0) throw ContractError("lr decay interval must be positive");
}

double SgdConfig::lr_at(std::size_t epoch) const {
  return lr * std::pow(decay_factor, static_cast<double>(epoch / decay_every));
}

Sgd::Sgd(ParameterList params, const SgdConfig& config) : params_(std::move(params)), config_(config), lr_(config.lr) {
  config.validate();
  for (const auto& p : params_) velocity_.emplace_back(p.tensor.numel(), 0.0);
}

void Sgd::zero_grad() { zero_grads(params_); }

void Sgd::step() {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& t = params_[k].tensor;
    if (!t.has_grad()) throw ContractError("parameter '" + params_[k].name + "' has no gradient");
    auto w = t.mutable_data();
    const auto g = t.grad();
    auto& v = velocity_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = config_.momentum * v[i] + g[i] + config_.weight_decay * w[i];
      w[i] -= lr_ * v[i];
    }
  }
}

void TrainRunConfig::validate() const {
  if (phase1_epochs == 0 || phase2_epochs == 0) throw ContractError("epochs per phase must be at least 1");
  if (identities < 2 || instances < 2) throw ContractError("P and K must both be at least 2");
  losses.validate();
  reid_optimizer.validate();
  sr_optimizer.validate();
}

std::string loss_curve_csv(const std::vector<EpochLosses>& curve) {
  std::string out = "epoch,phase,L_ID,L_SR,L_PS,L_TOTAL\n";
  char line[256];
  for (const auto& e : curve) {
    std::snprintf(line, sizeof line, "%zu,%d,%.9g,%.9g,%.9g,%.9g\n", e.epoch, e.phase, e.id, e.sr, e.ps, e.total);
    out += line;
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

LabelMap::LabelMap(const std::vector<data::SampleRecord>& records) {
  for (const auto& r : records) ids_.push_back(r.id);
  std::sort(ids_.begin(), ids_.end());
  ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
}

int LabelMap::operator()(int id) const {
  auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id) throw ContractError("identity " + std::to_string(id) + " not in the training set");
  return static_cast<int>(it - ids_.begin()) + 1;
}

namespace {

enum SeedStream : std::uint64_t { kHrInit = 1, kPhase1Sampler = 2, kSrInit = 3, kPhase2Sampler = 4 };

data::PkSampler make_sampler(const TrainRunConfig& run, const std::vector<data::SampleRecord>& records,
                             const ModelConfig& model, std::uint64_t stream) {
  data::SamplerOptions opt;
  opt.identities = run.identities;
  opt.instances = run.instances;
  opt.augment = run.augment;
  opt.upscale = model.sr.upscale;
  return data::PkSampler(records, opt, derive_seed(run.seed, stream));
}

LabelMap checked_labels(const ModelConfig& model, const std::vector<data::SampleRecord>& records) {
  LabelMap labels(records);
  if (labels.classes() != model.head.num_classes) {
    throw ContractError("head has " + std::to_string(model.head.num_classes) + " classes but the training set has " +
                        std::to_string(labels.classes()) + " identities");
  }
  return labels;
}

std::vector<int> class_labels(const data::Batch& batch, const LabelMap& map) {
  std::vector<int> out;
  for (int id : batch.labels) out.push_back(map(id));
  return out;
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw std::runtime_error(std::string("non-finite ") + what + " during training");
}

}  // namespace

Phase1Result train_phase1(const ModelConfig& model, const TrainRunConfig& run,
                          const std::vector<data::SampleRecord>& hr_records, const CheckpointSink& sink,
                          const EpochObserver& observer) {
  run.validate();
  const LabelMap labels = checked_labels(model, hr_records);
  Rng init(derive_seed(run.seed, kHrInit));
  Phase1Result result;
  result.hr_net = std::make_unique<reid::ReIdNet>(model.backbone, model.head, init);
  auto sampler = make_sampler(run, hr_records, model, kPhase1Sampler);
  Sgd opt(result.hr_net->parameters(), run.reid_optimizer);

  for (std::size_t epoch = 0; epoch < run.phase1_epochs; ++epoch) {
    opt.set_epoch(epoch);
    EpochLosses stats{epoch + 1, 1};
    const auto batches = sampler.next_epoch();
    for (const auto& batch : batches) {
      opt.zero_grad();
      const Tensor id = loss::id_loss(result.hr_net->forward(batch.hr), class_labels(batch, labels), run.losses);
      id.backward();
      opt.step();
      require_finite(id.item(), "L_ID");
      stats.id += id.item();
    }
    stats.id /= static_cast<double>(batches.size());
    stats.total = stats.id;
    result.curve.push_back(stats);
    if (observer) observer(stats);
    if (sink && run.checkpoint_every && (epoch + 1) % run.checkpoint_every == 0 && epoch + 1 < run.phase1_epochs)
      sink(epoch + 1, result.hr_net->parameters());
  }
  if (sink) sink(run.phase1_epochs, result.hr_net->parameters());
  return result;
}

ParameterList Phase2Models::checkpoint_parameters(bool include_teacher) const {
  ParameterList out;
  for (auto& p : restorer->parameters()) out.push_back({"sr." + p.name, p.tensor});
  for (auto& p : lr_net->parameters()) out.push_back({"reid." + p.name, p.tensor});
  if (include_teacher)
    for (auto& p : hr_net->parameters()) out.push_back({"teacher." + p.name, p.tensor});
  return out;
}

Phase2Models init_phase2(const ModelConfig& model, const TrainRunConfig& run, const ParameterList& phase1_weights) {
  Phase2Models m;
  // Fresh nets only provide structure; their weights are overwritten below.
  Rng scratch(0);
  m.hr_net = std::make_unique<reid::ReIdNet>(model.backbone, model.head, scratch);
  m.lr_net = std::make_unique<reid::ReIdNet>(model.backbone, model.head, scratch);
  auto hr_params = m.hr_net->parameters();
  auto lr_params = m.lr_net->parameters();
  copy_values(phase1_weights, hr_params);
  copy_values(phase1_weights, lr_params);
  Rng init(derive_seed(run.seed, kSrInit));
  m.restorer = std::make_unique<sr::VdsrCaNet>(model.sr, init);
  if (run.freeze_hr) set_trainable(hr_params, false);
  return m;
}

StepLosses phase2_step(Phase2Models& m, const TrainRunConfig& run, const data::Batch& batch, const LabelMap& labels,
                       std::vector<Sgd*> optimizers) {
  const auto& w = run.losses;
  const auto ids = class_labels(batch, labels);
  for (Sgd* o : optimizers) o->zero_grad();

  const Tensor restored = m.restorer->forward(batch.lr_up);
  Tensor l_sr = sr::sr_loss(restored, batch.hr);
  if (w.mean_normalize) l_sr = scale(l_sr, 1.0 / static_cast<double>(batch.labels.size()));
  const reid::SequenceBundle lr_bundle = m.lr_net->forward(restored);

  reid::SequenceBundle hr_bundle;
  if (run.freeze_hr) {
    NoGradGuard no_grad;
    hr_bundle = m.hr_net->forward(batch.hr);
  } else {
    hr_bundle = m.hr_net->forward(batch.hr);
  }

  Tensor l_id = run.literal_route ? loss::id_loss(m.hr_net->forward(restored), ids, w) : loss::id_loss(lr_bundle, ids, w);
  if (!run.freeze_hr) l_id = add(l_id, loss::id_loss(hr_bundle, ids, w));
  const Tensor l_ps = loss::ps_loss(hr_bundle, lr_bundle, w.ps_combination, w.mean_normalize, w.ps_element_mean);
  const Tensor total = loss::total_loss(l_id, l_sr, l_ps, w);
  total.backward();
  for (Sgd* o : optimizers) o->step();

  StepLosses out{l_id.item(), l_sr.item(), l_ps.item(), total.item()};
  require_finite(out.total, "L_TOTAL");
  return out;
}

Phase2Result train_phase2(const ModelConfig& model, const TrainRunConfig& run, const ParameterList& phase1_weights,
                          const std::vector<data::SampleRecord>& hr_records, const CheckpointSink& sink,
                          const EpochObserver& observer) {
  run.validate();
  const LabelMap labels = checked_labels(model, hr_records);
  Phase2Result result;
  result.models = init_phase2(model, run, phase1_weights);
  auto& m = result.models;
  auto sampler = make_sampler(run, hr_records, model, kPhase2Sampler);

  Sgd sr_opt(m.restorer->parameters(), run.sr_optimizer);
  Sgd lr_opt(m.lr_net->parameters(), run.reid_optimizer);
  std::unique_ptr<Sgd> hr_opt;
  std::vector<Sgd*> optimizers{&sr_opt, &lr_opt};
  if (!run.freeze_hr) {
    hr_opt = std::make_unique<Sgd>(m.hr_net->parameters(), run.reid_optimizer);
    optimizers.push_back(hr_opt.get());
  }

  for (std::size_t epoch = 0; epoch < run.phase2_epochs; ++epoch) {
    for (Sgd* o : optimizers) o->set_epoch(epoch);
    EpochLosses stats{epoch + 1, 2};
    const auto batches = sampler.next_epoch();
    for (const auto& batch : batches) {
      const auto s = phase2_step(m, run, batch, labels, optimizers);
      stats.id += s.id;
      stats.sr += s.sr;
      stats.ps += s.ps;
      stats.total += s.total;
    }
    const double n = static_cast<double>(batches.size());
    stats.id /= n;
    stats.sr /= n;
    stats.ps /= n;
    stats.total /= n;
    result.curve.push_back(stats);
    if (observer) observer(stats);
    if (sink && run.checkpoint_every && (epoch + 1) % run.checkpoint_every == 0 && epoch + 1 < run.phase2_epochs)
      sink(epoch + 1, m.checkpoint_parameters(!run.freeze_hr));
  }
  if (sink) sink(run.phase2_epochs, m.checkpoint_parameters(!run.freeze_hr));
  return result;
}

}  // namespace pshr::train
