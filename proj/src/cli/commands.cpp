#include "pshr/commands.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>

#include "pshr/checkpoint.hpp"

namespace pshr::cli {

namespace fs = std::filesystem;

namespace {

enum DataSeed : std::uint64_t { kToy = 100, kSplit = 101, kMlr = 102, kEvalInit = 103 };

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
}

std::vector<data::SampleRecord> load_records(const RunConfig& config, const fs::path& out) {
  const fs::path manifest = data_dir(config, out) / "manifest.csv";
  if (!fs::exists(manifest)) throw std::runtime_error("no manifest at " + manifest.string() + "; run synth first");
  return data::read_manifest(manifest);
}

void save(const fs::path& path, const ParameterList& params) {
  Checkpoint c;
  c.add(params);
  save_checkpoint(path, c);
}

ParameterList prefixed(const ParameterList& params, const std::string& prefix) {
  ParameterList out;
  for (const auto& p : params) out.push_back({prefix + p.name, p.tensor});
  return out;
}

void log_epoch(std::ostream* log, const train::EpochLosses& e) {
  if (!log) return;
  char line[160];
  std::snprintf(line, sizeof line, "phase %d epoch %3zu  L_ID %.5f  L_SR %.5f  L_PS %.5f  L_TOTAL %.5f\n", e.phase,
                e.epoch, e.id, e.sr, e.ps, e.total);
  *log << line << std::flush;
}

}  // namespace

fs::path data_dir(const RunConfig& config, const fs::path& out) {
  const fs::path root(config.data.root);
  return root.is_absolute() ? root : out / root;
}

std::vector<data::SampleRecord> synthesize(const RunConfig& config) {
  const auto& d = config.data;
  const std::uint64_t seed = config.train.seed;
  auto records = data::toy_dataset(d.identities, d.images_per_identity, d.geometry, train::derive_seed(seed, kToy));
  data::assign_single_shot_split(records, d.queries_per_identity, train::derive_seed(seed, kSplit));
  return data::synthesize_mlr(std::move(records), d.mlr, train::derive_seed(seed, kMlr));
}

SynthResult cmd_synth(const RunConfig& config, const fs::path& out) {
  config.validate();
  const fs::path dir = data_dir(config, out);
  ensure_dir(dir);
  // Stale images from an earlier, larger run would linger otherwise.
  std::error_code ec;
  fs::remove_all(dir / "images", ec);
  auto records = synthesize(config);
  data::write_dataset(dir, records);
  return {dir / "manifest.csv", records.size()};
}

TrainResult cmd_train(const RunConfig& config, int phase, const fs::path& out,
                      const std::optional<fs::path>& phase1_checkpoint, std::ostream* log) {
  if (phase != 1 && phase != 2) throw ContractError("phase must be 1 or 2");
  if (phase == 2 && !phase1_checkpoint) throw ContractError("phase-1 checkpoint required");
  config.validate();
  ensure_dir(out);
  const auto train_records = data::select(load_records(config, out), data::Split::Train);
  const std::string stem = "phase" + std::to_string(phase);

  TrainResult result;
  result.checkpoint = out / (stem + ".ckpt");
  result.loss_curve = out / ("loss_curve_" + stem + ".csv");
  const std::size_t total_epochs = phase == 1 ? config.train.phase1_epochs : config.train.phase2_epochs;
  auto sink = [&](std::size_t epoch, const ParameterList& params) {
    const fs::path path =
        epoch == total_epochs ? result.checkpoint : out / (stem + "_epoch" + std::to_string(epoch) + ".ckpt");
    save(path, phase == 1 ? prefixed(params, "reid.") : params);
    if (epoch == total_epochs) result.parameters = pshr::parameter_count(params);
  };
  auto observer = [&](const train::EpochLosses& e) { log_epoch(log, e); };

  if (phase == 1) {
    result.curve = train::train_phase1(config.model, config.train, train_records, sink, observer).curve;
  } else {
    const Checkpoint ckpt = load_checkpoint(*phase1_checkpoint);
    Rng scratch(0);
    reid::ReIdNet net(config.model.backbone, config.model.head, scratch);
    auto weights = net.parameters();
    ckpt.apply_to(weights, "reid.");
    result.curve = train::train_phase2(config.model, config.train, weights, train_records, sink, observer).curve;
  }
  write_text(result.loss_curve, train::loss_curve_csv(result.curve));
  return result;
}

eval::Evaluation cmd_eval(const RunConfig& config, const std::optional<fs::path>& checkpoint, const fs::path& out) {
  config.validate();
  ensure_dir(out);
  const auto records = load_records(config, out);
  const auto queries = data::select(records, data::Split::Query);
  const auto gallery = data::select(records, data::Split::Gallery);

  Rng init(train::derive_seed(config.train.seed, kEvalInit));
  reid::ReIdNet net(config.model.backbone, config.model.head, init);
  sr::VdsrCaNet restorer(config.model.sr, init);
  if (checkpoint) {
    const Checkpoint ckpt = load_checkpoint(*checkpoint);
    auto reid_params = net.parameters();
    ckpt.apply_to(reid_params, "reid.");
    // A phase-1 checkpoint has no restorer; the untrained one passes images through.
    if (ckpt.has_prefix("sr.")) {
      auto sr_params = restorer.parameters();
      ckpt.apply_to(sr_params, "sr.");
    }
  }
  auto result = eval::evaluate(restorer, net, queries, gallery);
  write_text(out / "metrics.csv", eval::metrics_csv(result.metrics));
  return result;
}

}  // namespace pshr::cli
