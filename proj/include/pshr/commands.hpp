#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pshr/config.hpp"
#include "pshr/eval.hpp"
#include "pshr/gradcheck.hpp"

namespace pshr::cli {

/// Dataset directory for a run: data.root, resolved against `out` when relative.
std::filesystem::path data_dir(const RunConfig& config, const std::filesystem::path& out);

/// Toy identities, single-shot split and MLR queries, as in-memory records.
std::vector<data::SampleRecord> synthesize(const RunConfig& config);

struct SynthResult {
  std::filesystem::path manifest;
  std::size_t records = 0;
};

/// Writes PNGs and manifest.csv under data_dir().
SynthResult cmd_synth(const RunConfig& config, const std::filesystem::path& out);

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path loss_curve;
  std::size_t parameters = 0;
  std::vector<train::EpochLosses> curve;
};

/// Phase 1 writes phase1.ckpt (reid.*) and loss_curve_phase1.csv; phase 2
/// needs the phase-1 checkpoint and writes phase2.ckpt (sr.*, reid.*,
/// teacher.* when H trains) and loss_curve_phase2.csv.
TrainResult cmd_train(const RunConfig& config, int phase, const std::filesystem::path& out,
                      const std::optional<std::filesystem::path>& phase1_checkpoint, std::ostream* log = nullptr);

/// Evaluates a checkpoint (or seeded random weights when none is given) on
/// the query and gallery splits and writes metrics.csv.
eval::Evaluation cmd_eval(const RunConfig& config, const std::optional<std::filesystem::path>& checkpoint,
                          const std::filesystem::path& out);

struct GradCheckRow {
  std::string op;
  std::size_t probes = 0;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool pass = false;
};

/// Finite-difference check of every differentiable op and loss over
/// `probes` random draws each.
std::vector<GradCheckRow> gradcheck_suite(std::uint64_t seed, std::size_t probes = 5);
std::string gradcheck_table(const std::vector<GradCheckRow>& rows);

}  // namespace pshr::cli
