#pragma once

// Run output files. Every file opens with a header carrying the run id and
// the config hash: a "# run_id=... config_hash=..." line for CSV, a leading
// {"run_id", "config_hash"} record for JSON Lines.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ebmc/trainer.hpp"

namespace ebmc::artifacts {

struct RunHeader {
  std::string run_id;
  std::string config_hash;

  /// "run_id=<id> config_hash=<hash>".
  std::string text() const;
  /// Parses text(); throws IoError on anything else.
  static RunHeader parse(const std::string& text);
};

/// Columns run_id, condition, seed, metric, value.
void write_metrics_csv(const std::filesystem::path& path, const RunHeader& header, std::uint64_t seed,
                       const std::vector<train::ConditionMetrics>& rows);

/// Columns epoch, stage, modality, e_magnitude, e_loss, e_uncertainty, e_total,
/// grad_norm_sq, implicit_weight.
void write_energy_csv(const std::filesystem::path& path, const RunHeader& header, const train::RunLog& log);

/// Columns epoch, modality, mean_sigma, mean_c, mean_rho, mean_alpha. Stage II
/// epochs only.
void write_trust_csv(const std::filesystem::path& path, const RunHeader& header, const train::RunLog& log);

/// Header record, then one object per epoch.
void write_runlog_jsonl(const std::filesystem::path& path, const RunHeader& header, const train::RunLog& log);

/// Columns epoch, stage, l_task, l_msd, ..., l_total, train_accuracy.
void write_loss_csv(const std::filesystem::path& path, const RunHeader& header, const train::RunLog& log);

/// Writes `text` preceded by "# <header>".
void write_text(const std::filesystem::path& path, const RunHeader& header, const std::string& text);

/// Header of a file written by this module (either form).
RunHeader read_header(const std::filesystem::path& path);

}  // namespace ebmc::artifacts
