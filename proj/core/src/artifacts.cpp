#include "ebmc/artifacts.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "ebmc/csv.hpp"
#include "ebmc/errors.hpp"

namespace ebmc::artifacts {

using csv::format_double;
using nlohmann::ordered_json;

std::string RunHeader::text() const { return "run_id=" + run_id + " config_hash=" + config_hash; }

RunHeader RunHeader::parse(const std::string& text) {
  std::istringstream in(text);
  std::string a, b, extra;
  in >> a >> b;
  if (a.rfind("run_id=", 0) != 0 || b.rfind("config_hash=", 0) != 0 || (in >> extra))
    throw IoError("malformed run header '" + text + "'");
  return {a.substr(7), b.substr(12)};
}

namespace {

std::ofstream open(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

// JSON has no NaN; undefined metrics are written as null.
ordered_json number(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

}  // namespace

void write_metrics_csv(const std::filesystem::path& path, const RunHeader& header, std::uint64_t seed,
                       const std::vector<train::ConditionMetrics>& rows) {
  auto out = open(path);
  out << "# " << header.text() << "\n";
  out << "run_id,condition,seed,metric,value\n";
  for (const auto& row : rows)
    for (const auto& [name, value] : row.metrics.values)
      out << header.run_id << "," << row.condition << "," << seed << "," << name << "," << format_double(value) << "\n";
  finish(out, path);
}

void write_energy_csv(const std::filesystem::path& path, const RunHeader& header, const train::RunLog& log) {
  auto out = open(path);
  out << "# " << header.text() << "\n";
  out << "epoch,stage,modality,e_magnitude,e_loss,e_uncertainty,e_total,grad_norm_sq,implicit_weight\n";
  for (const auto& e : log.epochs)
    for (const auto& r : e.energy.modalities)
      out << e.epoch << "," << static_cast<int>(e.stage) << "," << r.modality << "," << format_double(r.e_magnitude)
          << "," << format_double(r.e_loss) << "," << format_double(r.e_uncertainty) << ","
          << format_double(r.e_total) << "," << format_double(r.grad_norm_sq) << ","
          << format_double(r.implicit_weight) << "\n";
  finish(out, path);
}

void write_trust_csv(const std::filesystem::path& path, const RunHeader& header, const train::RunLog& log) {
  auto out = open(path);
  out << "# " << header.text() << "\n";
  out << "epoch,modality,mean_sigma,mean_c,mean_rho,mean_alpha\n";
  for (const auto& e : log.epochs)
    for (const auto& r : e.trust)
      out << e.epoch << "," << r.modality << "," << format_double(r.mean_sigma) << "," << format_double(r.mean_c)
          << "," << format_double(r.mean_rho) << "," << format_double(r.mean_alpha) << "\n";
  finish(out, path);
}

namespace {

std::vector<std::pair<const char*, double>> loss_fields(const train::StepLosses& l) {
  return {{"l_task", l.l_task},   {"l_msd", l.l_msd},   {"l_inv", l.l_inv},     {"l_dis", l.l_dis},
          {"l_uni", l.l_uni},     {"l_cce", l.l_cce},   {"l_rec", l.l_rec},     {"l_task_enh", l.l_task_enh},
          {"l_emc", l.l_emc},     {"l_gap", l.l_gap},   {"l_imtd", l.l_imtd},   {"l_total", l.l_total},
          {"w_task", l.w_task},   {"w_msd", l.w_msd},   {"w_cce", l.w_cce},     {"w_emc", l.w_emc},
          {"w_imtd", l.w_imtd}};
}

}  // namespace

void write_runlog_jsonl(const std::filesystem::path& path, const RunHeader& header, const train::RunLog& log) {
  auto out = open(path);
  out << ordered_json{{"run_id", header.run_id}, {"config_hash", header.config_hash}}.dump() << "\n";
  for (const auto& e : log.epochs) {
    ordered_json j;
    j["epoch"] = e.epoch;
    j["stage"] = static_cast<int>(e.stage);
    ordered_json losses = ordered_json::object();
    for (const auto& [k, v] : loss_fields(e.losses)) losses[k] = number(v);
    j["losses"] = losses;
    j["train_accuracy"] = number(e.train_accuracy);
    ordered_json energy = ordered_json::array();
    for (const auto& r : e.energy.modalities)
      energy.push_back({{"modality", r.modality},
                        {"e_magnitude", number(r.e_magnitude)},
                        {"e_loss", number(r.e_loss)},
                        {"e_uncertainty", number(r.e_uncertainty)},
                        {"e_total", number(r.e_total)},
                        {"grad_norm_sq", number(r.grad_norm_sq)},
                        {"implicit_weight", number(r.implicit_weight)}});
    j["energy"] = energy;
    j["e_mean"] = number(e.energy.e_mean);
    ordered_json trust = ordered_json::array();
    for (const auto& r : e.trust)
      trust.push_back({{"modality", r.modality},
                       {"mean_sigma", number(r.mean_sigma)},
                       {"mean_c", number(r.mean_c)},
                       {"mean_rho", number(r.mean_rho)},
                       {"mean_alpha", number(r.mean_alpha)}});
    j["trust"] = trust;
    j["seconds"] = e.seconds;
    out << j.dump() << "\n";
  }
  finish(out, path);
}

void write_loss_csv(const std::filesystem::path& path, const RunHeader& header, const train::RunLog& log) {
  auto out = open(path);
  out << "# " << header.text() << "\n";
  out << "epoch,stage";
  for (const auto& [k, v] : loss_fields({})) out << "," << k;
  out << ",train_accuracy\n";
  for (const auto& e : log.epochs) {
    out << e.epoch << "," << static_cast<int>(e.stage);
    for (const auto& [k, v] : loss_fields(e.losses)) out << "," << format_double(v);
    out << "," << format_double(e.train_accuracy) << "\n";
  }
  finish(out, path);
}

void write_text(const std::filesystem::path& path, const RunHeader& header, const std::string& text) {
  auto out = open(path);
  out << "# " << header.text() << "\n" << text;
  finish(out, path);
}

RunHeader read_header(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("# ", 0) == 0) return RunHeader::parse(line.substr(2));
  try {
    const auto j = nlohmann::json::parse(line);
    return {j.at("run_id").get<std::string>(), j.at("config_hash").get<std::string>()};
  } catch (const nlohmann::json::exception&) {
    throw IoError(path.string() + ": no run header on the first line");
  }
}

}  // namespace ebmc::artifacts
