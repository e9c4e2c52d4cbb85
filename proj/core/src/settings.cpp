#include "ebmc/settings.hpp"

#include <algorithm>
#include <cctype>

#include "ebmc/csv.hpp"
#include "ebmc/errors.hpp"

namespace ebmc {

const char* to_string(Module m) {
  switch (m) {
    case Module::Msd: return "msd";
    case Module::Cce: return "cce";
    case Module::Emc: return "emc";
    case Module::Imtd: return "imtd";
  }
  return "?";
}

Module parse_module(const std::string& name) {
  const auto first = name.find_first_not_of(" \t");
  std::string lower = first == std::string::npos ? "" : name.substr(first, name.find_last_not_of(" \t") - first + 1);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (Module m : {Module::Msd, Module::Cce, Module::Emc, Module::Imtd})
    if (lower == to_string(m)) return m;
  throw ConfigError("unknown module '" + name + "' (expected msd, cce, emc or imtd)");
}

std::set<Module> parse_module_list(const std::string& list) {
  std::set<Module> out;
  if (list.empty()) return out;
  for (const auto& item : csv::split(list, ',')) out.insert(parse_module(item));
  return out;
}

std::string format_module_list(const std::set<Module>& modules) {
  std::string out;
  for (Module m : modules) {
    if (!out.empty()) out += ",";
    out += to_string(m);
  }
  return out;
}

void TrainConfig::validate(bool allow_zero_lr) const {
  if (stage1_epochs < 1 || stage2_epochs < 1) throw ContractError("train: epochs must be at least 1");
  if (batch_size < 2) throw ContractError("train: batch_size must be at least 2");
  if (allow_zero_lr ? !(learning_rate >= 0.0) : !(learning_rate > 0.0)) {
    throw ContractError("train: learning_rate must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("train: momentum must be in [0, 1)");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !(gamma_cce >= 0.0) || !(noise_scale >= 0.0)) {
    throw ContractError("train: loss weights must be non-negative");
  }
  if (!(tau_inv > 0.0)) throw ContractError("train: msd temperature must be positive");
  objective.validate();
  energy.validate();
  distill.validate();
}

namespace {

const std::vector<std::string> kRequired = {"train.stage1_epochs", "train.stage2_epochs", "train.learning_rate",
                                            "train.batch_size"};

std::string fmt(double v) { return csv::format_double(v); }
std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

}  // namespace

config::KeyValueConfig TrainConfig::to_config() const {
  config::KeyValueConfig kv;
  kv.set("train.stage1_epochs", fmt(stage1_epochs));
  kv.set("train.stage2_epochs", fmt(stage2_epochs));
  kv.set("train.learning_rate", fmt(learning_rate));
  kv.set("train.momentum", fmt(momentum));
  kv.set("train.batch_size", fmt(batch_size));
  kv.set("train.seed", std::to_string(seed));
  kv.set("train.stage2_freeze_stage1", fmt(stage2_freeze_stage1));
  kv.set("train.keep_stage1_losses", fmt(keep_stage1_losses));
  kv.set("train.disable", format_module_list(disabled));
  kv.set("objective.zeta", fmt(objective.zeta));
  kv.set("objective.beta", fmt(objective.beta_w));
  kv.set("objective.gamma", fmt(objective.gamma_w));
  kv.set("objective.eta", fmt(objective.eta_w));
  kv.set("msd.lambda1", fmt(lambda1));
  kv.set("msd.lambda2", fmt(lambda2));
  kv.set("msd.temperature", fmt(tau_inv));
  kv.set("cce.gamma", fmt(gamma_cce));
  kv.set("cce.noise_scale", fmt(noise_scale));
  kv.set("emc.alpha", fmt(energy.alpha_e));
  kv.set("emc.beta", fmt(energy.beta_e));
  kv.set("emc.gamma", fmt(energy.gamma_e));
  kv.set("emc.lambda_flow", fmt(energy.lambda_flow));
  kv.set("emc.delta", fmt(energy.delta_e));
  kv.set("imtd.tau_kd", fmt(distill.tau_kd));
  kv.set("imtd.mc_passes", fmt(distill.mc_passes));
  kv.set("imtd.perturbation", fmt(distill.perturbation));
  kv.set("model.mlp_hidden", fmt(dims.mlp_hidden));
  kv.set("model.rep", fmt(dims.rep));
  kv.set("model.shared", fmt(dims.shared));
  kv.set("model.specific", fmt(dims.specific));
  kv.set("model.noise", fmt(dims.noise));
  kv.set("model.fusion_hidden", fmt(dims.fusion_hidden));
  return kv;
}

TrainConfig TrainConfig::from_config(const config::KeyValueConfig& kv) {
  kv.require(kRequired);
  std::set<std::string> known;
  const auto defaults = TrainConfig{}.to_config();
  for (const auto& [k, v] : defaults.values()) known.insert(k);
  kv.reject_unknown(known);

  TrainConfig c;
  auto read_double = [&](const char* key, double& out) {
    if (kv.has(key)) out = kv.get_double(key);
  };
  auto read_count = [&](const char* key, std::size_t& out) {
    if (kv.has(key)) out = kv.get_count(key);
  };
  auto read_bool = [&](const char* key, bool& out) {
    if (kv.has(key)) out = kv.get_bool(key);
  };
  read_count("train.stage1_epochs", c.stage1_epochs);
  read_count("train.stage2_epochs", c.stage2_epochs);
  read_double("train.learning_rate", c.learning_rate);
  read_double("train.momentum", c.momentum);
  read_count("train.batch_size", c.batch_size);
  if (kv.has("train.seed")) c.seed = static_cast<std::uint64_t>(kv.get_count("train.seed"));
  read_bool("train.stage2_freeze_stage1", c.stage2_freeze_stage1);
  read_bool("train.keep_stage1_losses", c.keep_stage1_losses);
  if (kv.has("train.disable")) c.disabled = parse_module_list(kv.get("train.disable"));
  read_double("objective.zeta", c.objective.zeta);
  read_double("objective.beta", c.objective.beta_w);
  read_double("objective.gamma", c.objective.gamma_w);
  read_double("objective.eta", c.objective.eta_w);
  read_double("msd.lambda1", c.lambda1);
  read_double("msd.lambda2", c.lambda2);
  read_double("msd.temperature", c.tau_inv);
  read_double("cce.gamma", c.gamma_cce);
  read_double("cce.noise_scale", c.noise_scale);
  read_double("emc.alpha", c.energy.alpha_e);
  read_double("emc.beta", c.energy.beta_e);
  read_double("emc.gamma", c.energy.gamma_e);
  read_double("emc.lambda_flow", c.energy.lambda_flow);
  read_double("emc.delta", c.energy.delta_e);
  read_double("imtd.tau_kd", c.distill.tau_kd);
  read_count("imtd.mc_passes", c.distill.mc_passes);
  read_double("imtd.perturbation", c.distill.perturbation);
  read_count("model.mlp_hidden", c.dims.mlp_hidden);
  read_count("model.rep", c.dims.rep);
  read_count("model.shared", c.dims.shared);
  read_count("model.specific", c.dims.specific);
  read_count("model.noise", c.dims.noise);
  read_count("model.fusion_hidden", c.dims.fusion_hidden);
  try {
    c.validate(true);
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

data::GeneratorSpec generator_spec_from_config(const config::KeyValueConfig& kv) {
  kv.require({"data.modalities"});
  data::GeneratorSpec spec;
  std::set<std::string> known = {"data.num_classes", "data.samples_per_class", "data.seed", "data.regression",
                                 "data.modalities"};
  if (kv.has("data.num_classes")) spec.num_classes = kv.get_count("data.num_classes");
  if (kv.has("data.samples_per_class")) spec.samples_per_class = kv.get_count("data.samples_per_class");
  if (kv.has("data.seed")) spec.seed = static_cast<std::uint64_t>(kv.get_count("data.seed"));
  if (kv.has("data.regression")) spec.regression = kv.get_bool("data.regression");
  for (const auto& name : kv.get_list("data.modalities")) {
    const std::string p = "modality." + name + ".";
    kv.require({p + "dim", p + "snr"});
    data::ModalitySpec m;
    m.name = name;
    m.dim = kv.get_count(p + "dim");
    m.snr = kv.get_double(p + "snr");
    if (kv.has(p + "noise")) m.noise = kv.get_double(p + "noise");
    known.insert({p + "dim", p + "snr", p + "noise"});
    spec.modalities.push_back(m);
  }
  kv.reject_unknown(known);
  try {
    spec.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

config::KeyValueConfig generator_spec_to_config(const data::GeneratorSpec& spec) {
  config::KeyValueConfig kv;
  kv.set("data.num_classes", fmt(spec.num_classes));
  kv.set("data.samples_per_class", fmt(spec.samples_per_class));
  kv.set("data.seed", std::to_string(spec.seed));
  kv.set("data.regression", fmt(spec.regression));
  std::string names;
  for (const auto& m : spec.modalities) {
    names += (names.empty() ? "" : ",") + m.name;
    kv.set("modality." + m.name + ".dim", fmt(m.dim));
    kv.set("modality." + m.name + ".snr", fmt(m.snr));
    kv.set("modality." + m.name + ".noise", fmt(m.noise));
  }
  kv.set("data.modalities", names);
  return kv;
}

}  // namespace ebmc
