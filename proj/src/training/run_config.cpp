// Copyright 2026 The mudaif Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>

#include "mudaif/json_read.hpp"
#include "mudaif/run.hpp"

namespace mudaif {

namespace {

using namespace json_read;

DataSource data_source_from_json(const nlohmann::json& j, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, path, {"synthetic", "n", "seed", "manifest"});
  DataSource d;
  if (j.contains("manifest")) {
    if (j.contains("synthetic") || j.contains("n") || j.contains("seed")) {
      throw ConfigError(path + ": 'manifest' excludes 'synthetic', 'n' and 'seed'");
    }
    d.manifest = get_string(j["manifest"], path + ".manifest");
    return d;
  }
  if (!j.contains("synthetic")) throw ConfigError(path + ": needs 'synthetic' or 'manifest'");
  d.synthetic = data::scene_spec_from_json(j["synthetic"], path + ".synthetic");
  if (!j.contains("n")) throw ConfigError(path + ".n: required with 'synthetic'");
  d.n = get_count(j["n"], path + ".n");
  if (d.n == 0) throw ConfigError(path + ".n: must be at least 1");
  if (j.contains("seed")) d.seed = get_count(j["seed"], path + ".seed");
  return d;
}

PhaseSpec phase_from_json(const nlohmann::json& j, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, path,
                 {"tag", "data", "split", "epochs", "batch_size", "lr", "warmup_steps",
                  "freeze_vta"});
  PhaseSpec p;
  if (!j.contains("tag")) throw ConfigError(path + ".tag: required");
  try {
    p.tag = phase_tag_from_string(get_string(j["tag"], path + ".tag"));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ".tag: " + e.what());
  }
  if (!j.contains("data")) throw ConfigError(path + ".data: required");
  p.data = data_source_from_json(j["data"], path + ".data");
  if (j.contains("split")) p.split = get_string(j["split"], path + ".split");
  if (j.contains("epochs")) p.epochs = get_count(j["epochs"], path + ".epochs");
  if (j.contains("batch_size")) p.batch_size = get_count(j["batch_size"], path + ".batch_size");
  if (p.batch_size == 0) throw ConfigError(path + ".batch_size: must be at least 1");
  if (j.contains("lr")) p.lr = get_number(j["lr"], path + ".lr");
  if (p.lr < 0.0) throw ConfigError(path + ".lr: must be non-negative");
  if (j.contains("warmup_steps")) {
    p.warmup_steps = get_count(j["warmup_steps"], path + ".warmup_steps");
  }
  if (j.contains("freeze_vta")) p.freeze_vta = get_bool(j["freeze_vta"], path + ".freeze_vta");
  return p;
}

AdamOptions optimizer_from_json(const nlohmann::json& j, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, path, {"beta1", "beta2", "eps", "weight_decay", "clip_norm"});
  AdamOptions o;
  if (j.contains("beta1")) o.beta1 = get_number(j["beta1"], path + ".beta1");
  if (j.contains("beta2")) o.beta2 = get_number(j["beta2"], path + ".beta2");
  if (j.contains("eps")) o.eps = get_number(j["eps"], path + ".eps");
  if (j.contains("weight_decay")) o.weight_decay = get_number(j["weight_decay"], path + ".weight_decay");
  if (j.contains("clip_norm")) o.clip_norm = get_number(j["clip_norm"], path + ".clip_norm");
  if (!(o.beta1 >= 0.0 && o.beta1 < 1.0)) throw ConfigError(path + ".beta1: must lie in [0, 1)");
  if (!(o.beta2 >= 0.0 && o.beta2 < 1.0)) throw ConfigError(path + ".beta2: must lie in [0, 1)");
  if (!(o.eps > 0.0)) throw ConfigError(path + ".eps: must be positive");
  if (o.weight_decay < 0.0) throw ConfigError(path + ".weight_decay: must be non-negative");
  if (o.clip_norm < 0.0) throw ConfigError(path + ".clip_norm: must be non-negative");
  return o;
}

GradCheckSpec gradcheck_from_json(const nlohmann::json& j, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, path,
                 {"kind", "samples", "data_seed", "scene", "step", "threshold",
                  "gelu_backward_fault"});
  GradCheckSpec g;
  if (j.contains("kind")) {
    const auto kind = get_string(j["kind"], path + ".kind");
    if (kind == "full") g.kind = GradCheckKind::Full;
    else if (kind == "linear_toy") g.kind = GradCheckKind::LinearToy;
    else throw ConfigError(path + ".kind: expected full or linear_toy");
  }
  if (j.contains("samples")) g.samples = get_count(j["samples"], path + ".samples");
  if (g.samples == 0) throw ConfigError(path + ".samples: must be at least 1");
  if (j.contains("data_seed")) g.data_seed = get_count(j["data_seed"], path + ".data_seed");
  if (j.contains("scene")) g.scene = data::scene_spec_from_json(j["scene"], path + ".scene");
  if (j.contains("step")) g.step = get_number(j["step"], path + ".step");
  if (!(g.step > 0.0)) throw ConfigError(path + ".step: must be positive");
  if (j.contains("threshold")) g.threshold = get_number(j["threshold"], path + ".threshold");
  if (!(g.threshold > 0.0)) throw ConfigError(path + ".threshold: must be positive");
  if (j.contains("gelu_backward_fault")) {
    g.gelu_backward_fault = get_number(j["gelu_backward_fault"], path + ".gelu_backward_fault");
  }
  return g;
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
  require_object(j, "$");
  reject_unknown(j, "$", {"model", "phases", "optimizer", "seed", "gradcheck"});
  RunConfig c;
  if (j.contains("model")) c.model = model_config_from_json(j["model"], "$.model");
  if (j.contains("phases")) {
    const auto& phases = j["phases"];
    if (!phases.is_array()) throw ConfigError("$.phases: expected an array");
    for (std::size_t i = 0; i < phases.size(); ++i) {
      c.phases.push_back(phase_from_json(phases[i], "$.phases[" + std::to_string(i) + "]"));
    }
  }
  if (j.contains("optimizer")) c.optimizer = optimizer_from_json(j["optimizer"], "$.optimizer");
  if (j.contains("seed")) c.seed = get_count(j["seed"], "$.seed");
  if (j.contains("gradcheck")) c.gradcheck = gradcheck_from_json(j["gradcheck"], "$.gradcheck");
  try {
    LossWeights::from(c.model).validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("$.model: ") + e.what());
  }
  return c;
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json phases = nlohmann::json::array();
  for (const auto& p : c.phases) {
    nlohmann::json data;
    if (p.data.manifest) {
      data["manifest"] = p.data.manifest->string();
    } else {
      data["synthetic"] = data::to_json(*p.data.synthetic);
      data["n"] = p.data.n;
      data["seed"] = p.data.seed;
    }
    phases.push_back({{"tag", to_string(p.tag)},
                      {"data", data},
                      {"split", p.split},
                      {"epochs", p.epochs},
                      {"batch_size", p.batch_size},
                      {"lr", p.lr},
                      {"warmup_steps", p.warmup_steps},
                      {"freeze_vta", p.freeze_vta}});
  }
  const auto& g = c.gradcheck;
  return {{"model", to_json(c.model)},
          {"phases", phases},
          {"optimizer",
           {{"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"eps", c.optimizer.eps},
            {"weight_decay", c.optimizer.weight_decay},
            {"clip_norm", c.optimizer.clip_norm}}},
          {"seed", c.seed},
          {"gradcheck",
           {{"kind", g.kind == GradCheckKind::Full ? "full" : "linear_toy"},
            {"samples", g.samples},
            {"data_seed", g.data_seed},
            {"scene", data::to_json(g.scene)},
            {"step", g.step},
            {"threshold", g.threshold},
            {"gelu_backward_fault", g.gelu_backward_fault}}}};
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("$: invalid JSON: ") + e.what());
  }
  RunConfig c = run_config_from_json(j);
  c.base_dir = path.parent_path();
  return c;
}

}  // namespace mudaif
