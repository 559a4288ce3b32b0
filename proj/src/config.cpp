#include "epi/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace epi {
namespace {

constexpr int kSchemaVersion = 1;

void check_keys(const nlohmann::json& obj, const std::string& where,
                const std::set<std::string>& allowed) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) {
      throw std::runtime_error("unknown config key: " + where + key);
    }
  }
}

Arch arch_from_string(const std::string& s) {
  if (s == "mlp") return Arch::kMlp;
  if (s == "toy-attention") return Arch::kToyAttention;
  throw std::runtime_error("unknown architecture: " + s);
}

const char* to_string(Arch a) {
  return a == Arch::kMlp ? "mlp" : "toy-attention";
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  throw std::runtime_error("unknown activation: " + s);
}

const char* to_string(Activation a) {
  return a == Activation::kTanh ? "tanh" : "relu";
}

LossKind loss_from_string(const std::string& s) {
  if (s == "softmax-cross-entropy") return LossKind::kSoftmaxCrossEntropy;
  if (s == "mean-squared-error") return LossKind::kMeanSquaredError;
  throw std::runtime_error("unknown loss: " + s);
}

const char* to_string(LossKind l) {
  return l == LossKind::kSoftmaxCrossEntropy ? "softmax-cross-entropy"
                                             : "mean-squared-error";
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "linear-regression") return TaskKind::kLinearRegression;
  if (s == "rotated-classification") return TaskKind::kRotatedClassification;
  throw std::runtime_error("unknown task kind: " + s);
}

const char* to_string(TaskKind k) {
  return k == TaskKind::kLinearRegression ? "linear-regression"
                                          : "rotated-classification";
}

}  // namespace

const char* to_string(Method m) {
  switch (m) {
    case Method::kFullSft: return "full-sft";
    case Method::kMultistageRandom: return "multistage-random";
    case Method::kMultistageHeuristic: return "multistage-heuristic";
    case Method::kStatic: return "static";
    case Method::kEpi: return "epi";
    case Method::kPerLayerBudget: return "per-layer-budget";
    case Method::kGlobalRaw: return "global-raw";
    case Method::kRandomMask: return "random-mask";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  if (s == "full-sft") return Method::kFullSft;
  if (s == "multistage-random") return Method::kMultistageRandom;
  if (s == "multistage-heuristic") return Method::kMultistageHeuristic;
  if (s == "static") return Method::kStatic;
  if (s == "epi") return Method::kEpi;
  if (s == "per-layer-budget") return Method::kPerLayerBudget;
  if (s == "global-raw") return Method::kGlobalRaw;
  if (s == "random-mask") return Method::kRandomMask;
  throw std::runtime_error("unknown method: " + s);
}

bool is_dynamic_mask_method(Method m) {
  return m == Method::kEpi || m == Method::kPerLayerBudget ||
         m == Method::kGlobalRaw || m == Method::kRandomMask;
}

RunConfig RunConfig::from_json(const nlohmann::json& doc) {
  check_keys(doc, "",
             {"schema_version", "method", "model", "tasks", "stream", "epi",
              "optimizer", "probe", "seeds", "output_dir",
              "snapshot_cadence"});
  if (!doc.contains("schema_version") ||
      doc["schema_version"].get<int>() != kSchemaVersion) {
    throw std::runtime_error("missing or unsupported schema_version");
  }

  RunConfig cfg;
  if (doc.contains("method")) {
    cfg.method = method_from_string(doc["method"].get<std::string>());
  }
  if (doc.contains("model")) {
    const auto& m = doc["model"];
    check_keys(m, "model.",
               {"architecture", "hidden", "activation", "input_dim",
                "output_dim", "loss", "seq_len", "init_scale"});
    if (m.contains("architecture")) {
      cfg.model.arch = arch_from_string(m["architecture"].get<std::string>());
    }
    if (m.contains("hidden")) {
      cfg.model.hidden = m["hidden"].get<std::vector<std::size_t>>();
    }
    if (m.contains("activation")) {
      cfg.model.activation =
          activation_from_string(m["activation"].get<std::string>());
    }
    if (m.contains("input_dim")) {
      cfg.model.input_dim = m["input_dim"].get<std::size_t>();
    }
    if (m.contains("output_dim")) {
      cfg.model.output_dim = m["output_dim"].get<std::size_t>();
    }
    if (m.contains("loss")) {
      cfg.model.loss = loss_from_string(m["loss"].get<std::string>());
    }
    if (m.contains("seq_len")) {
      cfg.model.seq_len = m["seq_len"].get<std::size_t>();
    }
    if (m.contains("init_scale")) {
      cfg.init_scale = m["init_scale"].get<double>();
    }
  }
  if (doc.contains("tasks")) {
    const auto& t = doc["tasks"];
    check_keys(t, "tasks.",
               {"count", "kind", "conflict_pairs", "noise_std", "orth_noise"});
    if (t.contains("count")) cfg.task_count = t["count"].get<std::size_t>();
    if (t.contains("kind")) {
      cfg.task_kind = task_kind_from_string(t["kind"].get<std::string>());
    }
    if (t.contains("conflict_pairs")) {
      cfg.conflict_pairs =
          t["conflict_pairs"].get<std::vector<std::pair<int, int>>>();
    }
    if (t.contains("noise_std")) {
      cfg.task_noise_std = t["noise_std"].get<double>();
    }
    if (t.contains("orth_noise")) {
      cfg.orth_noise = t["orth_noise"].get<double>();
    }
  }
  if (doc.contains("stream")) {
    const auto& s = doc["stream"];
    check_keys(s, "stream.",
               {"ordering", "steps_per_stage", "batch_size", "eval_size"});
    if (s.contains("ordering")) {
      cfg.ordering = ordering_from_string(s["ordering"].get<std::string>());
    }
    if (s.contains("steps_per_stage")) {
      cfg.steps_per_stage = s["steps_per_stage"].get<std::size_t>();
    }
    if (s.contains("batch_size")) {
      cfg.batch_size = s["batch_size"].get<std::size_t>();
    }
    if (s.contains("eval_size")) {
      cfg.eval_size = s["eval_size"].get<std::size_t>();
    }
  }
  if (doc.contains("epi")) {
    const auto& e = doc["epi"];
    check_keys(e, "epi.",
               {"p", "beta", "refresh_interval", "layer_norm",
                "reset_sensitivity_on_stage"});
    if (e.contains("p")) cfg.p = e["p"].get<double>();
    if (e.contains("beta")) cfg.beta = e["beta"].get<double>();
    if (e.contains("refresh_interval")) {
      cfg.refresh_interval = e["refresh_interval"].get<std::uint64_t>();
    }
    if (e.contains("layer_norm")) cfg.layer_norm = e["layer_norm"].get<bool>();
    if (e.contains("reset_sensitivity_on_stage")) {
      cfg.reset_sensitivity_on_stage =
          e["reset_sensitivity_on_stage"].get<bool>();
    }
  }
  if (doc.contains("optimizer")) {
    const auto& o = doc["optimizer"];
    check_keys(o, "optimizer.",
               {"lr", "beta1", "beta2", "eps", "weight_decay",
                "warmup_fraction", "schedule"});
    if (o.contains("lr")) cfg.optimizer.base_lr = o["lr"].get<double>();
    if (o.contains("beta1")) cfg.optimizer.beta1 = o["beta1"].get<double>();
    if (o.contains("beta2")) cfg.optimizer.beta2 = o["beta2"].get<double>();
    if (o.contains("eps")) cfg.optimizer.eps = o["eps"].get<double>();
    if (o.contains("weight_decay")) {
      cfg.optimizer.weight_decay = o["weight_decay"].get<double>();
    }
    if (o.contains("warmup_fraction")) {
      cfg.warmup_fraction = o["warmup_fraction"].get<double>();
    }
    if (o.contains("schedule")) {
      const auto s = o["schedule"].get<std::string>();
      if (s == "cosine") {
        cfg.schedule = ScheduleShape::kCosine;
      } else if (s == "constant") {
        cfg.schedule = ScheduleShape::kConstant;
      } else {
        throw std::runtime_error("unknown schedule: " + s);
      }
    }
  }
  if (doc.contains("probe")) {
    const auto& p = doc["probe"];
    check_keys(p, "probe.", {"steps_per_task"});
    if (p.contains("steps_per_task")) {
      cfg.probe_steps = p["steps_per_task"].get<std::size_t>();
    }
  }
  if (doc.contains("seeds")) {
    cfg.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
  }
  if (doc.contains("output_dir")) {
    cfg.output_dir = doc["output_dir"].get<std::string>();
  }
  if (doc.contains("snapshot_cadence")) {
    cfg.snapshot_cadence = doc["snapshot_cadence"].get<std::uint64_t>();
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path,
                          const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  nlohmann::json doc = nlohmann::json::parse(in);
  for (const auto& o : overrides) apply_override(doc, o);
  return from_json(doc);
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["method"] = to_string(method);
  doc["model"] = {{"architecture", to_string(model.arch)},
                  {"hidden", model.hidden},
                  {"activation", to_string(model.activation)},
                  {"input_dim", model.input_dim},
                  {"output_dim", model.output_dim},
                  {"loss", to_string(model.loss)},
                  {"seq_len", model.seq_len},
                  {"init_scale", init_scale}};
  doc["tasks"] = {{"count", task_count},
                  {"kind", to_string(task_kind)},
                  {"conflict_pairs", conflict_pairs},
                  {"noise_std", task_noise_std},
                  {"orth_noise", orth_noise}};
  doc["stream"] = {{"ordering", to_string(ordering)},
                   {"steps_per_stage", steps_per_stage},
                   {"batch_size", batch_size},
                   {"eval_size", eval_size}};
  doc["epi"] = {{"p", p},
                {"beta", beta},
                {"refresh_interval", refresh_interval},
                {"layer_norm", layer_norm},
                {"reset_sensitivity_on_stage", reset_sensitivity_on_stage}};
  doc["optimizer"] = {
      {"lr", optimizer.base_lr},
      {"beta1", optimizer.beta1},
      {"beta2", optimizer.beta2},
      {"eps", optimizer.eps},
      {"weight_decay", optimizer.weight_decay},
      {"warmup_fraction", warmup_fraction},
      {"schedule", schedule == ScheduleShape::kCosine ? "cosine" : "constant"}};
  doc["probe"] = {{"steps_per_task", probe_steps}};
  doc["seeds"] = seeds;
  doc["output_dir"] = output_dir;
  doc["snapshot_cadence"] = snapshot_cadence;
  return doc;
}

void RunConfig::validate() const {
  if (!(p > 0.0 && p < 1.0)) throw std::runtime_error("p must be in (0, 1)");
  if (refresh_interval == 0) {
    throw std::runtime_error("refresh_interval must be >= 1");
  }
  if (beta < 0.0 || beta >= 1.0) {
    throw std::runtime_error("beta must be in [0, 1)");
  }
  if (seeds.empty()) throw std::runtime_error("need at least one seed");
  if (task_count == 0) throw std::runtime_error("need at least one task");
  if (steps_per_stage == 0) {
    throw std::runtime_error("steps_per_stage must be >= 1");
  }
  if (batch_size == 0) throw std::runtime_error("batch_size must be >= 1");
  if (model.input_dim == 0 || model.output_dim == 0) {
    throw std::runtime_error("model dims must be >= 1");
  }
}

void apply_override(nlohmann::json& doc, const std::string& key_eq_value) {
  const auto eq = key_eq_value.find('=');
  if (eq == std::string::npos) {
    throw std::runtime_error("override must look like key.path=value: " +
                             key_eq_value);
  }
  const std::string path = key_eq_value.substr(0, eq);
  const std::string raw = key_eq_value.substr(eq + 1);

  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;  // bare strings need no quoting
  }

  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw std::runtime_error("empty override path segment");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace epi
