#include "epi/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "epi/optim.hpp"

namespace epi {
namespace {

namespace fs = std::filesystem;

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class MetricLog {
 public:
  explicit MetricLog(const std::string& path) : out_(path) {
    if (!out_) throw std::runtime_error("cannot open metric log: " + path);
    out_ << "step,stage,task_id,name,value\n";
  }

  void row(std::uint64_t step, int stage, const std::string& task_id,
           const std::string& name, double value) {
    out_ << step << ',' << stage << ',' << task_id << ',' << name << ','
         << format_value(value) << '\n';
  }

 private:
  std::ofstream out_;
};

MaskStrategy strategy_for(Method m) {
  switch (m) {
    case Method::kStatic: return MaskStrategy::kStatic;
    case Method::kPerLayerBudget: return MaskStrategy::kPerLayerBudget;
    case Method::kGlobalRaw: return MaskStrategy::kGlobalRaw;
    case Method::kRandomMask: return MaskStrategy::kRandom;
    default: return MaskStrategy::kEpi;
  }
}

// Quartile buckets over the partition order, named by their group span.
std::vector<std::pair<std::string, std::vector<Group>>> quartile_buckets(
    const std::vector<Group>& partition) {
  std::vector<std::pair<std::string, std::vector<Group>>> buckets;
  const std::size_t n = partition.size();
  const std::size_t per = std::max<std::size_t>(1, (n + 3) / 4);
  for (std::size_t start = 0; start < n; start += per) {
    const std::size_t end = std::min(n, start + per);
    std::string name =
        partition[start].name +
        (end - start > 1 ? ".." + partition[end - 1].name : "");
    buckets.emplace_back(
        name, std::vector<Group>(partition.begin() + start,
                                 partition.begin() + end));
  }
  return buckets;
}

void write_partition_json(const std::string& path,
                          const std::vector<Group>& partition) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& g : partition) {
    doc.push_back(
        {{"name", g.name}, {"offset", g.offset}, {"length", g.length}});
  }
  std::ofstream out(path);
  out << doc.dump(2) << '\n';
}

std::vector<Group> read_partition_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) return {};
  nlohmann::json doc = nlohmann::json::parse(in);
  std::vector<Group> partition;
  for (const auto& g : doc) {
    partition.push_back({g.at("name").get<std::string>(),
                         g.at("offset").get<std::size_t>(),
                         g.at("length").get<std::size_t>()});
  }
  return partition;
}

std::string snapshot_name(std::uint64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "mask_%010llu.epim",
                static_cast<unsigned long long>(step));
  return buf;
}

std::vector<double> full_batch_gradient(const ModelSpec& spec,
                                        const ParamStore& store,
                                        const Batch& batch) {
  ForwardCache cache;
  forward_loss(spec, store, batch, cache);
  return backward(spec, store, cache);
}

}  // namespace

double RunSummary::mean_final_perf() const {
  double s = 0.0;
  for (const auto& [_, v] : final_perf) s += v;
  return final_perf.empty() ? 0.0 : s / static_cast<double>(final_perf.size());
}

double RunSummary::mean_forgetting() const {
  double s = 0.0;
  for (const auto& [_, v] : forgetting) s += v;
  return forgetting.empty() ? 0.0 : s / static_cast<double>(forgetting.size());
}

nlohmann::json RunSummary::to_json() const {
  nlohmann::json doc;
  for (const auto& [id, v] : final_perf) {
    doc["final_perf"][std::to_string(id)] = v;
  }
  for (const auto& [id, v] : forgetting) {
    doc["forgetting_ratio"][std::to_string(id)] = v;
  }
  doc["mean_final_perf"] = mean_final_perf();
  doc["mean_forgetting_ratio"] = mean_forgetting();
  doc["avg_tgc"] = avg_tgc;
  doc["jaccard_vs_initial"] = jaccard_vs_initial;
  doc["flip_rates"] = flip_rates;
  doc["wall_seconds"] = wall_seconds;
  doc["config"] = config_echo;
  return doc;
}

RunSummary train_run(const RunConfig& config, std::uint64_t seed,
                     const TrainHooks* hooks) {
  const auto t_start = std::chrono::steady_clock::now();
  config.validate();

  const fs::path run_dir =
      fs::path(config.output_dir) / ("seed-" + std::to_string(seed));
  fs::create_directories(run_dir / "snapshots");

  Rng root(seed);
  Rng init_rng = root.substream("init");
  Rng tasks_rng = root.substream("tasks");
  Rng stream_rng = root.substream("stream");
  Rng data_rng = root.substream("data");
  Rng mask_rng = root.substream("mask");
  Rng probe_rng = root.substream("probe");
  Rng conflict_rng = root.substream("conflict-probe");

  const auto tasks = make_conflict_suite(
      tasks_rng, config.task_count, config.model.input_dim,
      config.model.output_dim, config.conflict_pairs, config.task_kind,
      config.task_noise_std, config.orth_noise);
  const auto stream = build_stream(tasks, config.ordering, stream_rng,
                                   config.steps_per_stage, config.eval_size);
  const std::uint64_t total_steps = stream.total_steps();

  ParamStore store = ParamStore::build(config.model.layout());
  store.gaussian_init(init_rng, config.init_scale);
  const std::size_t d = store.dim();

  MetricLog log((run_dir / "metrics.csv").string());
  write_partition_json((run_dir / "partition.json").string(),
                       store.partition());

  // Gradient conflict at the shared initialization, full batch of 512.
  double tgc_sum = 0.0;
  for (const auto& [i, j] : config.conflict_pairs) {
    const auto gi = full_batch_gradient(config.model, store,
                                        sample_batch(tasks[i], conflict_rng, 512));
    const auto gj = full_batch_gradient(config.model, store,
                                        sample_batch(tasks[j], conflict_rng, 512));
    const double cos = cosine_interference(gi, gj);
    const std::string pair = std::to_string(i) + "_" + std::to_string(j);
    log.row(0, -1, "", "cosine_init_" + pair, cos);
    log.row(0, -1, "", "tgc_init_" + pair, std::max(0.0, -cos));
    tgc_sum += std::max(0.0, -cos);
  }

  const bool dynamic = is_dynamic_mask_method(config.method);
  IsolationMask mask;
  mask.bits = PackedBits(d);
  mask.ratio = config.p;
  mask.strategy = strategy_for(config.method);

  if (config.method == Method::kStatic) {
    ProbeConfig probe{config.probe_steps, config.batch_size, config.beta,
                      config.optimizer};
    mask = probe_static_mask(config.model, store, tasks, probe, config.p,
                             probe_rng);
    save_mask_snapshot((run_dir / "snapshots" / snapshot_name(0)).string(),
                       mask);
    log.row(0, -1, "", "mask_popcount",
            static_cast<double>(mask.bits.popcount()));
  }

  SensitivityState sens(d, config.beta);
  AdamW opt(d, config.optimizer);
  const LrSchedule schedule{config.optimizer.base_lr, config.warmup_fraction,
                            total_steps, config.schedule};

  std::vector<IsolationMask> refresh_series;
  std::set<std::uint64_t> progress_marks;
  for (int q = 1; q <= 4; ++q) {
    progress_marks.insert(static_cast<std::uint64_t>(
        std::llround(static_cast<double>(total_steps) * q / 4.0)));
  }
  std::vector<PackedBits> progress_masks;

  PerfLedger ledger;
  std::uint64_t global_step = 0;
  for (const auto& stage : stream.stages) {
    if (config.reset_sensitivity_on_stage) {
      sens = SensitivityState(d, config.beta);
    }
    for (std::size_t s = 0; s < stage.step_budget; ++s) {
      ++global_step;
      const int task_id =
          stage.task_ids.size() == 1
              ? stage.task_ids[0]
              : stage.task_ids[data_rng.uniform_index(stage.task_ids.size())];
      const auto& task = tasks[static_cast<std::size_t>(task_id)];
      Batch batch = sample_batch(task, data_rng, config.batch_size);

      ForwardCache cache;
      double loss;
      std::vector<double> grad;
      try {
        loss = forward_loss(config.model, store, batch, cache);
        grad = backward(config.model, store, cache);
        accumulate(sens, grad);
      } catch (const std::exception& e) {
        throw std::runtime_error("run aborted at step " +
                                 std::to_string(global_step) + ": " + e.what());
      }

      if (dynamic && should_refresh(global_step, config.refresh_interval)) {
        std::vector<double> scores;
        if (mask.strategy == MaskStrategy::kGlobalRaw || !config.layer_norm) {
          scores = sens.s;
        } else {
          scores = normalize_layerwise(sens.s, store.partition());
        }
        IsolationMask next =
            generate_mask(scores, config.p, mask.strategy, store.partition(),
                          &mask_rng, global_step);
        const auto transition = diff_masks(mask, next);
        log.row(global_step, stage.id, "", "mask_locked",
                static_cast<double>(transition.locked.size()));
        log.row(global_step, stage.id, "", "mask_freed",
                static_cast<double>(transition.freed.size()));
        log.row(global_step, stage.id, "", "mask_popcount",
                static_cast<double>(next.bits.popcount()));
        save_mask_snapshot(
            (run_dir / "snapshots" / snapshot_name(global_step)).string(),
            next);
        refresh_series.push_back(next);
        mask = std::move(next);
      }

      const double lr = schedule.at(global_step);
      const auto delta = opt.delta(grad, store.values(), lr);
      apply_masked_update(store, delta, mask.bits);
      log.row(global_step, stage.id, std::to_string(task_id), "loss", loss);

      const bool stage_end = (s + 1 == stage.step_budget);
      const bool cadence_hit = config.snapshot_cadence > 0 &&
                               global_step % config.snapshot_cadence == 0;
      if (stage_end || cadence_hit) {
        for (const auto& t : tasks) {
          const double perf =
              evaluate(config.model, store, stream.eval_sets.at(t.id));
          log.row(global_step, stage.id, std::to_string(t.id), "perf", perf);
          if (ledger.has_initial(t.id)) {
            ledger.record_latest(t.id, perf);
          } else if (stage_end &&
                     std::find(stage.task_ids.begin(), stage.task_ids.end(),
                               t.id) != stage.task_ids.end()) {
            ledger.record_initial(t.id, perf);
          }
        }
      }

      if (progress_marks.count(global_step)) {
        progress_masks.push_back(mask.bits);
      }
      if (hooks && hooks->on_checkpoint &&
          std::find(hooks->checkpoint_steps.begin(),
                    hooks->checkpoint_steps.end(),
                    global_step) != hooks->checkpoint_steps.end()) {
        hooks->on_checkpoint(global_step, store, sens, stream);
      }
    }
  }

  RunSummary summary;
  summary.config_echo = config.to_json();
  summary.config_echo["seed"] = seed;
  for (const auto& t : tasks) {
    summary.final_perf[t.id] =
        evaluate(config.model, store, stream.eval_sets.at(t.id));
    if (ledger.has_initial(t.id) && ledger.initial(t.id) > 0.0) {
      summary.forgetting[t.id] = ledger.forgetting_ratio(t.id);
    }
  }
  summary.avg_tgc = config.conflict_pairs.empty()
                        ? 0.0
                        : tgc_sum / static_cast<double>(
                                        config.conflict_pairs.size());
  if (!refresh_series.empty()) {
    const auto& initial = refresh_series.front().bits;
    for (const auto& bits : progress_masks) {
      if (bits.popcount() > 0) {
        summary.jaccard_vs_initial.push_back(jaccard(bits, initial));
      }
    }
    if (refresh_series.size() >= 2) {
      std::vector<PackedBits> series;
      for (const auto& m : refresh_series) series.push_back(m.bits);
      for (const auto& [name, ranges] : quartile_buckets(store.partition())) {
        summary.flip_rates[name] = flip_rate(series, ranges);
      }
    }
  }
  summary.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();

  std::ofstream out(run_dir / "summary.json");
  out << summary.to_json().dump(2) << '\n';
  return summary;
}

nlohmann::json DriftReport::to_json() const {
  nlohmann::json doc;
  doc["steps"] = steps;
  doc["popcounts"] = popcounts;
  doc["jaccard_vs_initial"] = jaccard_vs_initial;
  doc["consecutive_hamming"] = consecutive_hamming;
  doc["locked_counts"] = locked_counts;
  doc["freed_counts"] = freed_counts;
  doc["flip_rates"] = flip_rates;
  return doc;
}

DriftReport analyze_snapshots(const std::string& dir) {
  fs::path base(dir);
  if (fs::is_directory(base / "snapshots")) base /= "snapshots";
  std::vector<std::string> files;
  if (fs::is_directory(base)) {
    for (const auto& entry : fs::directory_iterator(base)) {
      if (entry.path().extension() == ".epim") {
        files.push_back(entry.path().string());
      }
    }
  }
  std::sort(files.begin(), files.end());
  if (files.size() < 2) {
    throw std::runtime_error("need at least two snapshots in " + dir);
  }

  std::vector<IsolationMask> masks;
  for (const auto& f : files) masks.push_back(load_mask_snapshot(f));
  std::sort(masks.begin(), masks.end(),
            [](const IsolationMask& a, const IsolationMask& b) {
              return a.generated_at_step < b.generated_at_step;
            });

  DriftReport report;
  const auto& initial = masks.front().bits;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    report.steps.push_back(masks[i].generated_at_step);
    report.popcounts.push_back(masks[i].bits.popcount());
    report.jaccard_vs_initial.push_back(jaccard(masks[i].bits, initial));
    if (i > 0) {
      report.consecutive_hamming.push_back(
          hamming(masks[i - 1].bits, masks[i].bits));
      const auto t = diff_masks(masks[i - 1], masks[i]);
      report.locked_counts.push_back(t.locked.size());
      report.freed_counts.push_back(t.freed.size());
    }
  }

  auto partition =
      read_partition_json((fs::path(dir) / "partition.json").string());
  if (partition.empty()) {
    partition = {{"all", 0, masks.front().bits.size()}};
  }
  std::vector<PackedBits> series;
  for (const auto& m : masks) series.push_back(m.bits);
  for (const auto& [name, ranges] : quartile_buckets(partition)) {
    report.flip_rates[name] = flip_rate(series, ranges);
  }
  return report;
}

nlohmann::json DiagnoseReport::to_json() const {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& row : rows) {
    doc.push_back({{"stage", row.label},
                   {"step", row.step},
                   {"pearson", row.pearson},
                   {"spearman", row.spearman},
                   {"pearson_normalized", row.pearson_normalized},
                   {"spearman_normalized", row.spearman_normalized}});
  }
  return doc;
}

DiagnoseReport diagnose(const RunConfig& config, std::uint64_t seed,
                        std::size_t trials, std::size_t samples_per_group) {
  // Checkpoint placement: 25% / 50% / 100% of the step budget.
  std::uint64_t total = 0;
  {
    Rng tasks_rng = Rng(seed).substream("tasks");
    auto tasks = make_conflict_suite(
        tasks_rng, config.task_count, config.model.input_dim,
        config.model.output_dim, config.conflict_pairs, config.task_kind,
        config.task_noise_std, config.orth_noise);
    Rng stream_rng = Rng(seed).substream("stream");
    total = build_stream(tasks, config.ordering, stream_rng,
                         config.steps_per_stage, config.eval_size)
                .total_steps();
  }
  const std::vector<std::pair<std::string, std::uint64_t>> checkpoints = {
      {"early", std::max<std::uint64_t>(1, total / 4)},
      {"middle", std::max<std::uint64_t>(1, total / 2)},
      {"late", total}};

  DiagnoseReport report;
  Rng perturb_rng = Rng(seed).substream("perturb");

  TrainHooks hooks;
  for (const auto& [_, step] : checkpoints) {
    hooks.checkpoint_steps.push_back(step);
  }
  hooks.on_checkpoint = [&](std::uint64_t step, const ParamStore& store,
                            const SensitivityState& sens,
                            const TaskStream& stream) {
    ParamStore probe_store = store;
    // Stratified sample: up to samples_per_group indices per group.
    std::vector<std::size_t> indices;
    for (const auto& g : store.partition()) {
      std::vector<std::size_t> pool(g.length);
      for (std::size_t i = 0; i < g.length; ++i) pool[i] = g.offset + i;
      for (std::size_t i = pool.size(); i > 1; --i) {
        std::swap(pool[i - 1], pool[perturb_rng.uniform_index(i)]);
      }
      const std::size_t take = std::min(samples_per_group, pool.size());
      indices.insert(indices.end(), pool.begin(), pool.begin() + take);
    }
    const auto sigmas = perturbation_sigmas(probe_store);
    // Perturb on the eval set of the task being trained at this checkpoint:
    // the online sensitivity estimates importance for the current data
    // distribution, so that is the distribution the probe must use.
    int probe_task = stream.stages.front().task_ids.front();
    std::uint64_t acc = 0;
    for (const auto& stage : stream.stages) {
      acc += stage.step_budget;
      if (step <= acc) {
        probe_task = stage.task_ids.front();
        break;
      }
    }
    const Batch& probe_batch = stream.eval_sets.at(probe_task);
    const auto delta_loss = perturbation_sensitivity(
        config.model, probe_store, probe_batch, indices, sigmas, perturb_rng,
        trials);

    std::vector<double> raw, normalized_sel;
    const auto normalized = normalize_layerwise(sens.s, store.partition());
    for (auto j : indices) {
      raw.push_back(sens.s[j]);
      normalized_sel.push_back(normalized[j]);
    }
    DiagnoseRow row;
    row.step = step;
    for (const auto& [label, cp] : checkpoints) {
      if (cp == step) row.label = label;
    }
    std::tie(row.pearson, row.spearman) = correlate(raw, delta_loss);
    std::tie(row.pearson_normalized, row.spearman_normalized) =
        correlate(normalized_sel, delta_loss);
    report.rows.push_back(row);
  };

  train_run(config, seed, &hooks);

  const fs::path run_dir =
      fs::path(config.output_dir) / ("seed-" + std::to_string(seed));
  std::ofstream out(run_dir / "diagnosis.json");
  out << report.to_json().dump(2) << '\n';
  return report;
}

nlohmann::json sweep(const RunConfig& config, const std::string& axis,
                     const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("sweep needs values");
  nlohmann::json table = nlohmann::json::array();
  for (double value : values) {
    RunConfig cfg = config;
    std::ostringstream tag;
    if (axis == "p") {
      cfg.p = value;
      tag << "p-" << value;
    } else if (axis == "H") {
      cfg.refresh_interval = static_cast<std::uint64_t>(std::llround(value));
      tag << "H-" << cfg.refresh_interval;
    } else if (axis == "beta") {
      cfg.beta = value;
      tag << "beta-" << value;
    } else {
      throw std::invalid_argument("unknown sweep axis: " + axis);
    }
    cfg.output_dir =
        (fs::path(config.output_dir) / tag.str()).string();
    cfg.validate();

    double perf_sum = 0.0, fr_sum = 0.0, tgc_sum = 0.0;
    for (auto seed : cfg.seeds) {
      const auto summary = train_run(cfg, seed);
      perf_sum += summary.mean_final_perf();
      fr_sum += summary.mean_forgetting();
      tgc_sum += summary.avg_tgc;
    }
    const double n = static_cast<double>(cfg.seeds.size());
    table.push_back({{"axis", axis},
                     {"value", value},
                     {"seeds", cfg.seeds.size()},
                     {"mean_final_perf", perf_sum / n},
                     {"mean_forgetting_ratio", fr_sum / n},
                     {"mean_tgc", tgc_sum / n}});
  }
  fs::create_directories(config.output_dir);
  std::ofstream out(fs::path(config.output_dir) / "sweep.json");
  out << table.dump(2) << '\n';
  return table;
}

}  // namespace epi
