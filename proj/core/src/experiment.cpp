#include "idbr/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <tuple>
#include <optional>
#include <cstdlib>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "idbr/checkpoint.hpp"
#include "idbr/error.hpp"
#include "idbr/io.hpp"

namespace idbr {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

}  // namespace

MethodVariant parse_method_variant(const std::string& name) {
  MethodVariant v;
  v.name = name;
  if (name == "finetune") { v.method = Method::kFinetune; return v; }
  if (name == "replay") { v.method = Method::kReplay; return v; }
  if (name == "regularization") { v.method = Method::kRegularization; return v; }
  if (name == "mtl") { v.method = Method::kMtl; return v; }
  if (name == "idbr") { v.method = Method::kIdbr; return v; }
  v.method = Method::kIdbr;
  if (name == "idbr-no-nsp") { v.no_nsp = true; return v; }
  if (name == "idbr-no-task") { v.no_task = true; return v; }
  if (name == "idbr-reg-g-only") { v.reg_generic_only = true; return v; }
  if (name == "idbr-reg-s-only") { v.reg_specific_only = true; return v; }
  if (name == "idbr-random-select") { v.random_selection = true; return v; }
  throw ConfigError("unknown method `" + name + "`");
}

namespace {

struct ConfigField {
  const char* key;
  std::function<void(TrainConfig&, CorpusOptions&, const json&)> apply;
};

template <typename T, typename Member>
auto train_field(Member member) {
  return [member](TrainConfig& c, CorpusOptions&, const json& v) {
    c.*member = v.get<T>();
  };
}

template <typename T, typename Member>
auto corpus_field(Member member) {
  return [member](TrainConfig&, CorpusOptions& c, const json& v) {
    c.*member = v.get<T>();
  };
}

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = {
      {"learning_rate", train_field<double>(&TrainConfig::learning_rate)},
      {"task_head_learning_rate",
       train_field<double>(&TrainConfig::task_head_learning_rate)},
      {"weight_decay", train_field<double>(&TrainConfig::weight_decay)},
      {"batch_size", train_field<int>(&TrainConfig::batch_size)},
      {"replay_frequency", train_field<int>(&TrainConfig::replay_frequency)},
      {"store_ratio", train_field<double>(&TrainConfig::store_ratio)},
      {"epochs_per_task", train_field<int>(&TrainConfig::epochs_per_task)},
      {"lambda_generic_memory",
       [](TrainConfig& c, CorpusOptions&, const json& v) {
         c.weights.generic_memory = v.get<double>();
       }},
      {"lambda_specific_memory",
       [](TrainConfig& c, CorpusOptions&, const json& v) {
         c.weights.specific_memory = v.get<double>();
       }},
      {"lambda_generic_current",
       [](TrainConfig& c, CorpusOptions&, const json& v) {
         c.weights.generic_current = v.get<double>();
       }},
      {"lambda_specific_current",
       [](TrainConfig& c, CorpusOptions&, const json& v) {
         c.weights.specific_current = v.get<double>();
       }},
      {"reg_lambda_memory", train_field<double>(&TrainConfig::reg_lambda_memory)},
      {"reg_lambda_current",
       train_field<double>(&TrainConfig::reg_lambda_current)},
      {"squared_reg", train_field<bool>(&TrainConfig::squared_reg)},
      {"fixed_midpoint_split",
       train_field<bool>(&TrainConfig::fixed_midpoint_split)},
      {"stratified_replay", train_field<bool>(&TrainConfig::stratified_replay)},
      {"mask_eval_to_task_block",
       train_field<bool>(&TrainConfig::mask_eval_to_task_block)},
      {"embed_dim", train_field<int>(&TrainConfig::embed_dim)},
      {"hidden_dim", train_field<int>(&TrainConfig::hidden_dim)},
      {"encoder_dim", train_field<int>(&TrainConfig::encoder_dim)},
      {"feature_dim", train_field<int>(&TrainConfig::feature_dim)},
      {"position_modulation",
       train_field<bool>(&TrainConfig::position_modulation)},
      {"max_vocab", corpus_field<size_t>(&CorpusOptions::max_vocab)},
      {"max_length", corpus_field<size_t>(&CorpusOptions::max_length)},
  };
  return fields;
}

void apply_config_object(const json& obj, TrainConfig& train,
                         CorpusOptions& corpus) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const ConfigField& f : config_fields()) {
      if (key == f.key) {
        try {
          f.apply(train, corpus, value);
        } catch (const json::exception& e) {
          throw ConfigError("config field `" + key + "`: " + e.what());
        }
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError("unknown config field `" + key + "`");
  }
}

SyntheticSpec parse_synthetic(const json& obj, int num_classes) {
  SyntheticSpec s;
  s.num_classes = num_classes;
  for (const auto& [key, value] : obj.items()) {
    if (key == "train_per_class") s.train_per_class = value.get<int>();
    else if (key == "val_per_class") s.val_per_class = value.get<int>();
    else if (key == "test_per_class") s.test_per_class = value.get<int>();
    else if (key == "vocab_block") s.vocab_block = value.get<int>();
    else if (key == "shared_vocabulary") s.shared_vocabulary = value.get<bool>();
    else if (key == "marker_rate") s.marker_rate = value.get<double>();
    else if (key == "class_word_rate") s.class_word_rate = value.get<double>();
    else if (key == "filler_words") s.filler_words = value.get<int>();
    else if (key == "class_words") s.class_words = value.get<int>();
    else if (key == "marker_words") s.marker_words = value.get<int>();
    else if (key == "min_length") s.min_length = value.get<int>();
    else if (key == "max_length") s.max_length = value.get<int>();
    else throw ConfigError("unknown synthetic field `" + key + "`");
  }
  return s;
}

CsvSpec parse_csv(const json& obj) {
  CsvSpec s;
  for (const auto& [key, value] : obj.items()) {
    if (key == "train") s.train_path = value.get<std::string>();
    else if (key == "test") s.test_path = value.get<std::string>();
    else if (key == "train_per_class") s.train_per_class = value.get<int>();
    else if (key == "val_per_class") s.val_per_class = value.get<int>();
    else throw ConfigError("unknown csv field `" + key + "`");
  }
  if (s.train_path.empty() || s.test_path.empty()) {
    throw ConfigError("csv task needs both `train` and `test` paths");
  }
  return s;
}

void apply_tasks_object(const json& obj, TaskRegistry& registry) {
  for (const auto& [name, body] : obj.items()) {
    TaskSpec spec;
    spec.name = name;
    if (!body.contains("num_classes")) {
      throw ConfigError("task `" + name + "`: missing num_classes");
    }
    spec.num_classes = body.at("num_classes").get<int>();
    if (body.contains("merge_group")) {
      spec.merge_group = body.at("merge_group").get<std::string>();
    }
    const bool has_syn = body.contains("synthetic");
    const bool has_csv = body.contains("csv");
    if (has_syn == has_csv) {
      throw ConfigError("task `" + name +
                        "`: exactly one of `synthetic` or `csv` is required");
    }
    if (has_syn) {
      spec.source = parse_synthetic(body.at("synthetic"), spec.num_classes);
    } else {
      spec.source = parse_csv(body.at("csv"));
    }
    registry.add(std::move(spec));
  }
}

json parse_override_value(const std::string& raw) {
  json parsed = json::parse(raw, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded()) return json(raw);
  return parsed;
}

std::vector<std::string> split_csv_list(const std::string& raw) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : raw) {
    if (c == ',' && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

void apply_overrides(json& root, std::span<const std::string> overrides) {
  for (const std::string& ov : overrides) {
    const size_t eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override `" + ov + "` is not of the form key=value");
    }
    const std::string key = ov.substr(0, eq);
    const std::string value = ov.substr(eq + 1);
    if (key == "orders") {
      // Custom orders contain commas, so multiple orders separate on ';'.
      json arr = json::array();
      std::string cur;
      for (char c : value + ";") {
        if (c == ';') {
          if (!cur.empty()) arr.push_back(cur);
          cur.clear();
        } else {
          cur.push_back(c);
        }
      }
      root[key] = arr;
    } else if (key == "methods") {
      json arr = json::array();
      for (const std::string& item : split_csv_list(value)) arr.push_back(item);
      root[key] = arr;
    } else if (key == "seeds") {
      json arr = json::array();
      for (const std::string& item : split_csv_list(value)) {
        try {
          arr.push_back(std::stoull(item));
        } catch (const std::exception&) {
          throw ConfigError("override seeds: `" + item + "` is not an integer");
        }
      }
      root[key] = arr;
    } else if (key == "output_dir" || key == "data_root") {
      root[key] = value;
    } else if (key == "save_checkpoints") {
      root[key] = parse_override_value(value);
    } else {
      root["config"][key] = parse_override_value(value);
    }
  }
}

}  // namespace

ExperimentSpec ExperimentSpec::from_file(const fs::path& path,
                                         std::span<const std::string> overrides) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("cannot read experiment spec: ") + e.what());
  }
  return from_json_text(text, overrides);
}

ExperimentSpec ExperimentSpec::from_json_text(
    const std::string& text, std::span<const std::string> overrides) {
  json root = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (root.is_discarded() || !root.is_object()) {
    throw ConfigError("experiment spec is not a JSON object");
  }
  apply_overrides(root, overrides);

  ExperimentSpec spec;
  for (const auto& [key, value] : root.items()) {
    if (key == "orders") {
      for (const json& v : value) {
        spec.orders.push_back(v.is_string() ? v.get<std::string>()
                                            : v.dump());
      }
    } else if (key == "methods") {
      for (const json& v : value) spec.methods.push_back(v.get<std::string>());
    } else if (key == "seeds") {
      for (const json& v : value) spec.seeds.push_back(v.get<uint64_t>());
    } else if (key == "output_dir") {
      spec.output_dir = value.get<std::string>();
    } else if (key == "data_root") {
      if (!value.is_null()) spec.corpus.data_root = value.get<std::string>();
    } else if (key == "save_checkpoints") {
      spec.save_checkpoints = value.get<bool>();
    } else if (key == "config") {
      apply_config_object(value, spec.base, spec.corpus);
    } else if (key == "tasks") {
      apply_tasks_object(value, spec.registry);
    } else {
      throw ConfigError("unknown spec field `" + key + "`");
    }
  }
  if (spec.corpus.data_root.empty()) {
    if (const char* env = std::getenv("IDBR_DATA_ROOT")) {
      spec.corpus.data_root = env;
    }
  }
  spec.validate();
  return spec;
}

void ExperimentSpec::validate() const {
  if (orders.empty()) throw ConfigError("spec: `orders` must be non-empty");
  if (methods.empty()) throw ConfigError("spec: `methods` must be non-empty");
  if (seeds.empty()) throw ConfigError("spec: `seeds` must be non-empty");
  if (output_dir.empty()) throw ConfigError("spec: `output_dir` is required");
  for (const std::string& order : orders) {
    for (const std::string& task : resolve_order(order)) {
      if (!registry.contains(task)) {
        throw ConfigError("order `" + order + "` references unknown task `" +
                          task + "`");
      }
    }
  }
  for (const std::string& m : methods) {
    const MethodVariant variant = parse_method_variant(m);
    TrainConfig cfg = base;
    cfg.method = variant.method;
    cfg.no_nsp = variant.no_nsp;
    cfg.no_task = variant.no_task;
    cfg.reg_generic_only = variant.reg_generic_only;
    cfg.reg_specific_only = variant.reg_specific_only;
    cfg.random_selection = variant.random_selection;
    cfg.validate();
  }
}

std::string ExperimentSpec::canonical_json() const {
  json j;
  j["orders"] = orders;
  j["methods"] = methods;
  j["seeds"] = seeds;
  j["config"] = {
      {"learning_rate", base.learning_rate},
      {"task_head_learning_rate", base.task_head_learning_rate},
      {"weight_decay", base.weight_decay},
      {"batch_size", base.batch_size},
      {"replay_frequency", base.replay_frequency},
      {"store_ratio", base.store_ratio},
      {"epochs_per_task", base.epochs_per_task},
      {"lambda_generic_memory", base.weights.generic_memory},
      {"lambda_specific_memory", base.weights.specific_memory},
      {"lambda_generic_current", base.weights.generic_current},
      {"lambda_specific_current", base.weights.specific_current},
      {"reg_lambda_memory", base.reg_lambda_memory},
      {"reg_lambda_current", base.reg_lambda_current},
      {"squared_reg", base.squared_reg},
      {"fixed_midpoint_split", base.fixed_midpoint_split},
      {"stratified_replay", base.stratified_replay},
      {"mask_eval_to_task_block", base.mask_eval_to_task_block},
      {"embed_dim", base.embed_dim},
      {"hidden_dim", base.hidden_dim},
      {"encoder_dim", base.encoder_dim},
      {"feature_dim", base.feature_dim},
      {"position_modulation", base.position_modulation},
      {"max_vocab", corpus.max_vocab},
      {"max_length", corpus.max_length},
      {"data_root", corpus.data_root},
  };
  return j.dump();
}

namespace {

std::string sanitize_component(const std::string& raw) {
  std::string out;
  for (char c : raw) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' ||
                    c == '_' || c == '.';
    out.push_back(ok ? c : '-');
  }
  return out;
}

}  // namespace

fs::path cell_directory(const fs::path& output_dir, const std::string& order,
                        const std::string& method, uint64_t seed) {
  return output_dir / ("order-" + sanitize_component(order)) /
         ("method-" + sanitize_component(method)) /
         ("seed-" + std::to_string(seed));
}

namespace {

json step_record_json(const StepRecord& r) {
  json j;
  j["task"] = r.task;
  j["epoch"] = r.epoch;
  j["step"] = r.step;
  j["source"] = r.source == BatchSource::kMemory ? "memory" : "current";
  if (r.memory_batch_index >= 0) j["memory_batch"] = r.memory_batch_index;
  j["loss_cls"] = r.losses.cls;
  j["loss_nsp"] = r.losses.nsp;
  j["loss_task"] = r.losses.task;
  j["loss_reg_g"] = r.losses.reg_generic;
  j["loss_reg_s"] = r.losses.reg_specific;
  j["loss_reg_combined"] = r.losses.reg_combined;
  j["total"] = r.losses.total;
  return j;
}

json matrix_json(const AccuracyMatrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.num_rows(); ++i) rows.push_back(m.row(i));
  return rows;
}

AccuracyMatrix matrix_from_json(const json& rows) {
  AccuracyMatrix m;
  for (const json& row : rows) m.append_row(row.get<std::vector<double>>());
  return m;
}

struct CellTask {
  std::string order;
  std::string method;
  uint64_t seed;
};

TrainConfig cell_train_config(const ExperimentSpec& spec,
                              const MethodVariant& variant, uint64_t seed) {
  TrainConfig cfg = spec.base;
  cfg.method = variant.method;
  cfg.no_nsp = variant.no_nsp;
  cfg.no_task = variant.no_task;
  cfg.reg_generic_only = variant.reg_generic_only;
  cfg.reg_specific_only = variant.reg_specific_only;
  cfg.random_selection = variant.random_selection;
  cfg.seed = seed;
  return cfg;
}

CheckpointMeta checkpoint_meta(const TaskSequence& seq,
                               const std::string& method, uint64_t seed,
                               int completed) {
  CheckpointMeta meta;
  meta.method = method;
  meta.seed = seed;
  meta.completed_tasks = completed;
  meta.order_id = seq.order_id;
  for (const TaskDescriptor& t : seq.tasks) {
    meta.tasks.push_back(
        CheckpointTaskInfo{t.name, t.num_classes, t.label_offset});
  }
  meta.vocab_hash = seq.tokenizer.vocab_hash();
  return meta;
}

json buffer_json(const ReplayBuffer& buffer) {
  json entries = json::array();
  for (const BufferEntry& e : buffer.entries()) {
    entries.push_back({{"id", e.example.id}, {"task", e.source_task}});
  }
  return entries;
}

ReplayBuffer buffer_from_json(const json& entries, const TaskSequence& seq) {
  std::map<uint64_t, const Example*> by_id;
  for (const TaskDescriptor& task : seq.tasks) {
    for (const Example& ex : task.train) by_id[ex.id] = &ex;
  }
  ReplayBuffer buffer;
  // Re-store in contiguous per-task runs so the entry order is preserved.
  std::vector<Example> run;
  int run_task = -1;
  auto flush = [&] {
    if (!run.empty()) buffer.store(run, run_task);
    run.clear();
  };
  for (const json& e : entries) {
    const uint64_t id = e.at("id").get<uint64_t>();
    const int task = e.at("task").get<int>();
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw std::runtime_error("buffer resume: unknown example id " +
                               std::to_string(id));
    }
    if (task != run_task) {
      flush();
      run_task = task;
    }
    run.push_back(*it->second);
  }
  flush();
  return buffer;
}

enum class CellStatus { kExecuted, kSkipped, kFailed };

CellStatus run_cell(const ExperimentSpec& spec, const CellTask& cell) {
  const fs::path dir =
      cell_directory(spec.output_dir, cell.order, cell.method, cell.seed);
  const uint64_t config_hash = fnv1a64(spec.canonical_json());

  const fs::path manifest_path = dir / "manifest.json";
  if (fs::exists(manifest_path)) {
    const json manifest = json::parse(read_text_file(manifest_path));
    if (manifest.value("status", "") == "complete" &&
        manifest.value("config_hash", uint64_t{0}) == config_hash) {
      return CellStatus::kSkipped;
    }
  }
  fs::create_directories(dir);

  const MethodVariant variant = parse_method_variant(cell.method);
  TrainConfig cfg = cell_train_config(spec, variant, cell.seed);

  CorpusOptions corpus = spec.corpus;
  corpus.data_seed = cell.seed;
  const TaskSequence sequence =
      build_task_sequence(cell.order, spec.registry, corpus);

  // Task-boundary resume: pick up from the last checkpointed boundary if
  // the configuration still matches.
  std::optional<ResumeState> resume;
  const fs::path state_path = dir / "state.json";
  if (spec.save_checkpoints && fs::exists(state_path)) {
    const json state = json::parse(read_text_file(state_path));
    const int completed = state.value("completed_tasks", 0);
    const fs::path ckpt = dir / ("task-" + std::to_string(completed) + ".ckpt");
    if (state.value("config_hash", uint64_t{0}) == config_hash &&
        completed > 0 && fs::exists(ckpt)) {
      Checkpoint loaded = load_checkpoint(ckpt);
      ResumeState rs{std::move(loaded.model),
                     buffer_from_json(state.at("buffer"), sequence),
                     matrix_from_json(state.at("matrix")), completed};
      resume.emplace(std::move(rs));
    }
  }

  std::ofstream steps_out(dir / "steps.jsonl",
                          resume ? std::ios::app : std::ios::trunc);
  if (!steps_out) {
    throw std::runtime_error("cannot write " + (dir / "steps.jsonl").string());
  }

  Trainer trainer = resume ? Trainer(sequence, cfg, std::move(*resume))
                           : Trainer(sequence, cfg);
  trainer.set_step_sink([&steps_out](const StepRecord& r) {
    steps_out << step_record_json(r).dump() << '\n';
  });
  trainer.set_boundary_hook([&](const ResumeState& state) {
    if (!spec.save_checkpoints) return;
    save_checkpoint(
        dir / ("task-" + std::to_string(state.completed_tasks) + ".ckpt"),
        state.model, sequence.tokenizer,
        checkpoint_meta(sequence, cell.method, cell.seed,
                        state.completed_tasks));
    json st;
    st["config_hash"] = config_hash;
    st["completed_tasks"] = state.completed_tasks;
    st["matrix"] = matrix_json(state.matrix);
    st["buffer"] = buffer_json(state.buffer);
    write_text_file(dir / "state.json", st.dump(2));
  });

  const RunResult result = trainer.run();
  steps_out.flush();

  write_text_file(dir / "matrix.csv", result.matrix.to_csv());

  json metrics;
  metrics["order"] = cell.order;
  metrics["method"] = cell.method;
  metrics["seed"] = cell.seed;
  metrics["order_length"] = sequence.tasks.size();
  json task_names = json::array();
  for (const TaskDescriptor& t : sequence.tasks) task_names.push_back(t.name);
  metrics["task_names"] = task_names;
  metrics["matrix"] = matrix_json(result.matrix);
  json averages = json::array();
  for (int k = 1; k <= result.matrix.num_rows(); ++k) {
    averages.push_back(average_accuracy(result.matrix, k));
  }
  metrics["average_accuracy"] = averages;
  metrics["final_average_accuracy"] =
      average_accuracy(result.matrix, result.matrix.num_rows());
  json forget = json::object();
  if (cfg.method != Method::kMtl) {
    for (int k = 2; k <= result.matrix.num_rows(); ++k) {
      forget[std::to_string(k)] = forgetting(result.matrix, k);
    }
  }
  metrics["forgetting"] = forget;
  write_text_file(dir / "metrics.json", metrics.dump(2));

  save_checkpoint(dir / "final.ckpt", result.model, sequence.tokenizer,
                  checkpoint_meta(sequence, cell.method, cell.seed,
                                  trainer.completed_tasks()));

  json manifest;
  manifest["status"] = "complete";
  manifest["order"] = cell.order;
  manifest["method"] = cell.method;
  manifest["seed"] = cell.seed;
  manifest["config_hash"] = config_hash;
  manifest["order_length"] = sequence.tasks.size();
  manifest["final_average_accuracy"] =
      metrics["final_average_accuracy"].get<double>();
  write_text_file(manifest_path, manifest.dump(2));
  return CellStatus::kExecuted;
}

}  // namespace

SweepOutcome run_experiment(const ExperimentSpec& spec, int jobs) {
  spec.validate();
  if (jobs < 1) throw ConfigError("jobs must be >= 1");

  std::vector<CellTask> cells;
  for (const std::string& order : spec.orders) {
    for (const std::string& method : spec.methods) {
      for (uint64_t seed : spec.seeds) {
        cells.push_back(CellTask{order, method, seed});
      }
    }
  }

  SweepOutcome outcome;
  std::mutex mutex;
  std::atomic<size_t> next{0};

  auto worker = [&] {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const CellTask& cell = cells[i];
      CellStatus status = CellStatus::kFailed;
      std::string error;
      try {
        status = run_cell(spec, cell);
      } catch (const std::exception& e) {
        error = e.what();
      }
      std::lock_guard<std::mutex> lock(mutex);
      switch (status) {
        case CellStatus::kExecuted: ++outcome.executed; break;
        case CellStatus::kSkipped: ++outcome.skipped; break;
        case CellStatus::kFailed: {
          ++outcome.failed;
          std::cerr << "[sweep] cell order=" << cell.order
                    << " method=" << cell.method << " seed=" << cell.seed
                    << " failed: " << error << '\n';
          const fs::path dir = cell_directory(spec.output_dir, cell.order,
                                              cell.method, cell.seed);
          std::error_code ec;
          fs::create_directories(dir, ec);
          if (!ec) {
            json failure;
            failure["status"] = "failed";
            failure["error"] = error;
            write_text_file(dir / "failure.json", failure.dump(2));
          }
          break;
        }
      }
    }
  };

  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  if (outcome.failed == 0) {
    write_report(spec.output_dir);
  }
  return outcome;
}

namespace {

struct CellMetrics {
  std::string order;
  std::string method;
  uint64_t seed = 0;
  size_t order_length = 0;
  double final_average_accuracy = 0.0;
  std::map<int, double> forgetting;  // after k tasks
};

std::vector<CellMetrics> scan_cells(const fs::path& results_dir) {
  std::vector<CellMetrics> cells;
  if (!fs::exists(results_dir)) {
    throw ConfigError("results directory does not exist: " +
                      results_dir.string());
  }
  for (const auto& entry : fs::recursive_directory_iterator(results_dir)) {
    if (!entry.is_regular_file() ||
        entry.path().filename() != "metrics.json") {
      continue;
    }
    const json m = json::parse(read_text_file(entry.path()));
    CellMetrics c;
    c.order = m.at("order").get<std::string>();
    c.method = m.at("method").get<std::string>();
    c.seed = m.at("seed").get<uint64_t>();
    c.order_length = m.at("order_length").get<size_t>();
    c.final_average_accuracy = m.at("final_average_accuracy").get<double>();
    for (const auto& [k, v] : m.at("forgetting").items()) {
      c.forgetting[std::stoi(k)] = v.get<double>();
    }
    cells.push_back(std::move(c));
  }
  std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) {
    return std::tie(a.method, a.order, a.seed) <
           std::tie(b.method, b.order, b.seed);
  });
  return cells;
}

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;
  size_t count = 0;
};

Aggregate aggregate_values(const std::vector<double>& values) {
  Aggregate a;
  a.count = values.size();
  if (values.empty()) return a;
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return a;
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * fraction);
  return buf;
}

}  // namespace

void write_report(const fs::path& results_dir) {
  const std::vector<CellMetrics> cells = scan_cells(results_dir);
  if (cells.empty()) {
    throw ConfigError("no completed result cells under " +
                      results_dir.string());
  }

  std::vector<std::string> methods;
  std::vector<std::string> orders;
  std::map<std::string, size_t> order_length;
  for (const CellMetrics& c : cells) {
    if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) {
      methods.push_back(c.method);
    }
    if (std::find(orders.begin(), orders.end(), c.order) == orders.end()) {
      orders.push_back(c.order);
    }
    order_length[c.order] = c.order_length;
  }
  std::sort(orders.begin(), orders.end(),
            [&](const std::string& a, const std::string& b) {
              return std::tie(order_length[a], a) <
                     std::tie(order_length[b], b);
            });
  // Stable method presentation order, baselines first.
  const std::vector<std::string> preferred = {
      "finetune",        "replay",          "regularization",
      "idbr-no-nsp",     "idbr-no-task",    "idbr-reg-s-only",
      "idbr-reg-g-only", "idbr-random-select", "idbr",
      "mtl"};
  std::stable_sort(methods.begin(), methods.end(),
                   [&](const std::string& a, const std::string& b) {
                     auto rank = [&](const std::string& m) {
                       auto it = std::find(preferred.begin(), preferred.end(), m);
                       return std::distance(preferred.begin(), it);
                     };
                     return rank(a) < rank(b);
                   });

  auto accuracy_cells = [&](const std::string& method,
                            const std::string& order) {
    std::vector<double> values;
    for (const CellMetrics& c : cells) {
      if (c.method == method && c.order == order) {
        values.push_back(c.final_average_accuracy);
      }
    }
    return values;
  };

  // Long-format aggregate CSV (fractions, full precision).
  std::string acc_csv = "method,order,seeds,mean,stddev\n";
  for (const std::string& m : methods) {
    for (const std::string& o : orders) {
      const Aggregate a = aggregate_values(accuracy_cells(m, o));
      if (a.count == 0) continue;
      acc_csv += m + "," + o + "," + std::to_string(a.count) + "," +
                 format_double(a.mean) + "," + format_double(a.stddev) + "\n";
    }
  }
  write_text_file(results_dir / "aggregate_accuracy.csv", acc_csv);

  std::string forget_csv = "method,order,after_tasks,seeds,mean,stddev\n";
  for (const std::string& m : methods) {
    for (const std::string& o : orders) {
      std::set<int> ks;
      for (const CellMetrics& c : cells) {
        if (c.method == m && c.order == o) {
          for (const auto& [k, v] : c.forgetting) ks.insert(k);
        }
      }
      for (int k : ks) {
        std::vector<double> values;
        for (const CellMetrics& c : cells) {
          if (c.method == m && c.order == o && c.forgetting.count(k)) {
            values.push_back(c.forgetting.at(k));
          }
        }
        const Aggregate a = aggregate_values(values);
        forget_csv += m + "," + o + "," + std::to_string(k) + "," +
                      std::to_string(a.count) + "," + format_double(a.mean) +
                      "," + format_double(a.stddev) + "\n";
      }
    }
  }
  write_text_file(results_dir / "aggregate_forgetting.csv", forget_csv);

  // Markdown report: accuracy tables grouped by order length, one
  // forgetting table per method, ablation sections when present.
  std::ostringstream md;
  md << "# Results\n\n";
  md << "Averaged accuracy after training on the last task (percent, mean "
        "over seeds; +- is one standard deviation).\n";

  std::set<size_t> lengths;
  for (const std::string& o : orders) lengths.insert(order_length[o]);
  for (size_t len : lengths) {
    std::vector<std::string> group;
    for (const std::string& o : orders) {
      if (order_length[o] == len) group.push_back(o);
    }
    md << "\n## Length-" << len << " task sequences\n\n";
    md << "| Method |";
    for (const std::string& o : group) md << " " << o << " |";
    md << " Average |\n|---|";
    for (size_t i = 0; i < group.size() + 1; ++i) md << "---|";
    md << "\n";
    for (const std::string& m : methods) {
      std::vector<double> means;
      std::string row = "| " + m + " |";
      bool any = false;
      for (const std::string& o : group) {
        const Aggregate a = aggregate_values(accuracy_cells(m, o));
        if (a.count == 0) {
          row += " - |";
        } else {
          any = true;
          means.push_back(a.mean);
          row += " " + percent(a.mean);
          if (a.count > 1) row += " +- " + percent(a.stddev);
          row += " |";
        }
      }
      const Aggregate avg = aggregate_values(means);
      row += avg.count ? " " + percent(avg.mean) + " |" : " - |";
      if (any) md << row << "\n";
    }
  }

  for (const std::string& m : methods) {
    std::set<int> ks;
    for (const CellMetrics& c : cells) {
      if (c.method == m) {
        for (const auto& [k, v] : c.forgetting) ks.insert(k);
      }
    }
    if (ks.empty()) continue;
    md << "\n## Forgetting (" << m << ")\n\n| Checkpoint |";
    for (const std::string& o : orders) md << " " << o << " |";
    md << " Average |\n|---|";
    for (size_t i = 0; i < orders.size() + 1; ++i) md << "---|";
    md << "\n";
    for (int k : ks) {
      md << "| After " << k << " tasks |";
      std::vector<double> means;
      for (const std::string& o : orders) {
        std::vector<double> values;
        for (const CellMetrics& c : cells) {
          if (c.method == m && c.order == o && c.forgetting.count(k)) {
            values.push_back(c.forgetting.at(k));
          }
        }
        const Aggregate a = aggregate_values(values);
        if (a.count == 0) {
          md << " - |";
        } else {
          means.push_back(a.mean);
          md << " " << percent(a.mean) << " |";
        }
      }
      const Aggregate avg = aggregate_values(means);
      md << (avg.count ? " " + percent(avg.mean) + " |" : " - |") << "\n";
    }
  }

  auto subset_table = [&](const std::string& title,
                          const std::vector<std::string>& rows) {
    std::vector<std::string> present;
    for (const std::string& m : rows) {
      if (std::find(methods.begin(), methods.end(), m) != methods.end()) {
        present.push_back(m);
      }
    }
    if (present.size() < 2) return;
    md << "\n## " << title << "\n\n| Method |";
    for (const std::string& o : orders) md << " " << o << " |";
    md << " Average |\n|---|";
    for (size_t i = 0; i < orders.size() + 1; ++i) md << "---|";
    md << "\n";
    for (const std::string& m : present) {
      md << "| " << m << " |";
      std::vector<double> means;
      for (const std::string& o : orders) {
        const Aggregate a = aggregate_values(accuracy_cells(m, o));
        if (a.count == 0) {
          md << " - |";
        } else {
          means.push_back(a.mean);
          md << " " << percent(a.mean) << " |";
        }
      }
      const Aggregate avg = aggregate_values(means);
      md << (avg.count ? " " + percent(avg.mean) + " |" : " - |") << "\n";
    }
  };

  subset_table("Ablation: auxiliary tasks",
               {"regularization", "idbr-no-nsp", "idbr-no-task", "idbr"});
  subset_table("Ablation: regularized spaces",
               {"idbr-reg-s-only", "idbr-reg-g-only", "idbr"});
  subset_table("Ablation: memory selection rule",
               {"idbr-random-select", "idbr"});

  write_text_file(results_dir / "report.md", md.str());
}

}  // namespace idbr
