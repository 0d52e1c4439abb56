#include "idbr/trainer.hpp"

#include <algorithm>
#include <stdexcept>

#include "idbr/error.hpp"

namespace idbr {

std::string method_name(Method method) {
  switch (method) {
    case Method::kFinetune: return "finetune";
    case Method::kReplay: return "replay";
    case Method::kRegularization: return "regularization";
    case Method::kIdbr: return "idbr";
    case Method::kMtl: return "mtl";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  if (replay_frequency < 1) {
    throw ConfigError("replay_frequency must be >= 1");
  }
  if (store_ratio < 0.0 || store_ratio > 1.0) {
    throw ConfigError("store_ratio must lie in [0, 1]");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs_per_task < 1) throw ConfigError("epochs_per_task must be >= 1");
  if (learning_rate <= 0.0 || task_head_learning_rate <= 0.0) {
    throw ConfigError("learning rates must be positive");
  }
  const bool has_ablation = no_nsp || no_task || reg_generic_only ||
                            reg_specific_only || random_selection;
  if (has_ablation && method != Method::kIdbr) {
    throw ConfigError("ablation flags are only valid with method=idbr");
  }
  if (reg_generic_only && reg_specific_only) {
    throw ConfigError("reg_generic_only and reg_specific_only are exclusive");
  }
}

SnapshotStore compute_snapshots(const Model& frozen_previous,
                                std::span<const Example* const> examples) {
  SnapshotStore store;
  for (const Example* ex : examples) {
    const Representations rep = frozen_previous.represent(ex->tokens);
    store.put(ex->id, SnapshotStore::Entry{rep.generic, rep.specific});
  }
  store.freeze();
  return store;
}

ModelConfig Trainer::model_config_for(const TaskSequence& sequence) const {
  ModelConfig mc;
  mc.vocab_size = static_cast<int>(sequence.tokenizer.vocab_size());
  mc.embed_dim = config_.embed_dim;
  mc.hidden_dim = config_.hidden_dim;
  mc.encoder_dim = config_.encoder_dim;
  mc.feature_dim = config_.feature_dim;
  mc.num_tasks = static_cast<int>(sequence.size());
  mc.num_classes = sequence.total_classes;
  // Canonical max length plus the separator token, with a little slack.
  mc.max_positions = static_cast<int>(sequence.tokenizer.max_length()) + 2;
  mc.position_modulation = config_.position_modulation;
  mc.init_seed = derive_seed(config_.seed, "init");
  return mc;
}

Trainer::Trainer(const TaskSequence& sequence, const TrainConfig& config)
    : sequence_(&sequence),
      config_(config),
      model_((config.validate(), model_config_for(sequence))),
      previous_model_(model_) {
  if (sequence.tasks.empty()) {
    throw ConfigError("task sequence is empty");
  }
}

Trainer::Trainer(const TaskSequence& sequence, const TrainConfig& config,
                 ResumeState resume)
    : sequence_(&sequence),
      config_(config),
      model_((config.validate(), std::move(resume.model))),
      previous_model_(model_),
      buffer_(std::move(resume.buffer)),
      matrix_(std::move(resume.matrix)),
      completed_tasks_(resume.completed_tasks) {
  if (completed_tasks_ < 0 || completed_tasks_ > num_tasks()) {
    throw ConfigError("resume state is inconsistent with the sequence");
  }
}

bool Trainer::uses_memory() const {
  switch (config_.method) {
    case Method::kReplay:
    case Method::kRegularization:
    case Method::kIdbr:
      return true;
    default:
      return false;
  }
}

bool Trainer::uses_regularization() const {
  return config_.method == Method::kRegularization ||
         config_.method == Method::kIdbr;
}

Trainer::ResolvedLoss Trainer::resolve_loss(int task, BatchSource source) const {
  ResolvedLoss out;
  LossConfig& lc = out.config;
  const bool memory = source == BatchSource::kMemory;

  switch (config_.method) {
    case Method::kFinetune:
    case Method::kReplay:
    case Method::kMtl:
      lc.include_nsp = false;
      lc.include_task = false;
      break;
    case Method::kRegularization:
      lc.include_nsp = false;
      lc.include_task = false;
      if (task >= 2) {
        lc.lambda_combined =
            memory ? config_.reg_lambda_memory : config_.reg_lambda_current;
      }
      break;
    case Method::kIdbr:
      lc.include_nsp = !config_.no_nsp;
      lc.include_task = !config_.no_task;
      if (task >= 2) {
        if (!config_.reg_specific_only) {
          lc.lambda_generic = memory ? config_.weights.generic_memory
                                     : config_.weights.generic_current;
        }
        if (!config_.reg_generic_only) {
          lc.lambda_specific = memory ? config_.weights.specific_memory
                                      : config_.weights.specific_current;
        }
      }
      break;
  }
  lc.squared_norm = config_.squared_reg;
  out.needs_snapshots = lc.lambda_generic > 0.0 || lc.lambda_specific > 0.0 ||
                        lc.lambda_combined > 0.0;
  if (out.needs_snapshots) lc.snapshots = &snapshots_;
  return out;
}

void Trainer::emit(const StepRecord& record) {
  steps_.push_back(record);
  if (step_sink_) step_sink_(record);
}

void Trainer::optimize_batch(const Batch& batch, const ResolvedLoss& loss,
                             AdamW& optimizer,
                             const StepRecord& record_template) {
  ParamSet grads = ParamSet::zeros(model_.config());
  StepRecord record = record_template;
  record.losses = compute_loss_gradients(model_, batch, loss.config, grads);
  optimizer.step(model_.params(), grads);
  emit(record);
}

double Trainer::seen_validation_accuracy(int tasks_seen) const {
  double sum = 0.0;
  for (int j = 0; j < tasks_seen; ++j) {
    const TaskDescriptor& task = sequence_->tasks[static_cast<size_t>(j)];
    EvalOptions opt;
    if (config_.mask_eval_to_task_block) {
      opt.mask_to_task_block = true;
      opt.block_offset = task.label_offset;
      opt.block_size = task.num_classes;
    }
    sum += evaluate(model_, task.val, opt);
  }
  return sum / static_cast<double>(tasks_seen);
}

std::vector<double> Trainer::test_row(int tasks_seen) const {
  std::vector<double> row;
  row.reserve(static_cast<size_t>(tasks_seen));
  for (int j = 0; j < tasks_seen; ++j) {
    const TaskDescriptor& task = sequence_->tasks[static_cast<size_t>(j)];
    EvalOptions opt;
    if (config_.mask_eval_to_task_block) {
      opt.mask_to_task_block = true;
      opt.block_offset = task.label_offset;
      opt.block_size = task.num_classes;
    }
    row.push_back(evaluate(model_, task.test, opt));
  }
  return row;
}

void Trainer::select_into_memory(int t) {
  const TaskDescriptor& task = sequence_->tasks[static_cast<size_t>(t - 1)];
  const int budget = memory_budget(config_.store_ratio, task.train.size());
  const uint64_t seed =
      derive_seed(config_.seed, "select", {static_cast<uint64_t>(t)});

  const bool random = config_.random_selection ||
                      config_.method == Method::kReplay ||
                      config_.method == Method::kRegularization;
  std::vector<size_t> indices;
  if (random) {
    indices = random_select(task.train.size(), budget, seed);
  } else {
    // Cluster the train set on the shared representation of the model as
    // it stands after this task; keep the example nearest each centroid.
    Eigen::MatrixXd features(static_cast<Eigen::Index>(task.train.size()),
                             model_.config().encoder_dim);
    for (size_t i = 0; i < task.train.size(); ++i) {
      features.row(static_cast<Eigen::Index>(i)) =
          model_.encode(task.train[i].tokens).transpose();
    }
    indices = kmeans_select(features, budget, seed);
  }

  std::vector<Example> selected;
  selected.reserve(indices.size());
  for (size_t i : indices) selected.push_back(task.train[i]);
  buffer_.store(selected, t - 1);
}

void Trainer::train_task(int t) {
  if (config_.method == Method::kMtl) {
    throw std::logic_error("train_task: joint training has no task loop");
  }
  if (t < 1 || t > num_tasks()) {
    throw std::out_of_range("train_task: task index " + std::to_string(t));
  }
  if (t != completed_tasks_ + 1) {
    throw std::logic_error("train_task: tasks must be trained in order");
  }
  const TaskDescriptor& task = sequence_->tasks[static_cast<size_t>(t - 1)];
  if (task.train.empty()) {
    throw std::runtime_error("train_task: empty train set for `" + task.name +
                             "`");
  }

  snapshots_ = SnapshotStore{};
  const bool reg_current = resolve_loss(t, BatchSource::kCurrent).needs_snapshots;
  const bool reg_memory = resolve_loss(t, BatchSource::kMemory).needs_snapshots;
  if (t >= 2 && uses_regularization() && (reg_current || reg_memory)) {
    std::vector<const Example*> targets;
    targets.reserve(task.train.size() + buffer_.size());
    for (const Example& ex : task.train) targets.push_back(&ex);
    for (const BufferEntry& e : buffer_.entries()) {
      targets.push_back(&e.example);
    }
    snapshots_ = compute_snapshots(previous_model_, targets);
  }

  AdamWConfig adam;
  adam.learning_rate = config_.learning_rate;
  adam.task_head_learning_rate = config_.task_head_learning_rate;
  adam.weight_decay = config_.weight_decay;
  AdamW optimizer(model_.config(), adam);

  const ResolvedLoss current_loss = resolve_loss(t, BatchSource::kCurrent);
  const ResolvedLoss memory_loss = resolve_loss(t, BatchSource::kMemory);

  long step = 0;
  double best_val = -1.0;
  ParamSet best_params;

  for (int epoch = 1; epoch <= config_.epochs_per_task; ++epoch) {
    Rng epoch_rng(derive_seed(config_.seed, "epoch",
                              {static_cast<uint64_t>(t),
                               static_cast<uint64_t>(epoch)}));
    const std::vector<size_t> order = epoch_rng.permutation(task.train.size());

    for (size_t begin = 0; begin < order.size();
         begin += static_cast<size_t>(config_.batch_size)) {
      const size_t end = std::min(
          order.size(), begin + static_cast<size_t>(config_.batch_size));
      std::vector<const Example*> sources;
      sources.reserve(end - begin);
      for (size_t i = begin; i < end; ++i) {
        sources.push_back(&task.train[order[i]]);
      }
      const Batch batch =
          make_batch(sources, epoch_rng, config_.fixed_midpoint_split);

      ++step;
      StepRecord rec;
      rec.task = t;
      rec.epoch = epoch;
      rec.step = step;
      rec.source = BatchSource::kCurrent;
      optimize_batch(batch, current_loss, optimizer, rec);

      const bool replay_due = uses_memory() && t >= 2 && !buffer_.empty() &&
                              step % config_.replay_frequency == 0;
      if (replay_due) {
        const auto batches = sample_replay(
            buffer_, t, config_.batch_size,
            derive_seed(config_.seed, "replay-sample",
                        {static_cast<uint64_t>(t), static_cast<uint64_t>(step)}),
            config_.stratified_replay);
        Rng replay_rng(derive_seed(
            config_.seed, "replay-split",
            {static_cast<uint64_t>(t), static_cast<uint64_t>(step)}));
        for (size_t b = 0; b < batches.size(); ++b) {
          std::vector<const Example*> mem_sources;
          mem_sources.reserve(batches[b].size());
          for (const BufferEntry* e : batches[b]) {
            mem_sources.push_back(&e->example);
          }
          const Batch mem_batch = make_batch(mem_sources, replay_rng,
                                             config_.fixed_midpoint_split);
          StepRecord mrec;
          mrec.task = t;
          mrec.epoch = epoch;
          mrec.step = step;
          mrec.source = BatchSource::kMemory;
          mrec.memory_batch_index = static_cast<int>(b);
          optimize_batch(mem_batch, memory_loss, optimizer, mrec);
        }
      }
    }

    const double val = seen_validation_accuracy(t);
    if (val > best_val) {
      best_val = val;
      best_params = model_.params();
    }
  }

  model_.params() = best_params;

  matrix_.append_row(test_row(t));
  if (uses_memory()) select_into_memory(t);
  previous_model_ = model_.clone_frozen();
  completed_tasks_ = t;
  if (boundary_hook_) {
    boundary_hook_(ResumeState{model_, buffer_, matrix_, completed_tasks_});
  }
}

void Trainer::train_all_tasks_jointly() {
  if (config_.method != Method::kMtl) {
    throw std::logic_error("train_all_tasks_jointly: method is not mtl");
  }
  if (completed_tasks_ != 0) {
    throw std::logic_error("train_all_tasks_jointly: already trained");
  }

  std::vector<const Example*> pooled;
  for (const TaskDescriptor& task : sequence_->tasks) {
    if (task.train.empty()) {
      throw std::runtime_error("train_all_tasks_jointly: empty train set for `" +
                               task.name + "`");
    }
    for (const Example& ex : task.train) pooled.push_back(&ex);
  }

  AdamWConfig adam;
  adam.learning_rate = config_.learning_rate;
  adam.task_head_learning_rate = config_.task_head_learning_rate;
  adam.weight_decay = config_.weight_decay;
  AdamW optimizer(model_.config(), adam);

  const ResolvedLoss loss = resolve_loss(1, BatchSource::kCurrent);
  long step = 0;
  double best_val = -1.0;
  ParamSet best_params;

  for (int epoch = 1; epoch <= config_.epochs_per_task; ++epoch) {
    Rng epoch_rng(derive_seed(config_.seed, "epoch",
                              {0, static_cast<uint64_t>(epoch)}));
    const std::vector<size_t> order = epoch_rng.permutation(pooled.size());
    for (size_t begin = 0; begin < order.size();
         begin += static_cast<size_t>(config_.batch_size)) {
      const size_t end = std::min(
          order.size(), begin + static_cast<size_t>(config_.batch_size));
      std::vector<const Example*> sources;
      for (size_t i = begin; i < end; ++i) sources.push_back(pooled[order[i]]);
      const Batch batch =
          make_batch(sources, epoch_rng, config_.fixed_midpoint_split);
      ++step;
      StepRecord rec;
      rec.task = 0;  // joint phase
      rec.epoch = epoch;
      rec.step = step;
      rec.source = BatchSource::kCurrent;
      optimize_batch(batch, loss, optimizer, rec);
    }
    const double val = seen_validation_accuracy(num_tasks());
    if (val > best_val) {
      best_val = val;
      best_params = model_.params();
    }
  }

  model_.params() = best_params;
  matrix_.append_row(test_row(num_tasks()));
  completed_tasks_ = num_tasks();
  previous_model_ = model_.clone_frozen();
  if (boundary_hook_) {
    boundary_hook_(ResumeState{model_, buffer_, matrix_, completed_tasks_});
  }
}

RunResult Trainer::run() {
  if (config_.method == Method::kMtl) {
    if (completed_tasks_ == 0) train_all_tasks_jointly();
  } else {
    for (int t = completed_tasks_ + 1; t <= num_tasks(); ++t) {
      train_task(t);
    }
  }
  return RunResult{matrix_, steps_, model_, buffer_};
}

RunResult run_sequence(const TaskSequence& sequence, const TrainConfig& config,
                       StepSink sink) {
  Trainer trainer(sequence, config);
  if (sink) trainer.set_step_sink(std::move(sink));
  return trainer.run();
}

RunResult run_baseline(Method kind, const TaskSequence& sequence,
                       TrainConfig config, StepSink sink) {
  if (kind == Method::kIdbr) {
    throw ConfigError("run_baseline: idbr is not a baseline");
  }
  config.method = kind;
  return run_sequence(sequence, config, std::move(sink));
}

}  // namespace idbr
