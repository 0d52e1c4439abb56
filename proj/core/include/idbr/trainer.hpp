#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "idbr/corpus.hpp"
#include "idbr/evaluation.hpp"
#include "idbr/memory.hpp"
#include "idbr/model.hpp"
#include "idbr/objectives.hpp"
#include "idbr/optimizer.hpp"

namespace idbr {

enum class Method { kFinetune, kReplay, kRegularization, kIdbr, kMtl };

std::string method_name(Method method);

struct TrainConfig {
  Method method = Method::kIdbr;

  double learning_rate = 3e-5;
  double task_head_learning_rate = 5e-4;
  double weight_decay = 0.01;
  int batch_size = 8;
  int replay_frequency = 10;  // replay once every this many current steps
  double store_ratio = 0.01;  // fraction of a train set kept in memory
  int epochs_per_task = 3;
  uint64_t seed = 1;

  LossWeights weights;
  // Undisentangled-regularization baseline coefficient, per batch source.
  double reg_lambda_memory = 2.5;
  double reg_lambda_current = 0.25;

  // Ablation switches (only meaningful under Method::kIdbr).
  bool no_nsp = false;
  bool no_task = false;
  bool reg_generic_only = false;
  bool reg_specific_only = false;
  bool random_selection = false;
  bool squared_reg = false;

  bool fixed_midpoint_split = false;
  bool stratified_replay = true;
  bool mask_eval_to_task_block = false;

  // Model dimensions; vocab_size / num_tasks / num_classes are filled from
  // the task sequence at run time.
  int embed_dim = 64;
  int hidden_dim = 128;
  int encoder_dim = 128;
  int feature_dim = 128;
  bool position_modulation = true;

  void validate() const;  // throws ConfigError
};

struct StepRecord {
  int task = 0;       // 1-based
  int epoch = 0;      // 1-based
  long step = 0;      // current-task optimizer steps; replay keeps trigger step
  BatchSource source = BatchSource::kCurrent;
  int memory_batch_index = -1;  // which of the t-1 replay batches
  LossBreakdown losses;
};

using StepSink = std::function<void(const StepRecord&)>;

struct RunResult {
  AccuracyMatrix matrix;
  std::vector<StepRecord> steps;
  Model model;
  ReplayBuffer buffer;
};

/// State at a task boundary, enough to continue a run exactly.
struct ResumeState {
  Model model;
  ReplayBuffer buffer;
  AccuracyMatrix matrix;
  int completed_tasks = 0;
};

/// Fires after each task with the state at that boundary.
using BoundaryHook = std::function<void(const ResumeState&)>;

/// Computes and freezes the per-example generic/specific targets of
/// `examples` under the frozen previous-task model.
SnapshotStore compute_snapshots(const Model& frozen_previous,
                                std::span<const Example* const> examples);

/// Sequential (and joint, for Method::kMtl) training over a task sequence.
/// All randomness is derived from TrainConfig::seed per purpose and task,
/// so runs are reproducible and boundary resume is exact.
class Trainer {
 public:
  Trainer(const TaskSequence& sequence, const TrainConfig& config);
  Trainer(const TaskSequence& sequence, const TrainConfig& config,
          ResumeState resume);

  int num_tasks() const { return static_cast<int>(sequence_->size()); }
  int completed_tasks() const { return completed_tasks_; }

  /// Trains task t (1-based; tasks must be trained in order), evaluates on
  /// all seen test sets and runs post-task memory selection.
  void train_task(int t);

  /// Joint training over the pooled data of every task (Method::kMtl).
  void train_all_tasks_jointly();

  /// Runs whatever the configured method requires, from the current state
  /// to the end of the sequence.
  RunResult run();

  void set_step_sink(StepSink sink) { step_sink_ = std::move(sink); }
  void set_boundary_hook(BoundaryHook hook) { boundary_hook_ = std::move(hook); }

  const Model& model() const { return model_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const AccuracyMatrix& matrix() const { return matrix_; }
  const std::vector<StepRecord>& steps() const { return steps_; }
  const SnapshotStore& snapshots() const { return snapshots_; }

 private:
  struct ResolvedLoss {
    LossConfig config;
    bool needs_snapshots = false;
  };

  ModelConfig model_config_for(const TaskSequence& sequence) const;
  ResolvedLoss resolve_loss(int task, BatchSource source) const;
  bool uses_memory() const;
  bool uses_regularization() const;
  void optimize_batch(const Batch& batch, const ResolvedLoss& loss,
                      AdamW& optimizer, const StepRecord& record_template);
  double seen_validation_accuracy(int tasks_seen) const;
  std::vector<double> test_row(int tasks_seen) const;
  void select_into_memory(int t);
  void emit(const StepRecord& record);

  const TaskSequence* sequence_;
  TrainConfig config_;
  Model model_;
  Model previous_model_;  // frozen post-(t-1) state
  ReplayBuffer buffer_;
  AccuracyMatrix matrix_;
  SnapshotStore snapshots_;
  std::vector<StepRecord> steps_;
  StepSink step_sink_;
  BoundaryHook boundary_hook_;
  int completed_tasks_ = 0;
};

RunResult run_sequence(const TaskSequence& sequence, const TrainConfig& config,
                       StepSink sink = nullptr);

/// Baseline entry point: kind must not be Method::kIdbr.
RunResult run_baseline(Method kind, const TaskSequence& sequence,
                       TrainConfig config, StepSink sink = nullptr);

}  // namespace idbr
