#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "idbr/corpus.hpp"
#include "idbr/model.hpp"

namespace idbr {

/// Regularization coefficients of the combined objective, per batch
/// source. Memory batches anchor old knowledge harder than current-task
/// batches; the first three loss terms always carry coefficient 1.
struct LossWeights {
  double generic_memory = 2.5;
  double specific_memory = 2.0;
  double generic_current = 0.25;
  double specific_current = 0.20;
};

enum class BatchSource { kCurrent, kMemory };
enum class RegSpace { kGeneric, kSpecific, kCombined };

/// Per-example generic/specific targets computed with the frozen
/// previous-task model. Populated once per task, then frozen.
class SnapshotStore {
 public:
  struct Entry {
    Eigen::VectorXd generic;
    Eigen::VectorXd specific;
  };

  void put(uint64_t example_id, Entry entry);
  bool contains(uint64_t example_id) const;
  const Entry& at(uint64_t example_id) const;  // throws if missing
  size_t size() const { return entries_.size(); }
  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  bool operator==(const SnapshotStore& other) const;

 private:
  std::map<uint64_t, Entry> entries_;
  bool frozen_ = false;
};

/// One source example expanded to its training forms: the two
/// segment-order variants feed the classification / segment-order / task
/// heads; the canonical form feeds the representation regularizers.
struct BatchItem {
  uint64_t id = 0;
  int label = -1;
  int task = -1;
  std::vector<int> canonical;
  std::vector<int> is_next;
  std::vector<int> not_next;
};

using Batch = std::vector<BatchItem>;

BatchItem make_batch_item(const Example& example, int split_index);

/// Expands source examples into a batch, drawing one interior split per
/// example from `split_rng` (or the midpoint when fixed_midpoint is set).
Batch make_batch(std::span<const Example* const> sources, Rng& split_rng,
                 bool fixed_midpoint = false);

struct LossBreakdown {
  double cls = 0.0;
  double nsp = 0.0;
  double task = 0.0;
  double reg_generic = 0.0;
  double reg_specific = 0.0;
  double reg_combined = 0.0;  // undisentangled baseline regularizer
  double total = 0.0;
};

/// Term toggles and resolved coefficients for one loss evaluation. The
/// trainer resolves LossWeights x (source, task index) into this.
struct LossConfig {
  bool include_cls = true;
  bool include_nsp = true;
  bool include_task = true;
  double lambda_generic = 0.0;
  double lambda_specific = 0.0;
  double lambda_combined = 0.0;
  bool squared_norm = false;  // ablation: ||.||^2 instead of ||.||
  const SnapshotStore* snapshots = nullptr;  // required when a lambda > 0
};

/// Evaluates the enabled terms; `total` is the coefficient-weighted sum.
LossBreakdown compute_loss(const Model& model, const Batch& batch,
                           const LossConfig& config);

/// Same, and accumulates analytic gradients of `total` into `gradients`
/// (which must be zeroed by the caller and shaped like the model).
LossBreakdown compute_loss_gradients(const Model& model, const Batch& batch,
                                     const LossConfig& config,
                                     ParamSet& gradients);

// Single-term views used by tests and diagnostics.
double loss_cls(const Model& model, const Batch& batch);
double loss_nsp(const Model& model, const Batch& batch);
double loss_task(const Model& model, const Batch& batch);
double loss_reg(const Model& model, const Batch& batch,
                const SnapshotStore& snapshots, RegSpace space,
                bool squared_norm = false);

/// The combined objective with coefficients resolved per batch source; the
/// regularizers are inactive on the first task. The returned total is the
/// exact recombination of the reported components.
LossBreakdown total_loss(const Model& model, const Batch& batch,
                         const SnapshotStore* snapshots,
                         const LossWeights& weights, int task_index,
                         BatchSource source);

}  // namespace idbr
