#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "idbr/corpus.hpp"

namespace idbr {

/// floor(store_ratio * train_size): how many exemplars a finished task
/// contributes to the episodic memory.
int memory_budget(double store_ratio, size_t train_size);

/// Clusters the feature rows into k groups and returns, per cluster, the
/// index of the row closest to the centroid (ties: lowest index). k = 0
/// returns empty (with a warning on stderr); k > n throws. Deterministic
/// given seed. Indices come back sorted ascending.
std::vector<size_t> kmeans_select(const Eigen::MatrixXd& features, int k,
                                  uint64_t seed);

/// Uniform sample of k distinct indices from [0, n), sorted ascending.
std::vector<size_t> random_select(size_t n, int k, uint64_t seed);

struct BufferEntry {
  Example example;
  int source_task = -1;
};

/// Episodic memory holding exemplars of finished tasks.
class ReplayBuffer {
 public:
  /// Appends exemplars of the just-finished task. Duplicate example ids
  /// within the same task are rejected.
  void store(std::span<const Example> selected, int task_id);

  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<BufferEntry>& entries() const { return entries_; }
  /// Number of stored exemplars per source task id.
  std::vector<std::pair<int, size_t>> per_task_counts() const;
  std::vector<const BufferEntry*> entries_for_task(int task_id) const;
  std::vector<int> stored_task_ids() const;  // ascending

 private:
  std::vector<BufferEntry> entries_;
};

/// Draws the t-1 replay batches for current task index t (1-based, >= 2).
/// Stratified mode (default) dedicates one batch to each previous task;
/// pooled mode draws every batch from the whole buffer. Strata smaller
/// than batch_size are sampled with replacement, larger ones without.
std::vector<std::vector<const BufferEntry*>> sample_replay(
    const ReplayBuffer& buffer, int current_task_index, int batch_size,
    uint64_t seed, bool stratified = true);

}  // namespace idbr
