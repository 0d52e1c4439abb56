#include "idbr/memory.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <set>
#include <stdexcept>

#include "idbr/kmeans.hpp"

namespace idbr {

int memory_budget(double store_ratio, size_t train_size) {
  if (store_ratio < 0.0 || store_ratio > 1.0) {
    throw std::invalid_argument("store ratio must lie in [0, 1]");
  }
  return static_cast<int>(std::floor(store_ratio * static_cast<double>(train_size)));
}

std::vector<size_t> kmeans_select(const Eigen::MatrixXd& features, int k,
                                  uint64_t seed) {
  if (k == 0) {
    std::cerr << "[memory] warning: selection budget is 0, storing nothing\n";
    return {};
  }
  if (k < 0 || k > features.rows()) {
    throw std::invalid_argument("kmeans_select: k=" + std::to_string(k) +
                                " outside [0, " +
                                std::to_string(features.rows()) + "]");
  }

  const KMeansResult result = kmeans(features, k, seed);
  std::vector<size_t> selected;
  selected.reserve(k);
  for (int c = 0; c < k; ++c) {
    Eigen::Index best = -1;
    double best_d = 0.0;
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
      if (result.assignment[i] != c) continue;
      const double d = squared_distance(features, i, result.centroids, c);
      if (best < 0 || d < best_d) {
        best = i;
        best_d = d;
      }
    }
    selected.push_back(static_cast<size_t>(best));
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

std::vector<size_t> random_select(size_t n, int k, uint64_t seed) {
  if (k < 0 || static_cast<size_t>(k) > n) {
    throw std::invalid_argument("random_select: k=" + std::to_string(k) +
                                " outside [0, " + std::to_string(n) + "]");
  }
  Rng rng(seed);
  std::vector<size_t> out =
      rng.sample_without_replacement(n, static_cast<size_t>(k));
  std::sort(out.begin(), out.end());
  return out;
}

void ReplayBuffer::store(std::span<const Example> selected, int task_id) {
  std::set<uint64_t> ids;
  for (const BufferEntry& e : entries_) {
    if (e.source_task == task_id) ids.insert(e.example.id);
  }
  for (const Example& ex : selected) {
    if (!ids.insert(ex.id).second) {
      throw std::runtime_error("ReplayBuffer::store: duplicate example id " +
                               std::to_string(ex.id) + " for task " +
                               std::to_string(task_id));
    }
  }
  entries_.reserve(entries_.size() + selected.size());
  for (const Example& ex : selected) {
    entries_.push_back(BufferEntry{ex, task_id});
  }
}

std::vector<std::pair<int, size_t>> ReplayBuffer::per_task_counts() const {
  std::map<int, size_t> counts;
  for (const BufferEntry& e : entries_) ++counts[e.source_task];
  return {counts.begin(), counts.end()};
}

std::vector<const BufferEntry*> ReplayBuffer::entries_for_task(
    int task_id) const {
  std::vector<const BufferEntry*> out;
  for (const BufferEntry& e : entries_) {
    if (e.source_task == task_id) out.push_back(&e);
  }
  return out;
}

std::vector<int> ReplayBuffer::stored_task_ids() const {
  std::set<int> ids;
  for (const BufferEntry& e : entries_) ids.insert(e.source_task);
  return {ids.begin(), ids.end()};
}

namespace {

std::vector<const BufferEntry*> draw_batch(
    const std::vector<const BufferEntry*>& pool, int batch_size, Rng& rng) {
  std::vector<const BufferEntry*> batch;
  batch.reserve(batch_size);
  if (pool.size() >= static_cast<size_t>(batch_size)) {
    for (size_t idx : rng.sample_without_replacement(
             pool.size(), static_cast<size_t>(batch_size))) {
      batch.push_back(pool[idx]);
    }
  } else {
    for (int i = 0; i < batch_size; ++i) {
      batch.push_back(pool[rng.uniform_index(pool.size())]);
    }
  }
  return batch;
}

}  // namespace

std::vector<std::vector<const BufferEntry*>> sample_replay(
    const ReplayBuffer& buffer, int current_task_index, int batch_size,
    uint64_t seed, bool stratified) {
  if (current_task_index < 2) {
    throw std::invalid_argument(
        "sample_replay: no previous tasks before task 2");
  }
  if (buffer.empty()) {
    throw std::runtime_error("sample_replay: memory buffer is empty");
  }
  if (batch_size < 1) {
    throw std::invalid_argument("sample_replay: batch size must be >= 1");
  }

  Rng rng(seed);
  std::vector<const BufferEntry*> all;
  all.reserve(buffer.size());
  for (const BufferEntry& e : buffer.entries()) all.push_back(&e);

  std::vector<std::vector<const BufferEntry*>> batches;
  const int num_batches = current_task_index - 1;
  for (int b = 0; b < num_batches; ++b) {
    if (stratified) {
      // Batch b rehearses previous task b; tasks that stored nothing
      // (zero budget) fall back to the pooled buffer.
      const auto stratum = buffer.entries_for_task(b);
      batches.push_back(draw_batch(stratum.empty() ? all : stratum,
                                   batch_size, rng));
    } else {
      batches.push_back(draw_batch(all, batch_size, rng));
    }
  }
  return batches;
}

}  // namespace idbr
