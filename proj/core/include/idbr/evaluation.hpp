#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "idbr/corpus.hpp"
#include "idbr/model.hpp"
#include "idbr/objectives.hpp"

namespace idbr {

/// Row l (0-based) holds the accuracies on the test sets of tasks 0..l
/// measured after training task l. Joint-training results use a single
/// full-width row.
class AccuracyMatrix {
 public:
  void append_row(std::vector<double> row);
  int num_rows() const { return static_cast<int>(rows_.size()); }
  const std::vector<double>& row(int index) const;
  double at(int row, int col) const;

  bool operator==(const AccuracyMatrix& other) const = default;

  std::string to_csv() const;
  static AccuracyMatrix from_csv(const std::string& csv);

 private:
  std::vector<std::vector<double>> rows_;
};

/// Mean of row `after_task` (1-based): the averaged accuracy over all
/// tasks seen once `after_task` tasks are trained.
double average_accuracy(const AccuracyMatrix& matrix, int after_task);

/// Forgetting after `after_task` (1-based, >= 2): the mean over previous
/// tasks of (peak past accuracy - current accuracy). Peaks range over the
/// rows where the entry is defined.
double forgetting(const AccuracyMatrix& matrix, int after_task);

struct EvalOptions {
  bool mask_to_task_block = false;  // restrict argmax to one label block
  int block_offset = 0;
  int block_size = 0;
};

/// Fraction of argmax-correct predictions on canonical token sequences.
double evaluate(const Model& model, std::span<const Example> test_set,
                const EvalOptions& options = {});

struct ProbeResult {
  double train_accuracy = 0.0;
  double holdout_accuracy = 0.0;
};

/// Multinomial logistic regression on fixed features, trained to
/// convergence on an 80/20 split (seeded shuffle, deterministic fit).
ProbeResult fit_linear_probe(const Eigen::MatrixXd& features,
                             const std::vector<int>& labels, int num_classes,
                             uint64_t split_seed);

/// Task-identity accuracy of a fresh linear probe on the frozen generic or
/// specific features of `examples` (which must span at least two tasks).
double probe_disentanglement(const Model& model,
                             std::span<const Example> examples, RegSpace space,
                             uint64_t seed);

/// CSV with header id,task,g_0..g_{F-1},s_0..s_{F-1}; one row per example.
void export_embeddings(const Model& model, std::span<const Example> examples,
                       const std::filesystem::path& path);

}  // namespace idbr
