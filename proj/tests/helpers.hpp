#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "idbr/model.hpp"
#include "idbr/objectives.hpp"
#include "idbr/registry.hpp"

namespace idbr::testing {

/// Toy dimensions with 157 parameters total, small enough for exhaustive
/// finite-difference checks.
inline ModelConfig tiny_config(uint64_t seed = 7) {
  ModelConfig c;
  c.vocab_size = 12;
  c.embed_dim = 3;
  c.hidden_dim = 4;
  c.encoder_dim = 4;
  c.feature_dim = 3;
  c.num_tasks = 3;
  c.num_classes = 5;
  c.max_positions = 16;
  c.init_seed = seed;
  return c;
}

inline Example make_example(std::vector<int> tokens, int label, int task,
                            uint64_t id) {
  Example ex;
  ex.tokens = std::move(tokens);
  ex.label = label;
  ex.task_id = task;
  ex.id = id;
  return ex;
}

/// A small batch over the tiny vocabulary with varied lengths.
inline Batch tiny_batch(uint64_t seed = 11, int sources = 3,
                        const ModelConfig& config = tiny_config()) {
  Rng rng(seed);
  std::vector<Example> owned;
  for (int i = 0; i < sources; ++i) {
    const size_t len = 4 + rng.uniform_index(4);
    std::vector<int> tokens;
    for (size_t j = 0; j < len; ++j) {
      // Skip the separator id so canonical sequences stay canonical.
      int tok = static_cast<int>(rng.uniform_index(config.vocab_size));
      if (tok == kSeparatorTokenId) tok = kSeparatorTokenId + 1;
      tokens.push_back(tok);
    }
    owned.push_back(make_example(
        std::move(tokens), static_cast<int>(rng.uniform_index(config.num_classes)),
        static_cast<int>(rng.uniform_index(config.num_tasks)),
        static_cast<uint64_t>(i) + 100));
  }
  Batch batch;
  Rng split_rng(seed ^ 0x5eed);
  for (const Example& ex : owned) {
    batch.push_back(
        make_batch_item(ex, sample_split_index(split_rng, ex.tokens.size())));
  }
  return batch;
}

/// Snapshot store filled from a (usually different) model so the
/// regularizer sees generic non-zero differences.
inline SnapshotStore snapshots_for(const Model& model, const Batch& batch) {
  SnapshotStore store;
  for (const BatchItem& item : batch) {
    const Representations rep = model.represent(item.canonical);
    store.put(item.id, SnapshotStore::Entry{rep.generic, rep.specific});
  }
  store.freeze();
  return store;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;
};

inline double rel_error(double analytic, double numeric) {
  const double denom = std::max(std::abs(analytic), std::abs(numeric));
  if (denom < 1e-8) return 0.0;
  return std::abs(analytic - numeric) / denom;
}

/// Central finite differences over every parameter coordinate.
inline GradCheckResult check_gradients(Model model, const Batch& batch,
                                       const LossConfig& config,
                                       double eps = 1e-5) {
  ParamSet grads = ParamSet::zeros(model.config());
  compute_loss_gradients(model, batch, config, grads);

  GradCheckResult result;
  auto params = model.params().views();
  auto analytic = grads.views();
  for (size_t v = 0; v < params.size(); ++v) {
    for (Eigen::Index i = 0; i < params[v].size; ++i) {
      double& coord = params[v].data[i];
      const double saved = coord;
      coord = saved + eps;
      const double up = compute_loss(model, batch, config).total;
      coord = saved - eps;
      const double down = compute_loss(model, batch, config).total;
      coord = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = rel_error(analytic[v].data[i], numeric);
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = params[v].name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

/// Registry of three small disjoint-vocabulary synthetic tasks sized for
/// unit tests. Train sizes: t0 = 2*per_class, t1 = 2*per_class,
/// t2 = 2*per_class (all two-class).
inline TaskRegistry small_registry(int train_per_class, int val_per_class = 6,
                                   int test_per_class = 8, int min_length = 5,
                                   int max_length = 9) {
  TaskRegistry reg;
  for (int i = 0; i < 3; ++i) {
    SyntheticSpec syn;
    syn.num_classes = 2;
    syn.train_per_class = train_per_class;
    syn.val_per_class = val_per_class;
    syn.test_per_class = test_per_class;
    syn.vocab_block = i;
    syn.min_length = min_length;
    syn.max_length = max_length;
    TaskSpec spec;
    spec.name = "t" + std::to_string(i);
    spec.num_classes = 2;
    spec.source = syn;
    reg.add(spec);
  }
  return reg;
}

inline TaskSequence small_sequence(int train_per_class, uint64_t data_seed = 1) {
  CorpusOptions opts;
  opts.data_seed = data_seed;
  opts.max_vocab = 4000;
  opts.max_length = 64;
  return build_task_sequence("t0,t1,t2", small_registry(train_per_class), opts);
}

}  // namespace idbr::testing
