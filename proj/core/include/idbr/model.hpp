#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "idbr/rng.hpp"

namespace idbr {

struct ModelConfig {
  int vocab_size = 0;
  int embed_dim = 64;
  int hidden_dim = 128;
  int encoder_dim = 128;   // dimension of the shared representation r
  int feature_dim = 128;   // dimension of each extractor output (g and s)
  int num_tasks = 0;       // task-identity head width, fixed at construction
  int num_classes = 0;     // merged global label space
  int max_positions = 260; // canonical max length + separator + slack

  // Fixed sinusoidal per-position scaling of token embeddings before the
  // mean pool. Without it the pool is permutation invariant and the
  // segment-order auxiliary task cannot be learned. Turn off for plain
  // mean pooling.
  bool position_modulation = true;

  uint64_t init_seed = 0;

  void validate() const;  // throws std::invalid_argument
};

/// All trainable tensors. Also reused as the gradient accumulator, the
/// optimizer moments and the checkpoint payload; views() exposes every
/// tensor flat, keyed by module path, in a stable order.
struct ParamSet {
  Eigen::MatrixXd embedding;            // vocab x embed
  Eigen::MatrixXd encoder_w1;           // hidden x embed
  Eigen::VectorXd encoder_b1;
  Eigen::MatrixXd encoder_w2;           // encoder x hidden
  Eigen::VectorXd encoder_b2;
  Eigen::MatrixXd generic_w;            // feature x encoder
  Eigen::VectorXd generic_b;
  Eigen::MatrixXd specific_w;           // feature x encoder
  Eigen::VectorXd specific_b;
  Eigen::MatrixXd nsp_head_w;           // 2 x feature
  Eigen::VectorXd nsp_head_b;
  Eigen::MatrixXd task_head_w;          // tasks x feature
  Eigen::VectorXd task_head_b;
  Eigen::MatrixXd cls_head_w;           // classes x 2*feature
  Eigen::VectorXd cls_head_b;

  static ParamSet zeros(const ModelConfig& config);

  struct View {
    std::string name;
    double* data;
    Eigen::Index size;
    bool task_head;
  };
  struct ConstView {
    std::string name;
    const double* data;
    Eigen::Index size;
    bool task_head;
  };
  std::vector<View> views();
  std::vector<ConstView> views() const;
  void set_zero();
  Eigen::Index total_size() const;
  double max_abs_difference(const ParamSet& other) const;
};

struct Representations {
  Eigen::VectorXd encoded;   // r
  Eigen::VectorXd generic;   // g
  Eigen::VectorXd specific;  // s
};

/// Everything the backward pass needs about one forward evaluation.
struct ForwardTrace {
  std::vector<int> tokens;
  Eigen::VectorXd pooled;
  Eigen::VectorXd hidden;
  Eigen::VectorXd encoded;
  Eigen::VectorXd generic;
  Eigen::VectorXd specific;
};

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

/// The trainable function family: shared encoder, the generic/specific
/// extractors and the three predictors. Value semantics; a copy is a
/// frozen, independently usable snapshot.
class Model {
 public:
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  /// Shared representation r of a token sequence. Throws on an empty
  /// sequence or out-of-vocabulary ids.
  Eigen::VectorXd encode(std::span<const int> tokens) const;

  /// Position-weighted mean of token embeddings (the encoder input).
  Eigen::VectorXd pool(std::span<const int> tokens) const;

  /// g = tanh(Wg r + bg), s = tanh(Ws r + bs).
  std::pair<Eigen::VectorXd, Eigen::VectorXd> extract(
      const Eigen::VectorXd& encoded) const;

  Representations represent(std::span<const int> tokens) const;
  ForwardTrace forward(std::span<const int> tokens) const;

  Eigen::VectorXd class_logits(const Eigen::VectorXd& generic,
                               const Eigen::VectorXd& specific) const;
  Eigen::VectorXd nsp_logits(const Eigen::VectorXd& generic) const;
  Eigen::VectorXd task_logits(const Eigen::VectorXd& specific) const;

  /// Softmax distributions of the three heads.
  Eigen::VectorXd predict_class(const Eigen::VectorXd& generic,
                                const Eigen::VectorXd& specific) const;
  Eigen::VectorXd predict_nsp(const Eigen::VectorXd& generic) const;
  Eigen::VectorXd predict_task(const Eigen::VectorXd& specific) const;

  /// Deep, immutable-by-convention copy of the current parameters.
  Model clone_frozen() const { return *this; }

  /// Per-position embedding scale (all-ones when modulation is off).
  const Eigen::MatrixXd& position_scale() const { return position_scale_; }

 private:
  ModelConfig config_;
  ParamSet params_;
  Eigen::MatrixXd position_scale_;  // max_positions x embed_dim
};

}  // namespace idbr
