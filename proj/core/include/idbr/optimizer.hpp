#pragma once

#include "idbr/model.hpp"

namespace idbr {

struct AdamWConfig {
  double learning_rate = 3e-5;
  double task_head_learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay. The task-identity head runs at its
/// own learning rate; everything else at the base rate.
class AdamW {
 public:
  AdamW(const ModelConfig& model_config, const AdamWConfig& config);

  void step(ParamSet& params, const ParamSet& gradients);
  long steps_taken() const { return steps_; }

 private:
  AdamWConfig config_;
  ParamSet first_moment_;
  ParamSet second_moment_;
  long steps_ = 0;
};

}  // namespace idbr
