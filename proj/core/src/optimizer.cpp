#include "idbr/optimizer.hpp"

#include <cmath>

namespace idbr {

AdamW::AdamW(const ModelConfig& model_config, const AdamWConfig& config)
    : config_(config),
      first_moment_(ParamSet::zeros(model_config)),
      second_moment_(ParamSet::zeros(model_config)) {}

void AdamW::step(ParamSet& params, const ParamSet& gradients) {
  ++steps_;
  const double correction1 = 1.0 - std::pow(config_.beta1, steps_);
  const double correction2 = 1.0 - std::pow(config_.beta2, steps_);

  auto p = params.views();
  const auto g = gradients.views();
  auto m = first_moment_.views();
  auto v = second_moment_.views();

  for (size_t i = 0; i < p.size(); ++i) {
    const double lr = p[i].task_head ? config_.task_head_learning_rate
                                     : config_.learning_rate;
    for (Eigen::Index j = 0; j < p[i].size; ++j) {
      const double grad = g[i].data[j];
      double& mj = m[i].data[j];
      double& vj = v[i].data[j];
      mj = config_.beta1 * mj + (1.0 - config_.beta1) * grad;
      vj = config_.beta2 * vj + (1.0 - config_.beta2) * grad * grad;
      const double m_hat = mj / correction1;
      const double v_hat = vj / correction2;
      double& pj = p[i].data[j];
      pj -= lr * config_.weight_decay * pj;  // decoupled decay
      pj -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

}  // namespace idbr
