#include "idbr/model.hpp"

#include <cmath>
#include <stdexcept>

namespace idbr {

void ModelConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) {
      throw std::invalid_argument(std::string("ModelConfig: ") + what +
                                  " must be >= 1");
    }
  };
  if (vocab_size < 2) {
    throw std::invalid_argument(
        "ModelConfig: vocab_size must cover the reserved tokens (>= 2)");
  }
  positive(embed_dim, "embed_dim");
  positive(hidden_dim, "hidden_dim");
  positive(encoder_dim, "encoder_dim");
  positive(feature_dim, "feature_dim");
  positive(num_tasks, "num_tasks");
  positive(num_classes, "num_classes");
  positive(max_positions, "max_positions");
}

ParamSet ParamSet::zeros(const ModelConfig& c) {
  ParamSet p;
  p.embedding = Eigen::MatrixXd::Zero(c.vocab_size, c.embed_dim);
  p.encoder_w1 = Eigen::MatrixXd::Zero(c.hidden_dim, c.embed_dim);
  p.encoder_b1 = Eigen::VectorXd::Zero(c.hidden_dim);
  p.encoder_w2 = Eigen::MatrixXd::Zero(c.encoder_dim, c.hidden_dim);
  p.encoder_b2 = Eigen::VectorXd::Zero(c.encoder_dim);
  p.generic_w = Eigen::MatrixXd::Zero(c.feature_dim, c.encoder_dim);
  p.generic_b = Eigen::VectorXd::Zero(c.feature_dim);
  p.specific_w = Eigen::MatrixXd::Zero(c.feature_dim, c.encoder_dim);
  p.specific_b = Eigen::VectorXd::Zero(c.feature_dim);
  p.nsp_head_w = Eigen::MatrixXd::Zero(2, c.feature_dim);
  p.nsp_head_b = Eigen::VectorXd::Zero(2);
  p.task_head_w = Eigen::MatrixXd::Zero(c.num_tasks, c.feature_dim);
  p.task_head_b = Eigen::VectorXd::Zero(c.num_tasks);
  p.cls_head_w = Eigen::MatrixXd::Zero(c.num_classes, 2 * c.feature_dim);
  p.cls_head_b = Eigen::VectorXd::Zero(c.num_classes);
  return p;
}

namespace {

template <typename View, typename Set>
std::vector<View> collect_views(Set& p) {
  return {
      {"embedding", p.embedding.data(), p.embedding.size(), false},
      {"encoder.w1", p.encoder_w1.data(), p.encoder_w1.size(), false},
      {"encoder.b1", p.encoder_b1.data(), p.encoder_b1.size(), false},
      {"encoder.w2", p.encoder_w2.data(), p.encoder_w2.size(), false},
      {"encoder.b2", p.encoder_b2.data(), p.encoder_b2.size(), false},
      {"generic.w", p.generic_w.data(), p.generic_w.size(), false},
      {"generic.b", p.generic_b.data(), p.generic_b.size(), false},
      {"specific.w", p.specific_w.data(), p.specific_w.size(), false},
      {"specific.b", p.specific_b.data(), p.specific_b.size(), false},
      {"nsp_head.w", p.nsp_head_w.data(), p.nsp_head_w.size(), false},
      {"nsp_head.b", p.nsp_head_b.data(), p.nsp_head_b.size(), false},
      {"task_head.w", p.task_head_w.data(), p.task_head_w.size(), true},
      {"task_head.b", p.task_head_b.data(), p.task_head_b.size(), true},
      {"cls_head.w", p.cls_head_w.data(), p.cls_head_w.size(), false},
      {"cls_head.b", p.cls_head_b.data(), p.cls_head_b.size(), false},
  };
}

}  // namespace

std::vector<ParamSet::View> ParamSet::views() {
  return collect_views<View>(*this);
}

std::vector<ParamSet::ConstView> ParamSet::views() const {
  return collect_views<ConstView>(*this);
}

void ParamSet::set_zero() {
  for (auto& v : views()) {
    std::fill(v.data, v.data + v.size, 0.0);
  }
}

Eigen::Index ParamSet::total_size() const {
  Eigen::Index total = 0;
  for (const auto& v : views()) total += v.size;
  return total;
}

double ParamSet::max_abs_difference(const ParamSet& other) const {
  const auto a = views();
  const auto b = other.views();
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    for (Eigen::Index j = 0; j < a[i].size; ++j) {
      worst = std::max(worst, std::abs(a[i].data[j] - b[i].data[j]));
    }
  }
  return worst;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double shift = logits.maxCoeff();
  Eigen::VectorXd out = (logits.array() - shift).exp();
  out /= out.sum();
  return out;
}

namespace {

Eigen::MatrixXd build_position_scale(const ModelConfig& c) {
  Eigen::MatrixXd scale =
      Eigen::MatrixXd::Ones(c.max_positions, c.embed_dim);
  if (!c.position_modulation) return scale;
  constexpr double kAmplitude = 0.5;
  for (int pos = 0; pos < c.max_positions; ++pos) {
    for (int d = 0; d < c.embed_dim; ++d) {
      const double rate =
          std::pow(10000.0, -2.0 * (d / 2) / static_cast<double>(c.embed_dim));
      const double angle = pos * rate;
      const double wave = (d % 2 == 0) ? std::sin(angle) : std::cos(angle);
      scale(pos, d) = 1.0 + kAmplitude * wave;
    }
  }
  return scale;
}

void init_uniform(Eigen::MatrixXd& m, double bound, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = rng.uniform(-bound, bound);
  }
}

}  // namespace

Model::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  params_ = ParamSet::zeros(config_);
  position_scale_ = build_position_scale(config_);
  Rng rng(derive_seed(config_.init_seed, "model-init"));
  // Fan-in scaled uniform init for the affine maps; biases stay zero.
  init_uniform(params_.embedding, 1.0 / std::sqrt(config_.embed_dim), rng);
  init_uniform(params_.encoder_w1, 1.0 / std::sqrt(config_.embed_dim), rng);
  init_uniform(params_.encoder_w2, 1.0 / std::sqrt(config_.hidden_dim), rng);
  init_uniform(params_.generic_w, 1.0 / std::sqrt(config_.encoder_dim), rng);
  init_uniform(params_.specific_w, 1.0 / std::sqrt(config_.encoder_dim), rng);
  init_uniform(params_.nsp_head_w, 1.0 / std::sqrt(config_.feature_dim), rng);
  init_uniform(params_.task_head_w, 1.0 / std::sqrt(config_.feature_dim), rng);
  init_uniform(params_.cls_head_w, 1.0 / std::sqrt(2.0 * config_.feature_dim),
               rng);
}

Eigen::VectorXd Model::pool(std::span<const int> tokens) const {
  if (tokens.empty()) {
    throw std::invalid_argument("Model: empty token sequence");
  }
  if (tokens.size() > static_cast<size_t>(config_.max_positions)) {
    throw std::invalid_argument(
        "Model: sequence longer than the position table (" +
        std::to_string(tokens.size()) + " > " +
        std::to_string(config_.max_positions) + ")");
  }
  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(config_.embed_dim);
  for (size_t i = 0; i < tokens.size(); ++i) {
    const int tok = tokens[i];
    if (tok < 0 || tok >= config_.vocab_size) {
      throw std::invalid_argument("Model: token id " + std::to_string(tok) +
                                  " outside vocabulary of size " +
                                  std::to_string(config_.vocab_size));
    }
    pooled.array() += params_.embedding.row(tok).transpose().array() *
                      position_scale_.row(static_cast<Eigen::Index>(i))
                          .transpose()
                          .array();
  }
  pooled /= static_cast<double>(tokens.size());
  return pooled;
}

ForwardTrace Model::forward(std::span<const int> tokens) const {
  ForwardTrace t;
  t.tokens.assign(tokens.begin(), tokens.end());
  t.pooled = pool(tokens);
  t.hidden =
      (params_.encoder_w1 * t.pooled + params_.encoder_b1).array().tanh();
  t.encoded =
      (params_.encoder_w2 * t.hidden + params_.encoder_b2).array().tanh();
  t.generic =
      (params_.generic_w * t.encoded + params_.generic_b).array().tanh();
  t.specific =
      (params_.specific_w * t.encoded + params_.specific_b).array().tanh();
  return t;
}

Eigen::VectorXd Model::encode(std::span<const int> tokens) const {
  Eigen::VectorXd pooled = pool(tokens);
  Eigen::VectorXd hidden =
      (params_.encoder_w1 * pooled + params_.encoder_b1).array().tanh();
  return (params_.encoder_w2 * hidden + params_.encoder_b2).array().tanh();
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> Model::extract(
    const Eigen::VectorXd& encoded) const {
  if (encoded.size() != config_.encoder_dim) {
    throw std::invalid_argument("Model::extract: expected dimension " +
                                std::to_string(config_.encoder_dim) + ", got " +
                                std::to_string(encoded.size()));
  }
  Eigen::VectorXd g =
      (params_.generic_w * encoded + params_.generic_b).array().tanh();
  Eigen::VectorXd s =
      (params_.specific_w * encoded + params_.specific_b).array().tanh();
  return {std::move(g), std::move(s)};
}

Representations Model::represent(std::span<const int> tokens) const {
  Representations r;
  r.encoded = encode(tokens);
  auto [g, s] = extract(r.encoded);
  r.generic = std::move(g);
  r.specific = std::move(s);
  return r;
}

namespace {

void check_feature_dim(const Eigen::VectorXd& v, int expected,
                       const char* what) {
  if (v.size() != expected) {
    throw std::invalid_argument(std::string("Model: ") + what +
                                " has dimension " + std::to_string(v.size()) +
                                ", expected " + std::to_string(expected));
  }
}

}  // namespace

Eigen::VectorXd Model::class_logits(const Eigen::VectorXd& generic,
                                    const Eigen::VectorXd& specific) const {
  check_feature_dim(generic, config_.feature_dim, "generic feature");
  check_feature_dim(specific, config_.feature_dim, "specific feature");
  Eigen::VectorXd cat(2 * config_.feature_dim);
  cat << generic, specific;
  return params_.cls_head_w * cat + params_.cls_head_b;
}

Eigen::VectorXd Model::nsp_logits(const Eigen::VectorXd& generic) const {
  check_feature_dim(generic, config_.feature_dim, "generic feature");
  return params_.nsp_head_w * generic + params_.nsp_head_b;
}

Eigen::VectorXd Model::task_logits(const Eigen::VectorXd& specific) const {
  check_feature_dim(specific, config_.feature_dim, "specific feature");
  return params_.task_head_w * specific + params_.task_head_b;
}

Eigen::VectorXd Model::predict_class(const Eigen::VectorXd& generic,
                                     const Eigen::VectorXd& specific) const {
  return softmax(class_logits(generic, specific));
}

Eigen::VectorXd Model::predict_nsp(const Eigen::VectorXd& generic) const {
  return softmax(nsp_logits(generic));
}

Eigen::VectorXd Model::predict_task(const Eigen::VectorXd& specific) const {
  return softmax(task_logits(specific));
}

}  // namespace idbr
