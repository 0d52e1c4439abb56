#include "idbr/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace idbr {

void SnapshotStore::put(uint64_t example_id, Entry entry) {
  if (frozen_) {
    throw std::logic_error("SnapshotStore: store is frozen for this task");
  }
  entries_[example_id] = std::move(entry);
}

bool SnapshotStore::contains(uint64_t example_id) const {
  return entries_.count(example_id) > 0;
}

const SnapshotStore::Entry& SnapshotStore::at(uint64_t example_id) const {
  auto it = entries_.find(example_id);
  if (it == entries_.end()) {
    throw std::runtime_error("SnapshotStore: no snapshot for example id " +
                             std::to_string(example_id));
  }
  return it->second;
}

bool SnapshotStore::operator==(const SnapshotStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (a->first != b->first) return false;
    if (a->second.generic.size() != b->second.generic.size()) return false;
    if (a->second.specific.size() != b->second.specific.size()) return false;
    for (Eigen::Index i = 0; i < a->second.generic.size(); ++i) {
      if (a->second.generic(i) != b->second.generic(i)) return false;
    }
    for (Eigen::Index i = 0; i < a->second.specific.size(); ++i) {
      if (a->second.specific(i) != b->second.specific(i)) return false;
    }
  }
  return true;
}

BatchItem make_batch_item(const Example& example, int split_index) {
  NspPair pair = make_nsp_pair(example, split_index);
  BatchItem item;
  item.id = example.id;
  item.label = example.label;
  item.task = example.task_id;
  item.canonical = example.tokens;
  item.is_next = std::move(pair.is_next.tokens);
  item.not_next = std::move(pair.not_next.tokens);
  return item;
}

Batch make_batch(std::span<const Example* const> sources, Rng& split_rng,
                 bool fixed_midpoint) {
  Batch batch;
  batch.reserve(sources.size());
  for (const Example* ex : sources) {
    const int split =
        fixed_midpoint ? static_cast<int>(ex->tokens.size() / 2)
                       : sample_split_index(split_rng, ex->tokens.size());
    batch.push_back(make_batch_item(*ex, split));
  }
  return batch;
}

namespace {

/// Stable softmax cross-entropy; optionally writes weight * (p - onehot).
double softmax_cross_entropy(const Eigen::VectorXd& logits, int label,
                             double weight, Eigen::VectorXd* dlogits) {
  if (label < 0 || label >= logits.size()) {
    throw std::invalid_argument("cross entropy: label " +
                                std::to_string(label) +
                                " outside logit range of size " +
                                std::to_string(logits.size()));
  }
  const double shift = logits.maxCoeff();
  Eigen::VectorXd expd = (logits.array() - shift).exp();
  const double z = expd.sum();
  const double loss = weight * (std::log(z) - (logits(label) - shift));
  if (dlogits) {
    *dlogits = (weight / z) * expd;
    (*dlogits)(label) -= weight;
  }
  return loss;
}

/// Backpropagates one item: head logit deltas plus any direct pull on the
/// extractor outputs, down to the embedding table.
void accumulate_item(const Model& model, const ForwardTrace& tr,
                     const Eigen::VectorXd* dq_cls,
                     const Eigen::VectorXd* dq_nsp,
                     const Eigen::VectorXd* dq_task,
                     const Eigen::VectorXd* d_generic_extra,
                     const Eigen::VectorXd* d_specific_extra,
                     ParamSet& grads) {
  const ParamSet& p = model.params();
  const int feat = model.config().feature_dim;

  Eigen::VectorXd d_generic = Eigen::VectorXd::Zero(feat);
  Eigen::VectorXd d_specific = Eigen::VectorXd::Zero(feat);

  if (dq_cls) {
    Eigen::VectorXd cat(2 * feat);
    cat << tr.generic, tr.specific;
    grads.cls_head_w.noalias() += (*dq_cls) * cat.transpose();
    grads.cls_head_b += *dq_cls;
    Eigen::VectorXd dcat = p.cls_head_w.transpose() * (*dq_cls);
    d_generic += dcat.head(feat);
    d_specific += dcat.tail(feat);
  }
  if (dq_nsp) {
    grads.nsp_head_w.noalias() += (*dq_nsp) * tr.generic.transpose();
    grads.nsp_head_b += *dq_nsp;
    d_generic.noalias() += p.nsp_head_w.transpose() * (*dq_nsp);
  }
  if (dq_task) {
    grads.task_head_w.noalias() += (*dq_task) * tr.specific.transpose();
    grads.task_head_b += *dq_task;
    d_specific.noalias() += p.task_head_w.transpose() * (*dq_task);
  }
  if (d_generic_extra) d_generic += *d_generic_extra;
  if (d_specific_extra) d_specific += *d_specific_extra;

  // tanh' = 1 - tanh^2, evaluated from the cached activations.
  Eigen::VectorXd du =
      d_generic.array() * (1.0 - tr.generic.array().square());
  grads.generic_w.noalias() += du * tr.encoded.transpose();
  grads.generic_b += du;
  Eigen::VectorXd dv =
      d_specific.array() * (1.0 - tr.specific.array().square());
  grads.specific_w.noalias() += dv * tr.encoded.transpose();
  grads.specific_b += dv;

  Eigen::VectorXd d_encoded = p.generic_w.transpose() * du;
  d_encoded.noalias() += p.specific_w.transpose() * dv;

  Eigen::VectorXd dc =
      d_encoded.array() * (1.0 - tr.encoded.array().square());
  grads.encoder_w2.noalias() += dc * tr.hidden.transpose();
  grads.encoder_b2 += dc;

  Eigen::VectorXd dh = p.encoder_w2.transpose() * dc;
  Eigen::VectorXd da = dh.array() * (1.0 - tr.hidden.array().square());
  grads.encoder_w1.noalias() += da * tr.pooled.transpose();
  grads.encoder_b1 += da;

  Eigen::VectorXd d_pooled = p.encoder_w1.transpose() * da;
  const double inv_len = 1.0 / static_cast<double>(tr.tokens.size());
  const Eigen::MatrixXd& scale = model.position_scale();
  for (size_t i = 0; i < tr.tokens.size(); ++i) {
    grads.embedding.row(tr.tokens[i]) +=
        inv_len * (d_pooled.array() *
                   scale.row(static_cast<Eigen::Index>(i)).transpose().array())
                      .matrix()
                      .transpose();
  }
}

LossBreakdown evaluate(const Model& model, const Batch& batch,
                       const LossConfig& config, ParamSet* grads) {
  if (batch.empty()) {
    throw std::invalid_argument("loss: empty batch");
  }
  const bool reg_generic_on = config.lambda_generic > 0.0;
  const bool reg_specific_on = config.lambda_specific > 0.0;
  const bool reg_combined_on = config.lambda_combined > 0.0;
  const bool reg_on = reg_generic_on || reg_specific_on || reg_combined_on;
  if (reg_on && config.snapshots == nullptr) {
    throw std::invalid_argument(
        "loss: regularization requested without a snapshot store");
  }

  const double n = static_cast<double>(batch.size());
  const double item_weight = 1.0 / (2.0 * n);    // both pair variants
  const double source_weight = 1.0 / n;          // per source example

  LossBreakdown out;
  Eigen::VectorXd dq_cls, dq_nsp, dq_task;

  for (const BatchItem& item : batch) {
    for (int variant = 0; variant < 2; ++variant) {
      const std::vector<int>& tokens =
          variant == 0 ? item.is_next : item.not_next;
      const ForwardTrace tr = model.forward(tokens);

      const Eigen::VectorXd* cls_delta = nullptr;
      const Eigen::VectorXd* nsp_delta = nullptr;
      const Eigen::VectorXd* task_delta = nullptr;
      if (config.include_cls) {
        out.cls += softmax_cross_entropy(
            model.class_logits(tr.generic, tr.specific), item.label,
            item_weight, grads ? &dq_cls : nullptr);
        cls_delta = grads ? &dq_cls : nullptr;
      }
      if (config.include_nsp) {
        out.nsp += softmax_cross_entropy(model.nsp_logits(tr.generic), variant,
                                         source_weight,
                                         grads ? &dq_nsp : nullptr);
        nsp_delta = grads ? &dq_nsp : nullptr;
      }
      if (config.include_task) {
        out.task += softmax_cross_entropy(model.task_logits(tr.specific),
                                          item.task, item_weight,
                                          grads ? &dq_task : nullptr);
        task_delta = grads ? &dq_task : nullptr;
      }
      if (grads && (cls_delta || nsp_delta || task_delta)) {
        accumulate_item(model, tr, cls_delta, nsp_delta, task_delta, nullptr,
                        nullptr, *grads);
      }
    }

    if (!reg_on) continue;

    const ForwardTrace tr = model.forward(item.canonical);
    const SnapshotStore::Entry& snap = config.snapshots->at(item.id);
    if (snap.generic.size() != tr.generic.size() ||
        snap.specific.size() != tr.specific.size()) {
      throw std::invalid_argument(
          "loss: snapshot dimensions do not match the model");
    }
    const Eigen::VectorXd diff_generic = tr.generic - snap.generic;
    const Eigen::VectorXd diff_specific = tr.specific - snap.specific;
    const double sq_generic = diff_generic.squaredNorm();
    const double sq_specific = diff_specific.squaredNorm();

    Eigen::VectorXd d_generic = Eigen::VectorXd::Zero(tr.generic.size());
    Eigen::VectorXd d_specific = Eigen::VectorXd::Zero(tr.specific.size());
    bool any_reg_grad = false;
    constexpr double kNormFloor = 1e-12;  // subgradient 0 at the kink

    if (reg_generic_on) {
      const double norm = std::sqrt(sq_generic);
      out.reg_generic += source_weight * (config.squared_norm ? sq_generic : norm);
      if (grads) {
        const double w = source_weight * config.lambda_generic;
        if (config.squared_norm) {
          d_generic += (2.0 * w) * diff_generic;
          any_reg_grad = true;
        } else if (norm > kNormFloor) {
          d_generic += (w / norm) * diff_generic;
          any_reg_grad = true;
        }
      }
    }
    if (reg_specific_on) {
      const double norm = std::sqrt(sq_specific);
      out.reg_specific +=
          source_weight * (config.squared_norm ? sq_specific : norm);
      if (grads) {
        const double w = source_weight * config.lambda_specific;
        if (config.squared_norm) {
          d_specific += (2.0 * w) * diff_specific;
          any_reg_grad = true;
        } else if (norm > kNormFloor) {
          d_specific += (w / norm) * diff_specific;
          any_reg_grad = true;
        }
      }
    }
    if (reg_combined_on) {
      const double sq = sq_generic + sq_specific;
      const double norm = std::sqrt(sq);
      out.reg_combined += source_weight * (config.squared_norm ? sq : norm);
      if (grads) {
        const double w = source_weight * config.lambda_combined;
        if (config.squared_norm) {
          d_generic += (2.0 * w) * diff_generic;
          d_specific += (2.0 * w) * diff_specific;
          any_reg_grad = true;
        } else if (norm > kNormFloor) {
          d_generic += (w / norm) * diff_generic;
          d_specific += (w / norm) * diff_specific;
          any_reg_grad = true;
        }
      }
    }

    if (grads && any_reg_grad) {
      accumulate_item(model, tr, nullptr, nullptr, nullptr, &d_generic,
                      &d_specific, *grads);
    }
  }

  out.total = out.cls + out.nsp + out.task +
              config.lambda_generic * out.reg_generic +
              config.lambda_specific * out.reg_specific +
              config.lambda_combined * out.reg_combined;
  return out;
}

}  // namespace

LossBreakdown compute_loss(const Model& model, const Batch& batch,
                           const LossConfig& config) {
  return evaluate(model, batch, config, nullptr);
}

LossBreakdown compute_loss_gradients(const Model& model, const Batch& batch,
                                     const LossConfig& config,
                                     ParamSet& gradients) {
  return evaluate(model, batch, config, &gradients);
}

double loss_cls(const Model& model, const Batch& batch) {
  LossConfig c;
  c.include_nsp = false;
  c.include_task = false;
  return compute_loss(model, batch, c).cls;
}

double loss_nsp(const Model& model, const Batch& batch) {
  LossConfig c;
  c.include_cls = false;
  c.include_task = false;
  return compute_loss(model, batch, c).nsp;
}

double loss_task(const Model& model, const Batch& batch) {
  LossConfig c;
  c.include_cls = false;
  c.include_nsp = false;
  return compute_loss(model, batch, c).task;
}

double loss_reg(const Model& model, const Batch& batch,
                const SnapshotStore& snapshots, RegSpace space,
                bool squared_norm) {
  LossConfig c;
  c.include_cls = false;
  c.include_nsp = false;
  c.include_task = false;
  c.snapshots = &snapshots;
  c.squared_norm = squared_norm;
  switch (space) {
    case RegSpace::kGeneric: c.lambda_generic = 1.0; break;
    case RegSpace::kSpecific: c.lambda_specific = 1.0; break;
    case RegSpace::kCombined: c.lambda_combined = 1.0; break;
  }
  const LossBreakdown b = compute_loss(model, batch, c);
  switch (space) {
    case RegSpace::kGeneric: return b.reg_generic;
    case RegSpace::kSpecific: return b.reg_specific;
    case RegSpace::kCombined: return b.reg_combined;
  }
  return 0.0;
}

LossBreakdown total_loss(const Model& model, const Batch& batch,
                         const SnapshotStore* snapshots,
                         const LossWeights& weights, int task_index,
                         BatchSource source) {
  if (task_index < 1) {
    throw std::invalid_argument("total_loss: task index is 1-based");
  }
  LossConfig c;
  if (task_index >= 2) {
    const bool memory = source == BatchSource::kMemory;
    c.lambda_generic = memory ? weights.generic_memory : weights.generic_current;
    c.lambda_specific =
        memory ? weights.specific_memory : weights.specific_current;
    c.snapshots = snapshots;
  }
  return compute_loss(model, batch, c);
}

}  // namespace idbr
