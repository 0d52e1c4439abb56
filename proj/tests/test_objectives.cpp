#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "idbr/objectives.hpp"

using namespace idbr;
using namespace idbr::testing;

namespace {

double ce_from_probs(const Eigen::VectorXd& probs, int label) {
  return -std::log(probs(label));
}

}  // namespace

TEST_SUITE_BEGIN("objectives");

TEST_CASE("snapshot store semantics") {
  SnapshotStore store;
  store.put(1, {Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3)});
  CHECK(store.contains(1));
  CHECK(!store.contains(2));
  CHECK_THROWS_WITH_AS(store.at(2), doctest::Contains("example id 2"),
                       std::runtime_error);
  store.freeze();
  CHECK_THROWS_AS(store.put(3, {}), std::logic_error);
  CHECK(store.size() == 1);
}

TEST_CASE("batch construction: fixed midpoint and interior draws") {
  const Example ex = make_example({2, 3, 4, 5}, 0, 0, 9);
  const std::vector<const Example*> sources = {&ex};
  Rng rng(1);
  const Batch mid = make_batch(sources, rng, /*fixed_midpoint=*/true);
  CHECK(mid[0].is_next ==
        std::vector<int>({2, 3, kSeparatorTokenId, 4, 5}));

  const Example single = make_example({2}, 0, 0, 10);
  const std::vector<const Example*> bad = {&single};
  Rng rng2(1);
  CHECK_THROWS_AS(make_batch(bad, rng2), std::invalid_argument);
}

TEST_CASE("uniform classifier loss is ln(num_classes)") {
  ModelConfig c = tiny_config();
  c.num_classes = 33;
  Model model(c);
  model.params().cls_head_w.setZero();
  model.params().cls_head_b.setZero();
  const Batch batch = tiny_batch(5, 3, c);
  CHECK(loss_cls(model, batch) ==
        doctest::Approx(std::log(33.0)).epsilon(1e-12));
  CHECK(std::log(33.0) == doctest::Approx(3.4965075614664802).epsilon(1e-15));
}

TEST_CASE("two-class classifier toy loss: -ln(0.731...)") {
  ModelConfig c = tiny_config();
  c.num_classes = 2;
  Model model(c);
  model.params().cls_head_w.setZero();
  model.params().cls_head_b << 1.0, 0.0;
  Batch batch = tiny_batch(5, 2, c);
  for (BatchItem& item : batch) item.label = 0;
  CHECK(loss_cls(model, batch) ==
        doctest::Approx(0.31326168751822286).epsilon(1e-12));
}

TEST_CASE("a saturated correct head drives the loss to zero") {
  ModelConfig c = tiny_config();
  c.num_classes = 2;
  Model model(c);
  model.params().cls_head_w.setZero();
  model.params().cls_head_b << 50.0, 0.0;  // near one-hot on class 0
  Batch batch = tiny_batch(6, 2, c);
  for (BatchItem& item : batch) item.label = 0;
  CHECK(loss_cls(model, batch) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("uniform segment-order predictor costs 2 ln 2 per source") {
  Model model(tiny_config());
  model.params().nsp_head_w.setZero();
  model.params().nsp_head_b.setZero();
  const Batch batch = tiny_batch(7);
  CHECK(loss_nsp(model, batch) ==
        doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("segment-order loss equals the per-variant oracle") {
  const Model model(tiny_config(13));
  const Batch batch = tiny_batch(8);
  double expected = 0.0;
  for (const BatchItem& item : batch) {
    const Representations is = model.represent(item.is_next);
    const Representations no = model.represent(item.not_next);
    expected += ce_from_probs(model.predict_nsp(is.generic), 0);
    expected += ce_from_probs(model.predict_nsp(no.generic), 1);
  }
  expected /= static_cast<double>(batch.size());
  CHECK(loss_nsp(model, batch) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("hand case: probabilities 0.9 and 0.8 sum to about 0.3285") {
  Eigen::VectorXd p_is(2), p_not(2);
  p_is << 0.9, 0.1;
  p_not << 0.2, 0.8;
  const double summed = ce_from_probs(p_is, 0) + ce_from_probs(p_not, 1);
  CHECK(summed == doctest::Approx(0.32850406697203604).epsilon(1e-12));
}

TEST_CASE("uniform task predictor costs ln(num_tasks)") {
  ModelConfig c = tiny_config();
  c.num_tasks = 5;
  Model model(c);
  model.params().task_head_w.setZero();
  model.params().task_head_b.setZero();
  const Batch batch = tiny_batch(3, 3, c);
  CHECK(loss_task(model, batch) ==
        doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("task loss covers both pair variants (oracle recompute)") {
  const Model model(tiny_config(17));
  const Batch batch = tiny_batch(4);
  double expected = 0.0;
  for (const BatchItem& item : batch) {
    for (const auto* tokens : {&item.is_next, &item.not_next}) {
      const Representations rep = model.represent(*tokens);
      expected += ce_from_probs(model.predict_task(rep.specific), item.task);
    }
  }
  expected /= 2.0 * static_cast<double>(batch.size());
  CHECK(loss_task(model, batch) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("regularizer vanishes when parameters have not moved") {
  const Model model(tiny_config(19));
  const Batch batch = tiny_batch(6);
  const SnapshotStore snaps = snapshots_for(model, batch);
  CHECK(loss_reg(model, batch, snaps, RegSpace::kGeneric) <= 1e-9);
  CHECK(loss_reg(model, batch, snaps, RegSpace::kSpecific) <= 1e-9);
  CHECK(loss_reg(model, batch, snaps, RegSpace::kCombined) <= 1e-9);
}

TEST_CASE("unit basis difference has norm sqrt(2)") {
  // Zero-weight model: live features are exactly zero, so a target of
  // e0 - e1 leaves a difference of exactly sqrt(2).
  ModelConfig c = tiny_config();
  Model model(c);
  model.params().set_zero();
  Batch batch = tiny_batch(1, 1, c);
  Eigen::VectorXd target_g = Eigen::VectorXd::Zero(c.feature_dim);
  target_g(0) = 1.0;
  target_g(1) = -1.0;
  SnapshotStore snaps;
  snaps.put(batch[0].id, {target_g, Eigen::VectorXd::Zero(c.feature_dim)});
  snaps.freeze();
  CHECK(loss_reg(model, batch, snaps, RegSpace::kGeneric) ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(loss_reg(model, batch, snaps, RegSpace::kGeneric, true) ==
        doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("regularizer equals the brute-force norm oracle") {
  const Model model(tiny_config(23));
  const Model other(tiny_config(24));
  const Batch batch = tiny_batch(9);
  const SnapshotStore snaps = snapshots_for(other, batch);

  double expected_g = 0.0, expected_s = 0.0;
  for (const BatchItem& item : batch) {
    const Representations rep = model.represent(item.canonical);
    const auto& entry = snaps.at(item.id);
    double sg = 0.0, ss = 0.0;
    for (int i = 0; i < rep.generic.size(); ++i) {
      sg += (entry.generic(i) - rep.generic(i)) *
            (entry.generic(i) - rep.generic(i));
      ss += (entry.specific(i) - rep.specific(i)) *
            (entry.specific(i) - rep.specific(i));
    }
    expected_g += std::sqrt(sg);
    expected_s += std::sqrt(ss);
  }
  expected_g /= static_cast<double>(batch.size());
  expected_s /= static_cast<double>(batch.size());

  CHECK(loss_reg(model, batch, snaps, RegSpace::kGeneric) ==
        doctest::Approx(expected_g).epsilon(1e-12));
  CHECK(loss_reg(model, batch, snaps, RegSpace::kSpecific) ==
        doctest::Approx(expected_s).epsilon(1e-12));
}

TEST_CASE("missing snapshots are reported by example id") {
  const Model model(tiny_config());
  const Batch batch = tiny_batch(2);
  SnapshotStore empty;
  empty.freeze();
  CHECK_THROWS_AS(loss_reg(model, batch, empty, RegSpace::kGeneric),
                  std::runtime_error);
}

TEST_CASE("first-task total is exactly the three-term sum") {
  const Model model(tiny_config(29));
  const Batch batch = tiny_batch(10);
  const LossWeights weights;
  const LossBreakdown b =
      total_loss(model, batch, nullptr, weights, 1, BatchSource::kCurrent);
  CHECK(b.total == b.cls + b.nsp + b.task);
  CHECK(b.reg_generic == 0.0);
  CHECK(b.reg_specific == 0.0);
}

TEST_CASE("zero coefficients reduce to the first-task form at t >= 2") {
  const Model model(tiny_config(31));
  const Batch batch = tiny_batch(11);
  const SnapshotStore snaps = snapshots_for(Model(tiny_config(32)), batch);
  LossWeights weights;
  weights.generic_memory = weights.specific_memory = 0.0;
  weights.generic_current = weights.specific_current = 0.0;
  const LossBreakdown b =
      total_loss(model, batch, &snaps, weights, 3, BatchSource::kMemory);
  CHECK(b.total == b.cls + b.nsp + b.task);
}

TEST_CASE("reported breakdown recombines exactly") {
  // Worked example: {1.0, 0.5, 0.2, reg 0.1/0.2} with memory-batch
  // coefficients 2.5 and 2.0 recombines to 2.35.
  CHECK(1.0 + 0.5 + 0.2 + 2.5 * 0.1 + 2.0 * 0.2 ==
        doctest::Approx(2.35).epsilon(1e-12));

  const Model model(tiny_config(37));
  const Batch batch = tiny_batch(13);
  const SnapshotStore snaps = snapshots_for(Model(tiny_config(38)), batch);
  const LossWeights weights;
  const LossBreakdown b =
      total_loss(model, batch, &snaps, weights, 2, BatchSource::kMemory);
  const double recombined = b.cls + b.nsp + b.task +
                            weights.generic_memory * b.reg_generic +
                            weights.specific_memory * b.reg_specific;
  CHECK(std::abs(b.total - recombined) < 1e-9);
  CHECK(b.reg_generic > 0.0);
  CHECK(b.cls >= 0.0);
  CHECK(b.nsp >= 0.0);
  CHECK(b.task >= 0.0);
}

TEST_CASE("empty batches are rejected") {
  const Model model(tiny_config());
  const Batch empty;
  CHECK_THROWS_WITH_AS(loss_cls(model, empty), doctest::Contains("empty batch"),
                       std::invalid_argument);
}

TEST_CASE("analytic gradients match central finite differences") {
  const ModelConfig config = tiny_config(41);
  const Model model(config);
  const Batch batch = tiny_batch(15, 3, config);
  const SnapshotStore snaps = snapshots_for(Model(tiny_config(43)), batch);

  auto check = [&](LossConfig cfg, const char* what) {
    cfg.snapshots = (cfg.lambda_generic > 0 || cfg.lambda_specific > 0 ||
                     cfg.lambda_combined > 0)
                        ? &snaps
                        : nullptr;
    const GradCheckResult r = check_gradients(model, batch, cfg);
    INFO(what << ": worst at " << r.worst);
    CHECK(r.max_rel_error < 1e-4);
  };

  LossConfig cls_only;
  cls_only.include_nsp = cls_only.include_task = false;
  check(cls_only, "classification");

  LossConfig nsp_only;
  nsp_only.include_cls = nsp_only.include_task = false;
  check(nsp_only, "segment order");

  LossConfig task_only;
  task_only.include_cls = task_only.include_nsp = false;
  check(task_only, "task identity");

  LossConfig reg_g;
  reg_g.include_cls = reg_g.include_nsp = reg_g.include_task = false;
  reg_g.lambda_generic = 1.0;
  check(reg_g, "generic regularizer");

  LossConfig reg_s = reg_g;
  reg_s.lambda_generic = 0.0;
  reg_s.lambda_specific = 1.0;
  check(reg_s, "specific regularizer");

  LossConfig reg_c = reg_g;
  reg_c.lambda_generic = 0.0;
  reg_c.lambda_combined = 1.0;
  check(reg_c, "combined regularizer");

  LossConfig reg_sq = reg_g;
  reg_sq.squared_norm = true;
  check(reg_sq, "squared generic regularizer");

  LossConfig full;  // the combined objective with memory coefficients
  full.lambda_generic = 2.5;
  full.lambda_specific = 2.0;
  check(full, "total objective");
}

TEST_SUITE_END();
