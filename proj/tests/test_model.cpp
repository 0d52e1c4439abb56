#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "idbr/model.hpp"

using namespace idbr;
using idbr::testing::tiny_config;

TEST_SUITE_BEGIN("model");

TEST_CASE("config validation") {
  ModelConfig c = tiny_config();
  c.vocab_size = 1;
  CHECK_THROWS_AS(Model{c}, std::invalid_argument);
  c = tiny_config();
  c.feature_dim = 0;
  CHECK_THROWS_AS(Model{c}, std::invalid_argument);
}

TEST_CASE("zero embedding table pools to the zero vector") {
  Model model(tiny_config());
  model.params().embedding.setZero();
  const std::vector<int> tokens = {2, 5, 7};
  CHECK(model.pool(tokens).norm() == 0.0);
}

TEST_CASE("evaluation forward is deterministic") {
  const Model model(tiny_config(3));
  const std::vector<int> tokens = {2, 3, 4, 5};
  const Eigen::VectorXd a = model.encode(tokens);
  const Eigen::VectorXd b = model.encode(tokens);
  CHECK((a - b).norm() == 0.0);
}

TEST_CASE("mean pooling: one token equals two copies of it") {
  ModelConfig c = tiny_config();
  c.position_modulation = false;  // plain mean pooling
  const Model model(c);
  const Eigen::VectorXd one = model.pool(std::vector<int>{4});
  const Eigen::VectorXd two = model.pool(std::vector<int>{4, 4});
  CHECK((one - two).norm() == 0.0);
  // And the pooled value is exactly the embedding row.
  CHECK((one.transpose() - model.params().embedding.row(4)).norm() == 0.0);
}

TEST_CASE("position modulation makes pooling order sensitive") {
  const Model model(tiny_config());  // modulation on by default
  const Eigen::VectorXd ab = model.pool(std::vector<int>{2, 3});
  const Eigen::VectorXd ba = model.pool(std::vector<int>{3, 2});
  CHECK((ab - ba).norm() > 1e-8);

  ModelConfig plain = tiny_config();
  plain.position_modulation = false;
  const Model flat(plain);
  CHECK((flat.pool(std::vector<int>{2, 3}) - flat.pool(std::vector<int>{3, 2}))
            .norm() == 0.0);
}

TEST_CASE("extract with zero weights gives zero features") {
  Model model(tiny_config());
  model.params().generic_w.setZero();
  model.params().generic_b.setZero();
  model.params().specific_w.setZero();
  model.params().specific_b.setZero();
  const auto [g, s] = model.extract(Eigen::VectorXd::Ones(4));
  CHECK(g.norm() == 0.0);
  CHECK(s.norm() == 0.0);
}

TEST_CASE("scalar extractor: tanh(2 * 0.5) = tanh(1)") {
  ModelConfig c = tiny_config();
  c.encoder_dim = 1;
  c.feature_dim = 1;
  Model model(c);
  model.params().generic_w(0, 0) = 2.0;
  model.params().generic_b(0) = 0.0;
  Eigen::VectorXd r(1);
  r << 0.5;
  const auto [g, s] = model.extract(r);
  CHECK(g(0) == doctest::Approx(0.7615941559557649).epsilon(1e-12));
}

TEST_CASE("extractor outputs stay inside the tanh range") {
  const Model model(tiny_config(9));
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd r(4);
    for (int i = 0; i < 4; ++i) r(i) = rng.uniform(-3.0, 3.0);
    const auto [g, s] = model.extract(r);
    CHECK(g.cwiseAbs().maxCoeff() < 1.0);
    CHECK(s.cwiseAbs().maxCoeff() < 1.0);
  }
}

TEST_CASE("zero logits give the uniform distribution over 33 classes") {
  ModelConfig c = tiny_config();
  c.num_classes = 33;
  Model model(c);
  model.params().cls_head_w.setZero();
  model.params().cls_head_b.setZero();
  const Eigen::VectorXd p = model.predict_class(Eigen::VectorXd::Zero(3),
                                                Eigen::VectorXd::Zero(3));
  REQUIRE(p.size() == 33);
  for (int i = 0; i < 33; ++i) {
    CHECK(p(i) == doctest::Approx(1.0 / 33.0).epsilon(1e-12));
  }
}

TEST_CASE("two-class toy softmax matches the hand computation") {
  ModelConfig c = tiny_config();
  c.num_classes = 2;
  Model model(c);
  model.params().cls_head_w.setZero();
  model.params().cls_head_b << 1.0, 0.0;
  const Eigen::VectorXd p = model.predict_class(Eigen::VectorXd::Zero(3),
                                                Eigen::VectorXd::Zero(3));
  CHECK(p(0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(p(1) == doctest::Approx(0.2689414213699951).epsilon(1e-12));
}

TEST_CASE("head distributions normalize on random inputs") {
  const Model model(tiny_config(21));
  Rng rng(2);
  for (int trial = 0; trial < 25; ++trial) {
    Eigen::VectorXd g(3), s(3);
    for (int i = 0; i < 3; ++i) {
      g(i) = rng.uniform(-1.0, 1.0);
      s(i) = rng.uniform(-1.0, 1.0);
    }
    for (const Eigen::VectorXd& p :
         {model.predict_class(g, s), model.predict_nsp(g),
          model.predict_task(s)}) {
      CHECK(std::abs(p.sum() - 1.0) < 1e-6);
      CHECK(p.minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("frozen clone is unaffected by later edits") {
  Model model(tiny_config(5));
  const Model clone = model.clone_frozen();
  const std::vector<int> tokens = {2, 3, 4};
  const Eigen::VectorXd before = model.encode(tokens);

  model.params().embedding.array() += 0.25;  // "training"
  model.params().cls_head_b.array() -= 0.5;

  CHECK(clone.params().max_abs_difference(clone.clone_frozen().params()) == 0.0);
  CHECK((clone.encode(tokens) - before).norm() == 0.0);
  CHECK(model.params().max_abs_difference(clone.params()) > 0.0);
}

TEST_CASE("encode rejects bad inputs") {
  const Model model(tiny_config());
  CHECK_THROWS_AS(model.encode(std::vector<int>{}), std::invalid_argument);
  CHECK_THROWS_AS(model.encode(std::vector<int>{99}), std::invalid_argument);
  CHECK_THROWS_AS(model.encode(std::vector<int>{-1}), std::invalid_argument);
  const std::vector<int> too_long(40, 2);
  CHECK_THROWS_AS(model.encode(too_long), std::invalid_argument);
}

TEST_CASE("dimension mismatches are rejected") {
  const Model model(tiny_config());
  CHECK_THROWS_AS(model.extract(Eigen::VectorXd::Zero(3)),
                  std::invalid_argument);
  CHECK_THROWS_AS(model.predict_class(Eigen::VectorXd::Zero(2),
                                      Eigen::VectorXd::Zero(3)),
                  std::invalid_argument);
  CHECK_THROWS_AS(model.predict_nsp(Eigen::VectorXd::Zero(4)),
                  std::invalid_argument);
}

TEST_CASE("parameter views cover every tensor exactly once") {
  Model model(tiny_config());
  const auto views = model.params().views();
  CHECK(views.size() == 15);
  Eigen::Index total = 0;
  for (const auto& v : views) total += v.size;
  CHECK(total == model.params().total_size());
  CHECK(total == 157);  // the toy configuration stays under 500 parameters
}

TEST_SUITE_END();
