#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "sattn/rng.hpp"
#include "sattn/trainer.hpp"

using namespace sattn;

namespace {

TrainConfig tiny(Task task) {
  TrainConfig c = TrainConfig::desk(task, Mechanism::Strassen);
  c.d = 8;
  c.count = 120;
  c.batch = 40;
  c.epochs = 2;
  return c;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("sattn_test_" + name)).string();
}

} // namespace

TEST_CASE("masked binary cross-entropy") {
  const std::vector<double> sure{20.0, -20.0, 20.0};
  CHECK(bce_masked_loss(sure, std::vector<std::int64_t>{1, 0, 1}) < 1e-8);

  const std::vector<double> one{0.0, 5.0, -3.0};
  CHECK(bce_masked_loss(one, std::vector<std::int64_t>{1, kMaskedLabel, kMaskedLabel}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));

  const std::vector<double> z{0.3, -1.2, 2.5};
  const std::vector<std::int64_t> y{1, 0, 0};
  auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double expect = -(std::log(sigmoid(0.3)) + std::log(1.0 - sigmoid(-1.2)) + std::log(1.0 - sigmoid(2.5))) / 3.0;
  CHECK(bce_masked_loss(z, y) == doctest::Approx(expect).epsilon(1e-14));

  CHECK_THROWS_AS(bce_masked_loss(z, std::vector<std::int64_t>(3, kMaskedLabel)), std::invalid_argument);
  CHECK_THROWS(bce_masked_loss(z, std::vector<std::int64_t>{1, 0}));
}

TEST_CASE("per-batch mean accuracy") {
  const std::vector<BatchCounts> two{{10, 10}, {2, 4}};
  CHECK(per_batch_mean_accuracy(two) == doctest::Approx(0.75));
  const std::vector<BatchCounts> skip{{3, 3}, {0, 0}};
  CHECK(per_batch_mean_accuracy(skip) == 1.0);
  const std::vector<BatchCounts> order_a{{1, 4}, {3, 4}, {2, 4}};
  const std::vector<BatchCounts> order_b{{2, 4}, {1, 4}, {3, 4}};
  CHECK(per_batch_mean_accuracy(order_a) == doctest::Approx(per_batch_mean_accuracy(order_b)).epsilon(1e-15));
}

TEST_CASE("featurizer padding") {
  const TrainConfig c = tiny(Task::Quotient);
  const Featurizer f = Featurizer::make(c);
  RngStream rng(101);
  QuotientGen g;
  g.nmin = g.nmax = 3;
  const TaskInstance inst = gen_quotient(rng, 1, g).front();
  const Featurizer::Encoded e = f.encode(inst, 4);
  REQUIRE(e.targets.size() == 16);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const std::size_t t = i * 4 + j;
      const bool inside = i < 3 && j < 3;
      CHECK(e.pad[t] == (inside ? 0 : 1));
      if (!inside) CHECK(e.targets[t] == kMaskedLabel);
      if (inside) CHECK(e.targets[t] == inst.y[i * 3 + j]);
    }
  CHECK_THROWS(f.encode(inst, 2));
}

TEST_CASE("evaluation counts only labelled positions") {
  const TrainConfig c = tiny(Task::Quotient);
  RngStream rng(102);
  const Model model = Model::init(c, rng);
  std::vector<TaskInstance> data = make_dataset(c);
  data.resize(10);
  std::vector<BatchCounts> counts;
  for (std::size_t start = 0; start < data.size(); start += 4) {
    std::size_t len = 0;
    for (std::size_t t = start; t < std::min(data.size(), start + 4); ++t) len = std::max(len, *data[t].meta.m);
    BatchCounts bc;
    for (std::size_t t = start; t < std::min(data.size(), start + 4); ++t) {
      const Vector z = model.logits(data[t], len);
      const Featurizer::Encoded e = model.features.encode(data[t], len);
      for (std::size_t k = 0; k < z.size(); ++k) {
        if (e.targets[k] == kMaskedLabel) continue;
        ++bc.labelled;
        if (readout_sign(z[k]) == e.targets[k]) ++bc.correct;
      }
    }
    counts.push_back(bc);
  }
  CHECK(evaluate(model, data, 4).accuracy == doctest::Approx(per_batch_mean_accuracy(counts)).epsilon(1e-15));
  CHECK_THROWS(evaluate(model, {}, 4));
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  TrainConfig c = tiny(Task::FuncComp);
  c.lr = 0.0;
  c.epochs = 3;
  const auto data = make_dataset(c);
  RngStream rng(c.seed);
  RngStream init_rng = rng.split();
  const Model start = Model::init(c, init_rng);
  const TrainResult r = train(c, data);
  REQUIRE(r.model.params.size() == start.params.size());
  for (std::size_t i = 0; i < start.params.size(); ++i) CHECK(r.model.params[i] == start.params[i]);
  for (const auto& m : r.metrics) CHECK(m.train_accuracy == r.metrics.front().train_accuracy);
}

TEST_CASE("adamw with zero rate is a no-op") {
  std::vector<Matrix> p{Matrix::from_rows({{1.0, -2.0}})};
  const std::vector<Matrix> g{Matrix::from_rows({{0.5, 0.5}})};
  AdamW opt(0.0, 0.9, 0.999, 1e-8, 0.01);
  opt.step(p, g);
  CHECK(p[0] == Matrix::from_rows({{1.0, -2.0}}));
  AdamW moving(0.1, 0.9, 0.999, 1e-8, 0.0);
  moving.step(p, g);
  // First bias-corrected step moves each coordinate by lr against the gradient sign.
  CHECK(p[0](0, 0) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(moving.steps() == 1);
}

TEST_CASE("training is deterministic per seed") {
  const TrainConfig c = tiny(Task::BinRel);
  const auto data = make_dataset(c);
  const TrainResult a = train(c, data);
  const TrainResult b = train(c, data);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t e = 0; e < a.metrics.size(); ++e) {
    CHECK(a.metrics[e].train_loss == b.metrics[e].train_loss);
    CHECK(a.metrics[e].train_accuracy == b.metrics[e].train_accuracy);
    CHECK(a.metrics[e].val_accuracy == b.metrics[e].val_accuracy);
  }
  CHECK(a.train_size + a.val_size == data.size());
  CHECK(a.val_size == 12);
}

TEST_CASE("one epoch lowers the training loss on every task") {
  for (Task task : {Task::FuncComp, Task::BinRel, Task::Match3, Task::Quotient}) {
    CAPTURE(std::string(task_name(task)));
    TrainConfig c = TrainConfig::desk(task, Mechanism::Strassen);
    c.epochs = 1;
    const TrainResult r = train(c, make_dataset(c));
    CHECK(r.metrics.front().train_eval_loss <= r.initial_train_loss);
  }
}

TEST_CASE("config files and overrides") {
  std::istringstream in("# run\nlr = 0.01\nepochs=7\n\ntask = binrel\n");
  TrainConfig c;
  c.apply(parse_key_values(in));
  CHECK(c.lr == 0.01);
  CHECK(c.epochs == 7);
  CHECK(c.task == Task::BinRel);
  CHECK_THROWS_AS(c.apply({{"colour", "red"}}), std::invalid_argument);
  CHECK_THROWS_AS(c.apply({{"lr", "fast"}}), std::invalid_argument);
  TrainConfig round;
  round.apply(c.to_map());
  CHECK(round.to_map() == c.to_map());

  const TrainConfig paper = TrainConfig::paper(Task::Match3, Mechanism::Strassen);
  CHECK(paper.d == 128);
  CHECK(paper.heads == 2);
  CHECK(paper.dropout == 0.4);
  CHECK(TrainConfig::paper(Task::Quotient, Mechanism::Strassen).batch == 2000);
  TrainConfig tri = TrainConfig::desk(Task::FuncComp, Mechanism::Triangular);
  CHECK_THROWS_AS(tri.validate(), std::invalid_argument);
}

TEST_CASE("metrics and checkpoints") {
  TrainConfig c = tiny(Task::FuncComp);
  c.metrics_path = temp_path("metrics.csv");
  c.checkpoint_path = temp_path("model.ckpt");
  std::remove(c.metrics_path.c_str());
  const auto data = make_dataset(c);
  const TrainResult r = train(c, data);

  std::ifstream metrics(c.metrics_path);
  std::string header;
  std::getline(metrics, header);
  CHECK(header == "epoch,split,loss,accuracy,seconds");
  std::size_t rows = 0;
  for (std::string line; std::getline(metrics, line);) ++rows;
  CHECK(rows == 2 * c.epochs);

  const Model back = load_checkpoint(c.checkpoint_path);
  REQUIRE(back.params.size() == r.model.params.size());
  for (std::size_t i = 0; i < back.params.size(); ++i) CHECK(back.params[i] == r.model.params[i]);
  CHECK(back.config.to_map() == r.model.config.to_map());
  std::remove(c.metrics_path.c_str());
  std::remove(c.checkpoint_path.c_str());
}
