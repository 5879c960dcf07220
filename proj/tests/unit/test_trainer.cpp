#include <cmath>
#include <cstring>

#include "doctest.h"
#include "pshr/checkpoint.hpp"
#include "pshr/ops.hpp"
#include "pshr/trainer.hpp"

using namespace pshr;
using namespace pshr::train;

namespace {

constexpr std::size_t kIds = 4;

// Small enough that a handful of epochs runs in seconds.
ModelConfig tiny_model() {
  ModelConfig m;
  m.backbone.widths = {4, 4, 8, 8};
  m.head.embedding_dim = 8;
  m.head.num_classes = kIds;
  m.sr = {.depth = 3, .width = 8, .reduction = 4};
  return m;
}

TrainRunConfig tiny_run() {
  TrainRunConfig r;
  r.phase1_epochs = 2;
  r.phase2_epochs = 2;
  r.identities = 2;
  r.instances = 2;
  r.losses.mean_normalize = true;
  r.reid_optimizer.lr = 3e-3;
  r.seed = 5;
  return r;
}

const std::vector<data::SampleRecord>& toy_records() {
  static const auto records = data::toy_dataset(kIds, 4, {}, 11);
  return records;
}

std::vector<std::uint8_t> snapshot(const ParameterList& params) {
  Checkpoint c;
  c.add(params);
  return encode(c);
}

ParameterList scalar_param(double w, double g) {
  auto t = Tensor::from({1}, {w}, true);
  sum(scale(t, g)).backward();
  return {{"w", t}};
}

}  // namespace

TEST_CASE("sgd update rule") {
  SUBCASE("zero gradient without decay leaves weights unchanged") {
    auto p = scalar_param(1.5, 0.0);
    Sgd opt(p, {.lr = 0.1, .momentum = 0.9, .weight_decay = 0.0});
    opt.step();
    CHECK(p[0].tensor.at(0) == 1.5);
  }
  SUBCASE("plain step") {
    auto p = scalar_param(1.0, 1.0);
    Sgd opt(p, {.lr = 0.1, .momentum = 0.0, .weight_decay = 0.0});
    opt.step();
    CHECK(p[0].tensor.at(0) == doctest::Approx(0.9).epsilon(1e-15));
  }
  SUBCASE("decay joins the gradient") {
    auto p = scalar_param(2.0, 0.5);
    Sgd opt(p, {.lr = 0.1, .momentum = 0.0, .weight_decay = 5e-4});
    opt.step();
    CHECK(p[0].tensor.at(0) == doctest::Approx(2.0 - 0.1 * (0.5 + 5e-4 * 2.0)).epsilon(1e-15));
  }
  SUBCASE("momentum accumulates") {
    auto p = scalar_param(0.0, 1.0);
    Sgd opt(p, {.lr = 1.0, .momentum = 0.9, .weight_decay = 0.0});
    opt.step();  // v = 1
    opt.step();  // v = 1.9, gradient still 1
    CHECK(p[0].tensor.at(0) == doctest::Approx(-2.9).epsilon(1e-15));
  }
  SUBCASE("missing gradient") {
    ParameterList p{{"w", Tensor::from({1}, {1.0}, true)}};
    Sgd opt(p, {});
    CHECK_THROWS_AS(opt.step(), ContractError);
  }
}

TEST_CASE("step decay schedule") {
  SgdConfig c{.lr = 8.5e-3};
  CHECK(c.lr_at(0) == 8.5e-3);
  CHECK(c.lr_at(29) == 8.5e-3);
  CHECK(c.lr_at(30) == 8.5e-3 * 0.1);
  CHECK(c.lr_at(59) == 8.5e-3 * 0.1);
  CHECK(c.lr_at(60) == doctest::Approx(8.5e-5).epsilon(1e-15));
  CHECK_THROWS_AS((SgdConfig{.lr = 0.0}.validate()), ContractError);
  CHECK_THROWS_AS((SgdConfig{.decay_factor = 1.5}.validate()), ContractError);
  CHECK_THROWS_AS((SgdConfig{.decay_factor = 0.0}.validate()), ContractError);
}

TEST_CASE("run configuration checks") {
  auto r = tiny_run();
  r.phase1_epochs = 0;
  CHECK_THROWS_AS(r.validate(), ContractError);
  r = tiny_run();
  r.phase2_epochs = 0;
  CHECK_THROWS_AS(r.validate(), ContractError);
  r = tiny_run();
  r.instances = 1;
  CHECK_THROWS_AS(r.validate(), ContractError);

  auto m = tiny_model();
  m.head.num_classes = kIds + 1;
  CHECK_THROWS_AS(train_phase1(m, tiny_run(), toy_records()), ContractError);
}

TEST_CASE("label map and seeds") {
  std::vector<data::SampleRecord> recs(3);
  recs[0].id = 40;
  recs[1].id = 7;
  recs[2].id = 40;
  LabelMap map(recs);
  CHECK(map.classes() == 2);
  CHECK(map(7) == 1);
  CHECK(map(40) == 2);
  CHECK_THROWS_AS(map(8), ContractError);

  CHECK(derive_seed(1, 1) == derive_seed(1, 1));
  CHECK(derive_seed(1, 1) != derive_seed(1, 2));
  CHECK(derive_seed(1, 1) != derive_seed(2, 1));
}

TEST_CASE("loss curve csv") {
  std::vector<EpochLosses> curve{{1, 1, 2.5, 0.0, 0.0, 2.5}, {1, 2, 1.0, 0.25, 3.0, 2.625}};
  CHECK(loss_curve_csv(curve) == "epoch,phase,L_ID,L_SR,L_PS,L_TOTAL\n1,1,2.5,0,0,2.5\n1,2,1,0.25,3,2.625\n");
}

TEST_CASE("phase one lowers the identity loss and replays bit for bit") {
  auto run = tiny_run();
  run.phase1_epochs = 6;
  std::vector<std::size_t> sink_epochs;
  run.checkpoint_every = 2;
  auto a = train_phase1(tiny_model(), run, toy_records(),
                        [&](std::size_t epoch, const ParameterList&) { sink_epochs.push_back(epoch); });
  REQUIRE(a.curve.size() == 6);
  CHECK(a.curve.back().id < a.curve.front().id);
  CHECK(sink_epochs == std::vector<std::size_t>{2, 4, 6});
  for (const auto& e : a.curve) CHECK(e.phase == 1);

  auto b = train_phase1(tiny_model(), run, toy_records());
  CHECK(snapshot(a.hr_net->parameters()) == snapshot(b.hr_net->parameters()));
  CHECK(loss_curve_csv(a.curve) == loss_curve_csv(b.curve));
}

TEST_CASE("phase two") {
  const auto model = tiny_model();
  auto run = tiny_run();
  run.phase1_epochs = 3;
  const auto phase1 = train_phase1(model, run, toy_records());
  const ParameterList weights = phase1.hr_net->parameters();

  SUBCASE("L starts as a copy of H and the first batch has a positive PS term") {
    auto m = init_phase2(model, run, weights);
    CHECK(snapshot(m.lr_net->parameters()) == snapshot(weights));
    CHECK(snapshot(m.hr_net->parameters()) == snapshot(weights));

    data::PkSampler sampler(toy_records(), {.identities = 2, .instances = 2}, 3);
    const auto batch = sampler.next_epoch().front();
    LabelMap labels(toy_records());
    Sgd sr_opt(m.restorer->parameters(), run.sr_optimizer), lr_opt(m.lr_net->parameters(), run.reid_optimizer);
    const auto s = phase2_step(m, run, batch, labels, {&sr_opt, &lr_opt});
    CHECK(s.ps > 0.0);
    CHECK(s.total == doctest::Approx(s.id + 0.5 * s.sr + 0.5 * s.ps).epsilon(1e-12));
  }

  SUBCASE("PS vanishes when both branches see the same images") {
    auto m = init_phase2(model, run, weights);
    const auto x = data::to_batch(toy_records()[0].image);
    CHECK(loss::ps_loss(m.hr_net->forward(x), m.lr_net->forward(x), run.losses.ps_combination).item() == 0.0);
  }

  SUBCASE("zero SR and PS weights leave only the identity loss") {
    auto r = run;
    r.losses.sr = 0.0;
    r.losses.ps = 0.0;
    auto res = train_phase2(model, r, weights, toy_records());
    for (const auto& e : res.curve) CHECK(e.total == doctest::Approx(e.id).epsilon(1e-12));
  }

  SUBCASE("frozen teacher is untouched and the checkpoint omits it") {
    std::vector<std::string> names;
    auto res = train_phase2(model, run, weights, toy_records(), [&](std::size_t, const ParameterList& params) {
      for (const auto& p : params) names.push_back(p.name);
    });
    CHECK(snapshot(res.models.hr_net->parameters()) == snapshot(weights));
    CHECK(snapshot(res.models.lr_net->parameters()) != snapshot(weights));
    bool teacher = false, sr = false, reid = false;
    for (const auto& n : names) {
      teacher |= n.rfind("teacher.", 0) == 0;
      sr |= n.rfind("sr.", 0) == 0;
      reid |= n.rfind("reid.", 0) == 0;
    }
    CHECK(!teacher);
    CHECK(sr);
    CHECK(reid);
  }

  SUBCASE("an unfrozen teacher trains and is checkpointed") {
    auto r = run;
    r.freeze_hr = false;
    bool teacher = false;
    auto res = train_phase2(model, r, weights, toy_records(), [&](std::size_t, const ParameterList& params) {
      for (const auto& p : params) teacher |= p.name.rfind("teacher.", 0) == 0;
    });
    CHECK(teacher);
    CHECK(snapshot(res.models.hr_net->parameters()) != snapshot(weights));
  }

  SUBCASE("literal routing runs") {
    auto r = run;
    r.literal_route = true;
    r.phase2_epochs = 1;
    auto res = train_phase2(model, r, weights, toy_records());
    CHECK(std::isfinite(res.curve.back().total));
  }

  SUBCASE("mismatched phase-one weights are rejected") {
    auto other = model;
    other.backbone.widths = {4, 4, 8, 16};
    CHECK_THROWS_AS(init_phase2(other, run, weights), ContractError);
  }

  SUBCASE("total loss falls over fifty steps and weights stay finite") {
    auto r = run;
    r.phase2_epochs = 25;  // two batches per epoch: 50 steps
    auto res = train_phase2(model, r, weights, toy_records());
    CHECK(res.curve.back().total < res.curve.front().total);
    for (const auto& p : res.models.checkpoint_parameters(false))
      for (double v : p.tensor.data()) REQUIRE(std::isfinite(v));
  }
}
