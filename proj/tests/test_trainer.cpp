#include <doctest.h>

#include <cmath>
#include <vector>

#include "sparsetrain/data_io.hpp"
#include "sparsetrain/errors.hpp"
#include "sparsetrain/loss.hpp"
#include "sparsetrain/schedules.hpp"
#include "sparsetrain/trainer.hpp"

using namespace sparsetrain;

namespace {

ModelSpec mlp_spec(std::vector<int> input_shape, std::vector<int> widths,
                   bool exempt = false) {
  ModelSpec spec;
  spec.input_shape = std::move(input_shape);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    LayerSpec ls;
    ls.out_features = widths[i];
    ls.relu = i + 1 < widths.size();
    ls.dense_exempt = exempt;
    spec.layers.push_back(ls);
  }
  return spec;
}

AutoTuneConfig scripted_autotune() {
  AutoTuneConfig at;
  at.tuning_epochs = 6;
  at.ref_loss = {1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  return at;  // eps defaults (.01, .05, .005)
}

}  // namespace

TEST_CASE("sgd_step: worked single steps") {
  std::vector<float> p = {1.0f}, g = {0.0f}, buf = {0.0f};
  sgd_step<float>(p, g, buf, 0.37, 0.875, 0.0);
  CHECK(p[0] == 1.0f);  // zero gradient, zero decay: no-op

  p = {1.0f};
  g = {0.5f};
  buf = {0.0f};
  sgd_step<float>(p, g, buf, 0.1, 0.875, 0.0);
  CHECK(p[0] == doctest::Approx(0.95).epsilon(1e-6));
  CHECK(buf[0] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("sgd_step: two steps match the hand-unrolled recurrence") {
  const double lr = 0.1, mom = 0.875, wd = 0.01;
  const double p0 = 1.0, g1 = 0.5, g2 = -0.2;
  // buf1 = g1 + wd*p0; p1 = p0 - lr*buf1
  // buf2 = mom*buf1 + (g2 + wd*p1); p2 = p1 - lr*buf2
  const double buf1 = g1 + wd * p0;
  const double p1 = p0 - lr * buf1;
  const double buf2 = mom * buf1 + (g2 + wd * p1);
  const double p2 = p1 - lr * buf2;

  std::vector<float> p = {static_cast<float>(p0)}, buf = {0.0f};
  std::vector<float> ga = {static_cast<float>(g1)}, gb = {static_cast<float>(g2)};
  sgd_step<float>(p, ga, buf, lr, mom, wd);
  CHECK(p[0] == doctest::Approx(p1).epsilon(1e-6));
  sgd_step<float>(p, gb, buf, lr, mom, wd);
  CHECK(p[0] == doctest::Approx(p2).epsilon(1e-6));
  CHECK(buf[0] == doctest::Approx(buf2).epsilon(1e-6));
}

TEST_CASE("sgd_step: shape and divergence guards") {
  std::vector<float> p = {1.0f, 2.0f}, g = {0.1f}, buf = {0.0f, 0.0f};
  CHECK_THROWS_AS(sgd_step<float>(p, g, buf, 0.1, 0.9, 0.0), std::invalid_argument);

  std::vector<float> p2 = {1.0f}, inf_g = {std::numeric_limits<float>::infinity()},
                     buf2 = {0.0f};
  CHECK_THROWS_AS(sgd_step<float>(p2, inf_g, buf2, 0.1, 0.9, 0.0), DivergedError);
}

TEST_CASE("smoothed cross entropy: closed-form cases") {
  SUBCASE("uniform logits always cost log K") {
    const std::vector<double> logits = {0.7, 0.7, 0.7, 0.7};
    for (double sm : {0.0, 0.1, 0.5}) {
      CHECK(std::abs(smoothed_cross_entropy<double>(logits, 2, sm) - std::log(4.0)) <
            1e-12);
    }
  }
  SUBCASE("confident correct logit with no smoothing costs ~0") {
    const std::vector<double> logits = {50.0, 0.0, 0.0};
    CHECK(smoothed_cross_entropy<double>(logits, 0, 0.0) < 1e-9);
  }
  SUBCASE("random 3-class case matches the direct formula") {
    const std::vector<double> logits = {0.3, -1.2, 2.1};
    const int target = 1;
    const double sm = 0.1;
    double z = 0.0;
    for (double v : logits) z += std::exp(v);
    double want = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double q = sm / 3.0 + (i == target ? 1.0 - sm : 0.0);
      want -= q * (logits[i] - std::log(z));
    }
    CHECK(std::abs(smoothed_cross_entropy<double>(logits, target, sm) - want) < 1e-12);
  }
  SUBCASE("domain checks") {
    const std::vector<double> logits = {0.0, 1.0};
    CHECK_THROWS_AS(smoothed_cross_entropy<double>(logits, 2, 0.1),
                    std::invalid_argument);
    CHECK_THROWS_AS(smoothed_cross_entropy<double>(logits, 0, 1.0),
                    std::invalid_argument);
  }
}

TEST_CASE("smoothed_ce_batch: gradient sums to zero and matches softmax - q") {
  const std::vector<double> logits = {0.3, -1.2, 2.1, 0.0, 0.5, -0.5};
  const std::vector<int> labels = {2, 0};
  std::vector<double> grad(6);
  const double loss =
      smoothed_ce_batch<double>(logits, labels, 3, 0.1, std::span<double>(grad));
  const double a = smoothed_cross_entropy<double>(
      std::span<const double>(logits.data(), 3), 2, 0.1);
  const double b = smoothed_cross_entropy<double>(
      std::span<const double>(logits.data() + 3, 3), 0, 0.1);
  CHECK(loss == doctest::Approx((a + b) / 2.0).epsilon(1e-12));
  // each row's gradient sums to zero (softmax and q both sum to 1)
  CHECK(std::abs(grad[0] + grad[1] + grad[2]) < 1e-15);
  CHECK(std::abs(grad[3] + grad[4] + grad[5]) < 1e-15);
  // spot-check one entry against the closed form
  double z = std::exp(0.3) + std::exp(-1.2) + std::exp(2.1);
  const double want = (std::exp(0.3) / z - 0.1 / 3.0) / 2.0;
  CHECK(grad[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("autotune_alpha: branch arithmetic and clamping") {
  AutoTuneConfig cfg = scripted_autotune();
  CHECK(autotune_alpha(0.5, 0, 1.02, cfg) == doctest::Approx(0.525).epsilon(1e-12));
  CHECK(autotune_alpha(0.5, 0, 1.005, cfg) == doctest::Approx(0.4975).epsilon(1e-12));
  CHECK(autotune_alpha(1.0, 0, 2.0, cfg) == 1.0);  // clamped
  // the tolerance comparison is >=, so hitting it exactly still raises alpha
  CHECK(autotune_alpha(0.5, 0, 1.01, cfg) == doctest::Approx(0.525).epsilon(1e-12));
  CHECK_THROWS_AS(autotune_alpha(0.5, 6, 1.0, cfg), std::invalid_argument);
  CHECK_THROWS_AS(autotune_alpha(0.5, -1, 1.0, cfg), std::invalid_argument);
}

TEST_CASE("post_tune_schedule: endpoints, midpoint, reset") {
  CHECK(post_tune_schedule(0.6, 9, 9, 100) == 0.6);  // decay scale 1 at offset 0
  CHECK(post_tune_schedule(0.6, 90, 9, 100, 90) == 0.0);
  CHECK(post_tune_schedule(0.6, 95, 9, 100, 90) == 0.0);
  // offset midpoint: both decay components sit at 1/2
  CHECK(post_tune_schedule(0.6, 60, 10, 110) == doctest::Approx(0.3).epsilon(1e-9));
  // degenerate span keeps the tuned value
  CHECK(post_tune_schedule(0.6, 5, 5, 5) == 0.6);
  CHECK_THROWS_AS(post_tune_schedule(0.6, 3, 9, 100), std::invalid_argument);
}

TEST_CASE("alpha controller: scripted loss sequence drives the exact trajectory") {
  // 9 epochs: 6 tuning epochs against ref losses of 1.0, then the frozen
  // value decays by sigmoid-cosine over the remaining 3, zeroed at epoch 8.
  AlphaController ctl(0.5, AnnealSchedule{}, 9, 8, scripted_autotune());
  const std::vector<double> losses = {1.02, 1.005, 2.0, 0.5, 1.01, 0.99};

  // hand-unrolled multiplicative path (branch per epoch: + - + - + -)
  double a = 0.5;
  std::vector<double> expected = {a};
  a *= 1.0 + 0.05;   expected.push_back(a);  // 1.02  >= 1.01
  a *= 1.0 - 0.005;  expected.push_back(a);  // 1.005 <  1.01
  a *= 1.0 + 0.05;   expected.push_back(a);  // 2.0   >= 1.01
  a *= 1.0 - 0.005;  expected.push_back(a);  // 0.5   <  1.01
  a *= 1.0 + 0.05;   expected.push_back(a);  // 1.01  >= 1.01 (boundary)
  a *= 1.0 - 0.005;  // frozen tuned value after epoch 5

  for (int e = 0; e < 6; ++e) {
    CHECK(ctl.alpha_for_epoch(e) == expected[static_cast<std::size_t>(e)]);
    ctl.on_epoch_end(e, losses[static_cast<std::size_t>(e)]);
  }
  // handoff: frozen value, scale 1 at the first post-tuning epoch
  CHECK(ctl.alpha_for_epoch(6) == a);
  // further losses must not move the frozen value
  ctl.on_epoch_end(6, 99.0);
  CHECK(ctl.alpha_for_epoch(7) == a * sigmoid_cosine_decay(1, 3, -6.0, 6.0));
  CHECK(ctl.alpha_for_epoch(8) == 0.0);  // reset epoch
  // monotone after the tuning phase
  CHECK(ctl.alpha_for_epoch(6) >= ctl.alpha_for_epoch(7));
  CHECK(ctl.alpha_for_epoch(7) >= ctl.alpha_for_epoch(8));
}

TEST_CASE("alpha controller without autotune follows the annealing schedule") {
  AnnealSchedule sched;
  sched.kind = AnnealKind::SigmoidCosine;
  AlphaController ctl(0.75, sched, 20, 18, std::nullopt);
  double prev = 1.0;
  for (int e = 0; e < 20; ++e) {
    const double got = ctl.alpha_for_epoch(e);
    CHECK(got == alpha_at_epoch(0.75, sched, e, 20, 18));
    CHECK(got <= prev);
    prev = got;
    ctl.on_epoch_end(e, 123.0);  // ignored: no autotune
  }
  CHECK(ctl.alpha_for_epoch(18) == 0.0);
  CHECK(ctl.alpha_for_epoch(19) == 0.0);
}

TEST_CASE("evaluate: argmax accuracy with first-index tie break") {
  ModelSpec spec = mlp_spec({2}, {2}, /*exempt=*/true);
  Model model = build_model<float>(spec, 1);
  model.layers[0].weights = {1.0f, 0.0f, 0.0f, 1.0f};  // identity

  LabeledDataset data;
  data.inputs = {2.0f, 0.0f, 0.0f, 2.0f, 3.0f, 1.0f};
  data.labels = {0, 1, 1};  // last sample actually argmaxes to class 0
  data.shape = {2};
  data.num_classes = 2;
  CHECK(evaluate(model, data, 2) == doctest::Approx(2.0 / 3.0));

  // all-equal logits resolve to class 0
  model.layers[0].weights = {0.0f, 0.0f, 0.0f, 0.0f};
  CHECK(evaluate(model, data, 2) == doctest::Approx(1.0 / 3.0));

  CHECK_THROWS_AS(evaluate(model, data, 0), std::invalid_argument);
}

TEST_CASE("train: zero epochs returns the model untouched") {
  Model model = build_model<float>(mlp_spec({4}, {3}), 5);
  const std::vector<float> before = model.layers[0].weights;
  const LabeledDataset data = synth_gaussian_blobs(3, 4, 5, 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  const TrainResult result = train(model, data, nullptr, cfg);
  CHECK(result.records.empty());
  CHECK(model.layers[0].weights == before);
}

TEST_CASE("train: config validation names the offending field") {
  Model model = build_model<float>(mlp_spec({4}, {3}), 5);
  const LabeledDataset data = synth_gaussian_blobs(3, 4, 5, 1);
  TrainConfig cfg;
  cfg.epochs = 2;

  TrainConfig bad = cfg;
  bad.momentum = 1.0;
  CHECK_THROWS_WITH_AS(train(model, data, nullptr, bad),
                       doctest::Contains("momentum"), ConfigError);

  bad = cfg;
  bad.alpha0 = 1.5;
  CHECK_THROWS_WITH_AS(train(model, data, nullptr, bad),
                       doctest::Contains("alpha0"), ConfigError);

  bad = cfg;
  bad.autotune = AutoTuneConfig{};
  bad.autotune->tuning_epochs = 5;  // exceeds epochs and has no ref losses
  CHECK_THROWS_AS(train(model, data, nullptr, bad), ConfigError);

  bad = cfg;
  bad.backward_superset.mode = SupersetMode::TopKFraction;
  bad.backward_superset.keep_fraction = 0.0;
  CHECK_THROWS_WITH_AS(train(model, data, nullptr, bad),
                       doctest::Contains("keep_fraction"), ConfigError);

  const LabeledDataset wrong_dim = synth_gaussian_blobs(3, 5, 4, 1);
  CHECK_THROWS_AS(train(model, wrong_dim, nullptr, cfg), std::invalid_argument);
}

TEST_CASE("train: loss decreases on separable blobs with pruning disabled") {
  Model model = build_model<float>(mlp_spec({4}, {8, 2}, /*exempt=*/true), 11);
  const LabeledDataset data = synth_gaussian_blobs(2, 4, 40, 3);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 16;
  cfg.max_lr = 0.1;
  cfg.warmup = 1;
  cfg.seed = 9;
  const TrainResult result = train(model, data, nullptr, cfg);
  REQUIRE(result.records.size() == 20);
  CHECK(result.records.back().train_loss < result.records.front().train_loss);
  CHECK(result.records.back().eval_accuracy > 0.95);
  // fully dense run costs exactly the dense budget
  CHECK(result.fractions.train_fraction == doctest::Approx(1.0));
  CHECK(result.fractions.infer_fraction == doctest::Approx(1.0));
  for (const EpochRecord& rec : result.records) {
    CHECK(rec.global_sparsity == 0.0);
    CHECK(rec.lr == lr_at_epoch(LrSchedule{0.1, 1, 20}, rec.epoch));
  }
}

TEST_CASE("train: alpha column reflects the schedule and zero_from") {
  Model model = build_model<float>(mlp_spec({4}, {3}), 2);
  const LabeledDataset data = synth_gaussian_blobs(3, 4, 6, 2);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 6;
  cfg.max_lr = 0.01;
  cfg.warmup = 1;
  cfg.alpha0 = 0.4;
  cfg.schedule.kind = AnnealKind::Fixed;
  cfg.zero_from = 2;
  const TrainResult result = train(model, data, nullptr, cfg);
  REQUIRE(result.records.size() == 3);
  CHECK(result.records[0].alpha == 0.4);
  CHECK(result.records[1].alpha == 0.4);
  CHECK(result.records[2].alpha == 0.0);
}

TEST_CASE("train: bitwise deterministic given the seed") {
  const LabeledDataset data = synth_gaussian_blobs(3, 6, 20, 4);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 8;
  cfg.max_lr = 0.02;
  cfg.warmup = 2;
  cfg.alpha0 = 0.5;
  cfg.seed = 77;

  Model m1 = build_model<float>(mlp_spec({6}, {5, 3}), 13);
  Model m2 = build_model<float>(mlp_spec({6}, {5, 3}), 13);
  const TrainResult r1 = train(m1, data, nullptr, cfg);
  const TrainResult r2 = train(m2, data, nullptr, cfg);
  REQUIRE(r1.records.size() == r2.records.size());
  for (std::size_t i = 0; i < r1.records.size(); ++i) {
    CHECK(r1.records[i].train_loss == r2.records[i].train_loss);
    CHECK(r1.records[i].eval_accuracy == r2.records[i].eval_accuracy);
    CHECK(r1.records[i].alpha == r2.records[i].alpha);
    CHECK(r1.records[i].global_sparsity == r2.records[i].global_sparsity);
    CHECK(r1.records[i].train_flops_fraction == r2.records[i].train_flops_fraction);
  }
  for (std::size_t li = 0; li < m1.layers.size(); ++li) {
    CHECK(m1.layers[li].weights == m2.layers[li].weights);
    CHECK(m1.layers[li].s == m2.layers[li].s);
  }

  Model m3 = build_model<float>(mlp_spec({6}, {5, 3}), 13);
  TrainConfig other = cfg;
  other.seed = 78;
  const TrainResult r3 = train(m3, data, nullptr, other);
  CHECK(r1.records.back().train_loss != r3.records.back().train_loss);
}

TEST_CASE("train: divergence carries the last completed record") {
  Model model = build_model<float>(mlp_spec({4}, {6, 3}, /*exempt=*/true), 8);
  const LabeledDataset data = synth_gaussian_blobs(3, 4, 10, 5);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 10;
  cfg.max_lr = 1e30;
  cfg.warmup = 2;  // epoch 0 runs at lr 0 and completes, epoch 1 explodes
  try {
    train(model, data, nullptr, cfg);
    FAIL("expected DivergedError");
  } catch (const DivergedError& e) {
    REQUIRE(e.last_record.has_value());
    CHECK(e.last_record->epoch == 0);
  }
}

TEST_CASE("train: autotune trajectory is reproducible from the recorded losses") {
  const LabeledDataset data = synth_gaussian_blobs(3, 6, 15, 6);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 16;
  cfg.max_lr = 0.02;
  cfg.alpha0 = 0.5;
  cfg.seed = 3;
  AutoTuneConfig at;
  at.tuning_epochs = 4;
  at.ref_loss = {0.9, 0.9, 0.9, 0.9};  // plausibly below the real losses early on
  cfg.autotune = at;
  cfg.zero_from = 5;

  Model model = build_model<float>(mlp_spec({6}, {5, 3}), 13);
  const TrainResult result = train(model, data, nullptr, cfg);
  REQUIRE(result.records.size() == 6);

  // replay the controller against the losses the run reported
  AlphaController replay(0.5, cfg.schedule, 6, 5, at);
  for (const EpochRecord& rec : result.records) {
    CHECK(rec.alpha == replay.alpha_for_epoch(rec.epoch));
    replay.on_epoch_end(rec.epoch, rec.train_loss);
  }
  CHECK(result.records[5].alpha == 0.0);
}
