// Command-line front end: train, check-grad, flops, simulate-ga.
//
// Exit codes: 0 success, 1 runtime/format error, 2 config validation error,
// 3 diverged run, 4 gradient-check tolerance breach.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sparsetrain/checkpoint.hpp"
#include "sparsetrain/config.hpp"
#include "sparsetrain/data_io.hpp"
#include "sparsetrain/errors.hpp"
#include "sparsetrain/flops.hpp"
#include "sparsetrain/metrics.hpp"
#include "sparsetrain/oracle.hpp"
#include "sparsetrain/rng.hpp"
#include "sparsetrain/sparse_model.hpp"
#include "sparsetrain/threshold_prune.hpp"
#include "sparsetrain/trainer.hpp"

#ifndef SPARSETRAIN_BUILD_ID
#define SPARSETRAIN_BUILD_ID "unknown"
#endif

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sparsetrain;

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitGradCheck = 4;

std::string iso_utc_now() {
  const std::time_t tt =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void atomic_write_text(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------- train

struct TrainOptions {
  std::string config_path;
  std::string out_dir = "run_out";
  std::string data_dir;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool record_ref_loss = false;
};

json sparsity_to_json(const SparsityReport& report) {
  json j;
  j["global_sparsity"] = report.global_sparsity;
  j["global_including_exempt"] = report.global_including_exempt;
  j["per_layer"] = json::array();
  for (const LayerSparsity& ls : report.per_layer) {
    j["per_layer"].push_back({{"layer", ls.layer},
                              {"zero_fraction", ls.zero_fraction},
                              {"param_count", ls.param_count}});
  }
  return j;
}

int cmd_train(const TrainOptions& opt) {
  const std::string started_at = iso_utc_now();

  std::ifstream in(opt.config_path);
  if (!in) throw ConfigError("config", "cannot read '" + opt.config_path + "'");
  json raw;
  try {
    in >> raw;
  } catch (const json::exception& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
  for (const std::string& kv : opt.overrides) apply_override(raw, kv);
  RunSpec spec = parse_run_spec(raw);
  if (opt.seed) spec.train.seed = *opt.seed;
  if (opt.record_ref_loss) {
    // Dense reference mode: identical run with pruning disabled everywhere.
    for (LayerSpec& ls : spec.model.layers) ls.dense_exempt = true;
  }

  std::string data_dir = opt.data_dir;
  if (data_dir.empty()) {
    if (const char* env = std::getenv("SPARSETRAIN_DATA_DIR")) data_dir = env;
  }
  LabeledDataset train_data = load_train_data(spec.data, data_dir);
  LabeledDataset eval_data;
  const bool have_eval = load_eval_data(spec.data, data_dir, eval_data);

  fs::create_directories(opt.out_dir);
  const fs::path out(opt.out_dir);
  MetricsWriter metrics((out / "metrics.csv").string(),
                        (out / "metrics.jsonl").string());

  Model model = build_model<float>(spec.model, spec.train.seed);
  const json config_snapshot = run_spec_to_json(spec);

  double last_alpha = 0.0;
  const auto on_epoch = [&](const Model& m, const EpochRecord& rec) {
    last_alpha = rec.alpha;
    if (spec.checkpoint_every > 0 && (rec.epoch + 1) % spec.checkpoint_every == 0) {
      char name[48];
      std::snprintf(name, sizeof name, "checkpoint_epoch%04d.json", rec.epoch);
      save_checkpoint((out / name).string(), m, rec.epoch,
                      json{{"config", config_snapshot}, {"alpha", rec.alpha}});
    }
  };

  TrainResult result;
  try {
    result = train(model, train_data, have_eval ? &eval_data : nullptr, spec.train,
                   &metrics, on_epoch);
  } catch (const DivergedError& e) {
    metrics.flush();
    std::cerr << "diverged: " << e.what() << "\n";
    if (e.last_record) {
      std::cerr << "last completed epoch: "
                << MetricsWriter::json_row(*e.last_record);
    }
    return kExitDiverged;
  }
  metrics.flush();

  save_checkpoint((out / "checkpoint_final.json").string(), model,
                  spec.train.epochs - 1,
                  json{{"config", config_snapshot}, {"alpha", last_alpha}});

  if (opt.record_ref_loss) {
    json ref = json::array();
    for (const EpochRecord& rec : result.records) ref.push_back(rec.train_loss);
    atomic_write_text(out / "ref_loss.json", ref.dump() + "\n");
  }

  json manifest;
  manifest["build_id"] = SPARSETRAIN_BUILD_ID;
  manifest["started_at"] = started_at;
  manifest["finished_at"] = iso_utc_now();
  manifest["config"] = config_snapshot;
  manifest["outputs"] = {{"metrics_csv", (out / "metrics.csv").string()},
                         {"metrics_jsonl", (out / "metrics.jsonl").string()},
                         {"checkpoint", (out / "checkpoint_final.json").string()}};
  if (opt.record_ref_loss) {
    manifest["outputs"]["ref_loss"] = (out / "ref_loss.json").string();
  }
  manifest["final"] = sparsity_to_json(sparsity_report(model));
  manifest["final"]["train_flops_fraction"] = result.fractions.train_fraction;
  manifest["final"]["infer_flops_fraction"] = result.fractions.infer_fraction;
  if (!result.records.empty()) {
    manifest["final"]["train_loss"] = result.records.back().train_loss;
    manifest["final"]["eval_accuracy"] = result.records.back().eval_accuracy;
  }
  atomic_write_text(out / "manifest.json", manifest.dump(2) + "\n");

  if (!result.records.empty()) {
    const EpochRecord& last = result.records.back();
    std::printf(
        "done: %d epochs, loss %.4f, eval acc %.4f, sparsity %.4f, "
        "train flops fraction %.4f\n",
        spec.train.epochs, last.train_loss, last.eval_accuracy,
        last.global_sparsity, last.train_flops_fraction);
  } else {
    std::printf("done: 0 epochs\n");
  }
  return 0;
}

// ----------------------------------------------------------------- check-grad

struct CheckGradOptions {
  std::uint64_t seed = 1;
  std::vector<int> sizes = {64, 256};
  int trials = 200;
  double tolerance = 1e-4;
  int probes_per_trial = 8;
  bool negate_threshold_grad = false;  // hidden hook: breaks the sign on purpose
};

// Probes the analytic backward rules against central differences of the
// scalar probe loss L(W, s) = sum_i u_i * pruned(W, s)_i at 64-bit.
// Masked entries are excluded from finite differencing (their true derivative
// is zero by design; the proxy value alpha*u_i is checked bitwise instead).
int cmd_check_grad(const CheckGradOptions& opt) {
  const double kAlphas[] = {0.0, 0.3, 1.0};
  double worst_w = 0.0, worst_s = 0.0;
  long checked_w = 0, checked_s = 0;
  Rng rng(mix_seed(opt.seed, 0x67726164));  // "grad"

  for (int trial = 0; trial < opt.trials; ++trial) {
    const int n = opt.sizes[static_cast<std::size_t>(trial) % opt.sizes.size()];
    const double alpha = kAlphas[static_cast<std::size_t>(trial) % 3];
    const double s = rng.uniform(-6.0, -2.0);
    const double threshold = logistic(s);
    std::vector<double> w(n), u(n);
    for (double& v : w) v = rng.normal(0.0, 4.0 * threshold);
    for (double& v : u) v = rng.normal(0.0, 1.0);

    const auto fwd = prune_forward<double>(w, s);
    const auto probe = [&](std::span<const double> weights, double sv) {
      const auto f = prune_forward<double>(weights, sv);
      double loss = 0.0;
      for (int i = 0; i < n; ++i) loss += u[i] * f.sparse_weights[i];
      return loss;
    };

    const BackwardSupersetSpec all{};
    const std::vector<double> analytic_w =
        prune_backward_weights<double>(u, fwd, alpha, all, w);
    const double analytic_s = prune_backward_threshold<double>(u, fwd, alpha, s, w);
    const double analytic_s_active =
        prune_backward_threshold<double>(u, fwd, 0.0, s, w);

    const double h = 1e-6;
    // Active coordinates: finite differences, skipping any entry close
    // enough to the threshold that the mask could flip inside [w-h, w+h].
    int probed = 0;
    for (int i = 0; i < n && probed < opt.probes_per_trial; ++i) {
      if (!fwd.active_mask[i]) continue;
      if (std::abs(std::abs(w[i]) - threshold) < 4.0 * h) continue;
      ++probed;
      ++checked_w;
      std::vector<double> wp = w;
      const double fd = finite_diff_grad(
          [&](double v) {
            wp[i] = v;
            return probe(wp, s);
          },
          w[i], h);
      const double denom = std::max(std::abs(fd), 1.0);
      const double rel = std::abs(analytic_w[i] - fd) / denom;
      worst_w = std::max(worst_w, rel);
      if (rel > opt.tolerance) {
        std::printf("FAIL trial %d coordinate %d: analytic %.12g vs fd %.12g "
                    "(rel %.3g)\n",
                    trial, i, analytic_w[i], fd, rel);
        return kExitGradCheck;
      }
    }
    // Masked coordinates: proxy value is alpha * upstream, bitwise.
    for (int i = 0; i < n; ++i) {
      if (fwd.active_mask[i]) continue;
      if (analytic_w[i] != alpha * u[i]) {
        std::printf("FAIL trial %d coordinate %d: masked gradient %.17g != "
                    "alpha*upstream %.17g\n",
                    trial, i, analytic_w[i], alpha * u[i]);
        return kExitGradCheck;
      }
    }
    // Threshold parameter: the active-only part is the true derivative.
    // Skip instances where an entry sits within the s-perturbation band.
    const double band = 2.0 * h * logistic_grad(s) * 2.0;
    bool s_safe = true;
    for (int i = 0; i < n; ++i) {
      if (std::abs(std::abs(w[i]) - threshold) < band) s_safe = false;
    }
    if (s_safe) {
      ++checked_s;
      double fd_s = finite_diff_grad([&](double sv) { return probe(w, sv); }, s, h);
      double got = opt.negate_threshold_grad ? -analytic_s_active : analytic_s_active;
      const double denom = std::max(std::abs(fd_s), 1.0);
      const double rel = std::abs(got - fd_s) / denom;
      worst_s = std::max(worst_s, rel);
      if (rel > opt.tolerance) {
        std::printf("FAIL trial %d threshold gradient: analytic %.12g vs fd %.12g "
                    "(rel %.3g)\n",
                    trial, got, fd_s, rel);
        return kExitGradCheck;
      }
      // The full proxy gradient decomposes into the true (active-only) part
      // plus the alpha-scaled masked part; verify the identity.
      double masked_inner = 0.0;
      for (int i = 0; i < n; ++i) {
        if (!fwd.active_mask[i]) masked_inner += u[i] * signum(w[i]) * alpha;
      }
      const double recomposed = analytic_s_active - logistic_grad(s) * masked_inner;
      if (std::abs(analytic_s - recomposed) >
          1e-12 * std::max(1.0, std::abs(analytic_s))) {
        std::printf("FAIL trial %d: alpha decomposition of threshold gradient "
                    "does not hold (%.17g vs %.17g)\n",
                    trial, analytic_s, recomposed);
        return kExitGradCheck;
      }
    }
  }
  std::printf("PASS %ld weight probes, %ld threshold probes; worst relative "
              "error: weights %.3g, threshold %.3g\n",
              checked_w, checked_s, worst_w, worst_s);
  return 0;
}

// ---------------------------------------------------------------------- flops

struct FlopsOptions {
  std::string checkpoint_path;
  std::string mode = "all_weights";
  double keep_fraction = 1.0;
  bool alpha_zero = false;
};

int cmd_flops(const FlopsOptions& opt) {
  const Checkpoint ckpt = load_checkpoint(opt.checkpoint_path);
  Model model = ckpt.model;

  BackwardSupersetSpec superset;
  if (opt.mode == "topk_fraction") {
    superset.mode = SupersetMode::TopKFraction;
    superset.keep_fraction = opt.keep_fraction;
  } else if (opt.mode != "all_weights") {
    throw ConfigError("--mode", "expected 'all_weights' or 'topk_fraction'");
  }

  FlopsLedger ledger = model_flops_ledger(model, superset);
  fill_totals(ledger, opt.alpha_zero, superset);

  json j;
  j["checkpoint"] = opt.checkpoint_path;
  j["epoch"] = ckpt.epoch;
  j["per_layer"] = json::array();
  for (std::size_t i = 0; i < ledger.per_layer_dense.size(); ++i) {
    json row = {{"layer", i},
                {"dense", ledger.per_layer_dense[i]},
                {"sparse", ledger.per_layer_sparse[i]}};
    if (ledger.backward_budget) row["backward_budget"] = (*ledger.backward_budget)[i];
    j["per_layer"].push_back(row);
  }
  j["totals"] = {{"dense_train", ledger.totals.dense_train},
                 {"sparse_train", ledger.totals.sparse_train},
                 {"dense_infer", ledger.totals.dense_infer},
                 {"sparse_infer", ledger.totals.sparse_infer}};
  j["fractions"] = {
      {"train", static_cast<double>(ledger.totals.sparse_train) /
                    static_cast<double>(ledger.totals.dense_train)},
      {"infer", static_cast<double>(ledger.totals.sparse_infer) /
                    static_cast<double>(ledger.totals.dense_infer)}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

// ----------------------------------------------------------------- simulate-ga

struct SimulateOptions {
  std::vector<double> v0;
  std::vector<double> v_star;
  std::vector<double> alpha;
  double lr = 0.5;
  int steps = 50;
  std::string out = "-";
};

int cmd_simulate_ga(const SimulateOptions& opt) {
  std::string csv = "v0,v_star,alpha,step,v\n";
  char line[160];
  for (const double v0 : opt.v0) {
    for (const double vs : opt.v_star) {
      for (const double a : opt.alpha) {
        const DescentTrajectory traj =
            simulate_descent(v0, vs, [a](int) { return a; }, opt.lr, opt.steps);
        for (std::size_t step = 0; step < traj.values.size(); ++step) {
          std::snprintf(line, sizeof line, "%.10g,%.10g,%.10g,%zu,%.10g\n", v0, vs,
                        a, step, traj.values[step]);
          csv += line;
        }
      }
    }
  }
  if (opt.out == "-") {
    std::cout << csv;
  } else {
    atomic_write_text(opt.out, csv);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse training with annealed proxy gradients"};
  app.require_subcommand(1);

  TrainOptions train_opt;
  CLI::App* train_cmd = app.add_subcommand("train", "Run a training job");
  train_cmd->add_option("--config", train_opt.config_path, "Run config JSON")
      ->required();
  train_cmd->add_option("--out-dir", train_opt.out_dir, "Output directory");
  train_cmd->add_option("--data-dir", train_opt.data_dir,
                        "Dataset directory (default: $SPARSETRAIN_DATA_DIR)");
  train_cmd->add_option("--set", train_opt.overrides,
                        "Override config values, dotted.path=value");
  std::uint64_t seed_value = 0;
  CLI::Option* seed_flag =
      train_cmd->add_option("--seed", seed_value, "Override train.seed");
  train_cmd->add_flag("--record-ref-loss", train_opt.record_ref_loss,
                      "Dense reference mode: disable pruning, write ref_loss.json");

  CheckGradOptions grad_opt;
  CLI::App* grad_cmd =
      app.add_subcommand("check-grad", "Finite-difference gradient check");
  grad_cmd->add_option("--seed", grad_opt.seed, "RNG seed");
  grad_cmd->add_option("--sizes", grad_opt.sizes, "Tensor sizes to sample");
  grad_cmd->add_option("--trials", grad_opt.trials, "Number of random instances");
  grad_cmd->add_option("--tolerance", grad_opt.tolerance, "Relative error bound");
  grad_cmd
      ->add_flag("--negate-threshold-grad", grad_opt.negate_threshold_grad,
                 "Flip the threshold gradient sign (mutation hook for tests)")
      ->group("");  // hidden

  FlopsOptions flops_opt;
  CLI::App* flops_cmd = app.add_subcommand("flops", "Cost report for a checkpoint");
  flops_cmd->add_option("--checkpoint", flops_opt.checkpoint_path, "Checkpoint JSON")
      ->required();
  flops_cmd->add_option("--mode", flops_opt.mode,
                        "Backward superset: all_weights or topk_fraction");
  flops_cmd->add_option("--keep-fraction", flops_opt.keep_fraction,
                        "Top-k keep fraction");
  flops_cmd->add_flag("--alpha-zero", flops_opt.alpha_zero,
                      "Cost the alpha = 0 backward rule");

  SimulateOptions sim_opt;
  CLI::App* sim_cmd =
      app.add_subcommand("simulate-ga", "One-dimensional descent trajectories");
  sim_cmd->add_option("--v0", sim_opt.v0, "Initial values");
  sim_cmd->add_option("--vstar", sim_opt.v_star, "Targets");
  sim_cmd->add_option("--alpha", sim_opt.alpha, "Masked-gradient scales");
  sim_cmd->add_option("--lr", sim_opt.lr, "Step size");
  sim_cmd->add_option("--steps", sim_opt.steps, "Iterations per trajectory");
  sim_cmd->add_option("--out", sim_opt.out, "CSV path, or - for stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      if (*seed_flag) train_opt.seed = seed_value;
      return cmd_train(train_opt);
    }
    if (*grad_cmd) return cmd_check_grad(grad_opt);
    if (*flops_cmd) return cmd_flops(flops_opt);
    if (*sim_cmd) return cmd_simulate_ga(sim_opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
