#include <cstdio>
#include <cstdlib>
#include <fstream>
#if defined(__linux__)
#include <unistd.h>
#endif
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "alphapool/alpha_pooling.hpp"
#include "alphapool/baseline_pooling.hpp"
#include "alphapool/gradcheck.hpp"
#include "alphapool/layers.hpp"
#include "alphapool/train.hpp"

namespace {

using namespace alphapool;

std::string fmt17(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string env_data_dir() {
  const char* e = std::getenv("ALPHAPOOL_DATA_DIR");
  return e ? e : "";
}

// ---------------------------------------------------------------- train

int cmd_train(const std::string& config_path, const std::string& resume_path,
              const std::map<std::string, std::string>& overrides) {
  TrainConfig cfg;
  CheckpointData ckpt;

  if (!resume_path.empty()) {
    if (!config_path.empty())
      throw std::invalid_argument("--config cannot be combined with --resume "
                                  "(the checkpoint carries its config)");
    ckpt = load_checkpoint(resume_path);
    cfg = TrainConfig::from_map(parse_kv_text(ckpt.config_text));
  } else if (!config_path.empty()) {
    cfg = TrainConfig::from_map(parse_kv_file(config_path));
  }
  cfg.apply(overrides);
  if (cfg.data_dir.empty()) cfg.data_dir = env_data_dir();
  cfg.validate();

  Trainer trainer(cfg);
  if (!resume_path.empty()) trainer.set_resume(std::move(ckpt));
  TrainResult res = trainer.run();
  std::cout << "[train] done: " << res.metrics_path << " " << res.final_checkpoint
            << std::endl;
  return 0;
}

// ----------------------------------------------------------------- eval

int cmd_eval(const std::string& ckpt_path, std::string data_dir, const std::string& split,
             int batch) {
  CheckpointData ckpt = load_checkpoint(ckpt_path);
  RestoredModel rm = restore_model(ckpt);
  if (data_dir.empty()) data_dir = env_data_dir();
  if (data_dir.empty()) data_dir = rm.config.data_dir;
  if (data_dir.empty())
    throw std::invalid_argument("no data_dir available (flag, ALPHAPOOL_DATA_DIR or "
                                "checkpoint config)");
  Dataset data = load_dataset(rm.config.dataset, data_dir, split);
  const double acc = evaluate(rm.model, data, batch);
  std::cout << "dataset=" << rm.config.dataset << " split=" << split << " n=" << data.size()
            << " epochs_done=" << ckpt.epochs_done << " accuracy=" << fmt17(acc)
            << std::endl;
  return 0;
}

// ----------------------------------------------------------- alpha-sweep

int cmd_alpha_sweep(const std::string& values_csv, double from, double to, int steps,
                    const std::string& out_path) {
  std::vector<double> values;
  {
    std::stringstream ss(values_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      std::size_t used;
      values.push_back(std::stod(item, &used));
      if (used != item.size())
        throw std::invalid_argument("cannot parse value '" + item + "'");
    }
  }
  if (values.empty()) throw std::invalid_argument("--values is empty");
  if (steps < 2) throw std::invalid_argument("--steps must be >= 2");
  if (!(from < to)) throw std::invalid_argument("--from must be < --to");

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw std::runtime_error("cannot write " + out_path);
    os = &file;
  }
  (*os) << "alpha,value\n";
  for (int i = 0; i < steps; ++i) {
    const double alpha = from + (to - from) * static_cast<double>(i) /
                                    static_cast<double>(steps - 1);
    (*os) << fmt17(alpha) << "," << fmt17(alpha_integrate(values, alpha)) << "\n";
  }
  os->flush();
  if (!out_path.empty())
    std::cout << "[alpha-sweep] wrote " << steps << " rows to " << out_path << std::endl;
  return 0;
}

// ------------------------------------------------------------- gradcheck

// Delegates to an inner layer but scales every gradient it produces; used to
// prove the checker catches a wrong backward implementation.
class CorruptedBackward : public Layer<double> {
 public:
  explicit CorruptedBackward(Layer<double>& inner) : inner_(inner) {
    this->set_name(inner.name());
  }
  const char* kind() const override { return inner_.kind(); }
  Shape output_shape(const Shape& in) const override { return inner_.output_shape(in); }
  Tensor<double> forward(const Tensor<double>& x) override { return inner_.forward(x); }
  Tensor<double> backward(const Tensor<double>& g) override {
    Tensor<double> gx = inner_.backward(g);
    for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] *= 1.01;
    for (auto& p : inner_.params())
      for (std::int64_t i = 0; i < p.size; ++i) p.grad[i] *= 1.01;
    return gx;
  }
  std::vector<ParamRef<double>> params() override { return inner_.params(); }

 private:
  Layer<double>& inner_;
};

Tensor<double> random_tensor(Shape shape, double lo, double hi, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
  return t;
}

struct BatteryCase {
  std::string label;
  std::string kind;
  std::unique_ptr<Layer<double>> layer;
  Tensor<double> input;
  SkipFn skip;
};

int cmd_gradcheck(double h, double tol, const std::string& corrupt_kind) {
  std::vector<BatteryCase> cases;

  {
    auto conv = std::make_unique<Conv2d<double>>(2, 3, 3, 1, 1);
    std::mt19937 rng(7);
    kaiming_fill(conv->weight(), 2 * 3 * 3, rng);
    kaiming_fill(conv->bias(), 3, rng);
    cases.push_back({"conv2d", "conv2d", std::move(conv),
                     random_tensor(Shape{2, 2, 6, 6}, -1.0, 1.0, 11), nullptr});
  }
  {
    auto fc = std::make_unique<Dense<double>>(12, 5);
    std::mt19937 rng(8);
    kaiming_fill(fc->weight(), 12, rng);
    kaiming_fill(fc->bias(), 5, rng);
    cases.push_back({"dense", "dense", std::move(fc),
                     random_tensor(Shape{3, 12}, -1.0, 1.0, 12), nullptr});
  }
  cases.push_back({"relu", "relu", std::make_unique<Relu<double>>(),
                   random_tensor(Shape{2, 3, 4, 4}, -1.0, 1.0, 13),
                   [](const Tensor<double>& x, std::int64_t i) {
                     return std::abs(x[i]) < 1e-4;
                   }});
  cases.push_back({"relu_plus", "relu_plus", std::make_unique<ReluPlus<double>>(),
                   random_tensor(Shape{2, 3, 4, 4}, -1.0, 1.0, 14),
                   [](const Tensor<double>& x, std::int64_t i) {
                     return std::abs(x[i] - ReluPlus<double>::kEps) < 1e-4;
                   }});
  cases.push_back({"max_pool", "max_pool",
                   std::make_unique<MaxPool2d<double>>(PoolGeometry{2, 2, 2, 2}),
                   random_tensor(Shape{2, 2, 4, 4}, -1.0, 1.0, 15), nullptr});
  cases.push_back({"avg_pool", "avg_pool",
                   std::make_unique<AvgPool2d<double>>(PoolGeometry{2, 2, 2, 2}),
                   random_tensor(Shape{2, 2, 4, 4}, -1.0, 1.0, 16), nullptr});
  cases.push_back({"lp_pool", "lp_pool",
                   std::make_unique<LpPool2d<double>>(PoolGeometry{2, 2, 2, 2}),
                   random_tensor(Shape{2, 2, 4, 4}, 0.2, 2.0, 17), nullptr});
  for (double alpha : {-6.0, -1.0, 0.99, 1.0, 1.01, 3.0}) {
    auto pool = std::make_unique<AlphaPool2d<double>>(PoolGeometry{2, 2, 2, 2}, alpha, true);
    char label[48];
    std::snprintf(label, sizeof(label), "alpha_pool(alpha=%g)", alpha);
    cases.push_back({label, "alpha_pool", std::move(pool),
                     random_tensor(Shape{2, 2, 4, 4}, 0.3, 2.5, 18), nullptr});
  }

  bool all_pass = true;
  for (auto& c : cases) {
    GradCheckReport report;
    if (c.kind == corrupt_kind) {
      CorruptedBackward wrapped(*c.layer);
      report = check_layer(wrapped, c.input, h, c.skip);
    } else {
      report = check_layer(*c.layer, c.input, h, c.skip);
    }
    const bool pass = report.pass(tol);
    all_pass = all_pass && pass;
    std::cout << "gradcheck " << c.label << ": max_rel_err=" << fmt17(report.max_rel_err())
              << " " << (pass ? "PASS" : "FAIL") << std::endl;
    if (!pass) std::cout << report.str();
  }

  // softmax cross-entropy is a loss, not a Layer; check it directly
  {
    Tensor<double> logits = random_tensor(Shape{4, 6}, -2.0, 2.0, 19);
    std::vector<int> labels = {0, 3, 5, 2};
    LossResult<double> base = softmax_cross_entropy(logits, labels);
    double max_err = 0.0;
    for (std::int64_t i = 0; i < logits.numel(); ++i) {
      const double orig = logits[i];
      logits[i] = orig + h;
      const double fp = softmax_cross_entropy(logits, labels).loss;
      logits[i] = orig - h;
      const double fm = softmax_cross_entropy(logits, labels).loss;
      logits[i] = orig;
      max_err = std::max(max_err, rel_err((fp - fm) / (2.0 * h), base.grad[i]));
    }
    const bool pass = max_err <= tol;
    all_pass = all_pass && pass;
    std::cout << "gradcheck softmax_cross_entropy: max_rel_err=" << fmt17(max_err) << " "
              << (pass ? "PASS" : "FAIL") << std::endl;
  }

  std::cout << (all_pass ? "gradcheck: all checks passed"
                         : "gradcheck: FAILURES detected")
            << std::endl;
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__x86_64__) && defined(__linux__)
  // OpenBLAS picks its kernel in a load-time constructor, and its CPU
  // autodetection misfires on some virtualized hosts.  Pin the AVX-512
  // kernel and re-exec so the choice happens before the library loads.
  if (!std::getenv("OPENBLAS_CORETYPE") && __builtin_cpu_supports("avx512f")) {
    setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 1);
    execv("/proc/self/exe", argv);
  }
#endif
  CLI::App app{"alpha-integration pooling experiments"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "train a model and write run artifacts");
  std::string config_path, resume_path;
  train->add_option("--config", config_path, "key=value config file");
  train->add_option("--resume", resume_path, "checkpoint to continue from");
  std::map<std::string, std::string> overrides;
  std::string o_dataset, o_data_dir, o_out, o_pool, o_activation, o_milestones;
  std::string o_seed, o_epochs, o_batch, o_lr, o_alpha_init, o_freeze, o_augment, o_interval;
  train->add_option("--dataset", o_dataset, "mnist or cifar10");
  train->add_option("--data-dir", o_data_dir, "dataset directory");
  train->add_option("--out", o_out, "output directory for run artifacts");
  train->add_option("--pool", o_pool, "max, avg, lp or alpha");
  train->add_option("--seed", o_seed, "RNG seed");
  train->add_option("--epochs", o_epochs, "number of training epochs");
  train->add_option("--batch-size", o_batch, "minibatch size");
  train->add_option("--base-lr", o_lr, "base learning rate");
  train->add_option("--lr-milestones", o_milestones, "epoch:mult,... lr schedule");
  train->add_option("--alpha-init", o_alpha_init, "initial alpha for alpha pooling");
  train->add_option("--freeze-alpha", o_freeze, "true/false: keep alpha fixed");
  train->add_option("--activation", o_activation, "auto, relu or relu_plus");
  train->add_option("--augment-pad", o_augment, "pad-and-crop pixels (-1 = default)");
  train->add_option("--checkpoint-interval", o_interval, "epochs between checkpoints");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string e_ckpt, e_data_dir, e_split = "test";
  int e_batch = 250;
  eval->add_option("--checkpoint", e_ckpt, "checkpoint file")->required();
  eval->add_option("--data-dir", e_data_dir, "dataset directory");
  eval->add_option("--split", e_split, "train or test");
  eval->add_option("--batch", e_batch, "evaluation batch size");

  // alpha-sweep
  auto* sweep = app.add_subcommand("alpha-sweep",
                                   "evaluate alpha-integration of a value set over a grid");
  std::string s_values, s_out;
  double s_from = -10.0, s_to = 10.0;
  int s_steps = 201;
  sweep->add_option("--values", s_values, "comma-separated positive values")->required();
  sweep->add_option("--from", s_from, "first alpha");
  sweep->add_option("--to", s_to, "last alpha");
  sweep->add_option("--steps", s_steps, "grid size including endpoints");
  sweep->add_option("--out", s_out, "output CSV (stdout when omitted)");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck",
                                "compare analytic gradients with finite differences");
  double g_h = 1e-6, g_tol = 1e-4;
  std::string g_corrupt;
  gc->add_option("--step", g_h, "finite difference step");
  gc->add_option("--tol", g_tol, "max relative error tolerance");
  gc->add_option("--corrupt", g_corrupt, "scale a layer kind's backward by 1.01")
      ->group("");  // test hook, hidden from help

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      if (!o_dataset.empty()) overrides["dataset"] = o_dataset;
      if (!o_data_dir.empty()) overrides["data_dir"] = o_data_dir;
      if (!o_out.empty()) overrides["out_dir"] = o_out;
      if (!o_pool.empty()) overrides["pool"] = o_pool;
      if (!o_seed.empty()) overrides["seed"] = o_seed;
      if (!o_epochs.empty()) overrides["epochs"] = o_epochs;
      if (!o_batch.empty()) overrides["batch_size"] = o_batch;
      if (!o_lr.empty()) overrides["base_lr"] = o_lr;
      if (!o_milestones.empty()) overrides["lr_milestones"] = o_milestones;
      if (!o_alpha_init.empty()) overrides["alpha_init"] = o_alpha_init;
      if (!o_freeze.empty()) overrides["freeze_alpha"] = o_freeze;
      if (!o_activation.empty()) overrides["activation"] = o_activation;
      if (!o_augment.empty()) overrides["augment_pad"] = o_augment;
      if (!o_interval.empty()) overrides["checkpoint_interval"] = o_interval;
      return cmd_train(config_path, resume_path, overrides);
    }
    if (*eval) return cmd_eval(e_ckpt, e_data_dir, e_split, e_batch);
    if (*sweep) return cmd_alpha_sweep(s_values, s_from, s_to, s_steps, s_out);
    if (*gc) return cmd_gradcheck(g_h, g_tol, g_corrupt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
