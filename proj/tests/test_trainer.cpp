#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "alphapool/train.hpp"

using namespace alphapool;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("alphapool_train_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& name) const { return (path / name).string(); }
};

// class-coded bright blobs on noise, in the same geometry as the real data
Dataset synthetic_dataset(std::int64_t n, unsigned seed) {
  Dataset d;
  d.images = Tensor<float>(Shape{n, 1, 28, 28});
  d.labels.resize(static_cast<std::size_t>(n));
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> noise(0.0f, 0.25f);
  std::uniform_int_distribution<int> cls(0, 9);
  for (std::int64_t i = 0; i < n; ++i) {
    const int y = cls(rng);
    d.labels[static_cast<std::size_t>(i)] = y;
    float* img = d.images.data() + i * 784;
    for (int p = 0; p < 784; ++p) img[p] = noise(rng);
    const int cy = 4 + (y % 5) * 5, cx = 6 + (y / 5) * 12;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) img[(cy + a) * 28 + (cx + b)] = 0.9f;
  }
  return d;
}

TrainConfig tiny_config(const std::string& out_dir, const std::string& pool) {
  TrainConfig cfg;
  cfg.pool = pool;
  cfg.out_dir = out_dir;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.base_lr = 0.01;
  cfg.lr_milestones = "2:0.1";
  cfg.seed = 5;
  cfg.eval_batch = 32;
  return cfg;
}

TrainResult run_tiny(const TrainConfig& cfg) {
  Trainer t(cfg);
  t.set_data(synthetic_dataset(96, 1), synthetic_dataset(32, 2));
  return t.run();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("model_config_from maps dataset geometry") {
  TrainConfig cfg;
  ModelConfig m = model_config_from(cfg);
  CHECK(m.in_channels == 1);
  CHECK(m.in_h == 28);
  CHECK(m.in_w == 28);
  CHECK(m.pool_kind == PoolKind::kAlpha);
  CHECK(m.train_alpha == true);

  cfg.dataset = "cifar10";
  cfg.pool = "max";
  cfg.freeze_alpha = true;
  cfg.alpha_init = 2.0;
  ModelConfig m2 = model_config_from(cfg);
  CHECK(m2.in_channels == 3);
  CHECK(m2.in_h == 32);
  CHECK(m2.pool_kind == PoolKind::kMax);
  CHECK(m2.train_alpha == false);
  CHECK(m2.alpha_init == 2.0);
}

TEST_CASE("trainer writes metrics, alpha trace and a loadable final checkpoint") {
  TempDir tmp;
  TrainResult r = run_tiny(tiny_config(tmp.str("run"), "alpha"));
  REQUIRE(r.rows.size() == 2);
  CHECK(r.rows[0].epoch == 1);
  CHECK(r.rows[1].epoch == 2);
  CHECK(r.rows[0].lr == doctest::Approx(0.01));
  CHECK(r.rows[1].lr == doctest::Approx(0.001));
  for (const auto& row : r.rows) {
    CHECK(std::isfinite(row.train_loss));
    CHECK(row.train_acc >= 0.0);
    CHECK(row.train_acc <= 1.0);
    CHECK(row.test_acc >= 0.0);
    CHECK(row.test_acc <= 1.0);
    REQUIRE(row.alphas.size() == 2);
  }

  const std::string metrics = slurp(r.metrics_path);
  CHECK(metrics.find("epoch,lr,train_loss,train_acc,test_acc") != std::string::npos);
  CHECK(metrics.find("alpha_pool1") != std::string::npos);

  const std::string trace_path = tmp.str("run") + "/alpha_trace.csv";
  REQUIRE(fs::exists(trace_path));
  std::istringstream trace(slurp(trace_path));
  std::string line;
  int rows = 0;
  while (std::getline(trace, line))
    if (!line.empty() && line[0] != '#' && line.find("epoch") != 0) ++rows;
  CHECK(rows == 3);  // init row + one per epoch

  CheckpointData ckpt = load_checkpoint(r.final_checkpoint);
  CHECK(ckpt.epochs_done == 2);
  RestoredModel rm = restore_model(ckpt);
  CHECK(rm.config.pool == "alpha");
  CHECK(rm.model.alpha_pools().size() == 2);

  REQUIRE(fs::exists(tmp.str("run") + "/config_resolved.txt"));
  const std::string resolved = slurp(tmp.str("run") + "/config_resolved.txt");
  CHECK(resolved.find("pool=alpha") != std::string::npos);
  CHECK(resolved.find("out_dir=") != std::string::npos);
}

TEST_CASE("training losses drop and alphas move on the synthetic task") {
  TempDir tmp;
  TrainConfig cfg = tiny_config(tmp.str("run"), "alpha");
  cfg.epochs = 4;
  cfg.lr_milestones = "";
  TrainResult r = run_tiny(cfg);
  REQUIRE(r.rows.size() == 4);
  CHECK(r.rows.back().train_loss < r.rows.front().train_loss);
  CHECK(r.rows.back().train_acc > 0.5);
  bool alpha_moved = false;
  for (float a : r.rows.back().alphas)
    if (a != -3.0f) alpha_moved = true;
  CHECK(alpha_moved);
}

TEST_CASE("identical runs are byte-identical") {
  TempDir tmp;
  TrainResult a = run_tiny(tiny_config(tmp.str("a"), "alpha"));
  TrainResult b = run_tiny(tiny_config(tmp.str("b"), "alpha"));
  CHECK(slurp(a.metrics_path) == slurp(b.metrics_path));
  CHECK(slurp(a.final_checkpoint) == slurp(b.final_checkpoint));

  TrainConfig other = tiny_config(tmp.str("c"), "alpha");
  other.seed = 6;
  TrainResult c = run_tiny(other);
  CHECK(slurp(a.metrics_path) != slurp(c.metrics_path));
}

TEST_CASE("evaluate matches the final reported test accuracy") {
  TempDir tmp;
  TrainConfig cfg = tiny_config(tmp.str("run"), "max");
  TrainResult r = run_tiny(cfg);
  CheckpointData ckpt = load_checkpoint(r.final_checkpoint);
  RestoredModel rm = restore_model(ckpt);
  const double acc = evaluate(rm.model, synthetic_dataset(32, 2), cfg.eval_batch);
  CHECK(acc == doctest::Approx(r.rows.back().test_acc).epsilon(1e-12));
}

TEST_CASE("non-alpha pools produce no alpha columns") {
  TempDir tmp;
  TrainResult r = run_tiny(tiny_config(tmp.str("run"), "max"));
  CHECK(r.rows[0].alphas.empty());
  CHECK(slurp(r.metrics_path).find("alpha_pool1") == std::string::npos);
  CHECK(!fs::exists(tmp.str("run") + "/alpha_trace.csv"));
}

TEST_CASE("resume from an interval checkpoint reproduces the uninterrupted run") {
  TempDir tmp;
  TrainConfig full = tiny_config(tmp.str("full"), "alpha");
  full.epochs = 3;
  full.checkpoint_interval = 1;
  TrainResult rf = run_tiny(full);
  REQUIRE(rf.rows.size() == 3);
  REQUIRE(fs::exists(tmp.str("full") + "/epoch_002.ckpt"));

  // restart from the epoch-2 snapshot and finish epoch 3
  CheckpointData mid = load_checkpoint(tmp.str("full") + "/epoch_002.ckpt");
  CHECK(mid.epochs_done == 2);
  TrainConfig rest = TrainConfig::from_map(parse_kv_text(mid.config_text));
  rest.out_dir = tmp.str("resumed");
  Trainer t(rest);
  t.set_data(synthetic_dataset(96, 1), synthetic_dataset(32, 2));
  t.set_resume(mid);
  TrainResult rr = t.run();
  REQUIRE(rr.rows.size() == 1);
  CHECK(rr.rows[0].epoch == 3);
  CHECK(rr.rows[0].train_loss == rf.rows[2].train_loss);
  CHECK(rr.rows[0].train_acc == rf.rows[2].train_acc);
  CHECK(rr.rows[0].test_acc == rf.rows[2].test_acc);
  REQUIRE(rr.rows[0].alphas.size() == 2);
  CHECK(rr.rows[0].alphas[0] == rf.rows[2].alphas[0]);
  CHECK(rr.rows[0].alphas[1] == rf.rows[2].alphas[1]);

  // resuming a finished run has nothing to do
  CheckpointData done = load_checkpoint(rf.final_checkpoint);
  Trainer t2(rest);
  t2.set_data(synthetic_dataset(96, 1), synthetic_dataset(32, 2));
  t2.set_resume(done);
  CHECK_THROWS_AS(t2.run(), std::invalid_argument);
}

TEST_CASE("missing data directory is reported") {
  TempDir tmp;
  TrainConfig cfg = tiny_config(tmp.str("run"), "alpha");
  cfg.data_dir.clear();
  Trainer t(cfg);
  CHECK_THROWS_WITH_AS(t.run(), doctest::Contains("data_dir"), std::invalid_argument);
}

TEST_CASE("frozen alpha stays at its initial value") {
  TempDir tmp;
  TrainConfig cfg = tiny_config(tmp.str("run"), "alpha");
  cfg.freeze_alpha = true;
  cfg.alpha_init = -2.5;
  TrainResult r = run_tiny(cfg);
  for (const auto& row : r.rows) {
    REQUIRE(row.alphas.size() == 2);
    CHECK(row.alphas[0] == -2.5f);
    CHECK(row.alphas[1] == -2.5f);
  }
}

TEST_CASE("lp pool trains and keeps p above 1") {
  TempDir tmp;
  TrainResult r = run_tiny(tiny_config(tmp.str("run"), "lp"));
  CHECK(r.rows.back().train_loss < 10.0);
  CheckpointData ckpt = load_checkpoint(r.final_checkpoint);
  RestoredModel rm = restore_model(ckpt);
  for (auto* pool : rm.model.lp_pools()) CHECK(pool->p() > 1.0f);
}
