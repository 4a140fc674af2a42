#include "alphapool/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "alphapool/layers.hpp"
#include "alphapool/optim.hpp"

namespace alphapool {
namespace {

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::int64_t count_correct(const Tensor<float>& logits, const std::vector<int>& labels) {
  const std::int64_t b = logits.shape()[0], c = logits.shape()[1];
  std::int64_t correct = 0;
  const float* p = logits.data();
  for (std::int64_t r = 0; r < b; ++r) {
    int best = 0;
    for (std::int64_t i = 1; i < c; ++i)
      if (p[r * c + i] > p[r * c + best]) best = static_cast<int>(i);
    if (best == labels[static_cast<std::size_t>(r)]) ++correct;
  }
  return correct;
}

std::string rng_to_string(const std::mt19937& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937 rng_from_string(const std::string& s) {
  std::mt19937 rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw std::runtime_error("checkpoint: cannot parse RNG state");
  return rng;
}

void apply_params(Model<float>& model, const CheckpointData& ckpt) {
  auto params = model.params();
  std::map<std::string, ParamRef<float>*> by_name;
  for (auto& p : params) by_name[p.name] = &p;
  if (ckpt.params.size() != params.size())
    throw std::runtime_error("checkpoint: expected " + std::to_string(params.size()) +
                             " parameters, found " + std::to_string(ckpt.params.size()));
  for (const auto& [name, values] : ckpt.params) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: unknown parameter '" + name + "'");
    if (static_cast<std::int64_t>(values.size()) != it->second->size)
      throw std::runtime_error("checkpoint: size mismatch for parameter '" + name + "'");
    std::copy(values.begin(), values.end(), it->second->value);
  }
}

CheckpointData snapshot(const TrainConfig& cfg, int epochs_done, const std::mt19937& rng_init,
                        const std::mt19937& rng_shuffle, const std::mt19937& rng_augment,
                        Model<float>& model, const Sgd<float>& sgd) {
  CheckpointData d;
  d.config_text = cfg.canonical_text();
  d.epochs_done = epochs_done;
  d.rng_states = {rng_to_string(rng_init), rng_to_string(rng_shuffle),
                  rng_to_string(rng_augment)};
  for (const auto& p : model.params())
    d.params.emplace_back(p.name, std::vector<float>(p.value, p.value + p.size));
  d.velocities = sgd.state();
  return d;
}

}  // namespace

ModelConfig model_config_from(const TrainConfig& cfg) {
  ModelConfig m;
  if (cfg.dataset == "cifar10") {
    m.in_channels = 3;
    m.in_h = m.in_w = 32;
  } else {
    m.in_channels = 1;
    m.in_h = m.in_w = 28;
  }
  m.pool_kind = parse_pool_kind(cfg.pool);
  m.alpha_init = cfg.alpha_init;
  m.train_alpha = !cfg.freeze_alpha;
  m.activation = parse_activation(cfg.activation);
  return m;
}

double evaluate(Model<float>& model, const Dataset& data, int batch_size) {
  std::mt19937 scratch(0);
  BatchIterator it(data, batch_size, false, scratch);
  Batch b;
  std::int64_t correct = 0;
  while (it.next(b)) {
    Tensor<float> logits = model.forward(b.images);
    correct += count_correct(logits, b.labels);
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

void Trainer::set_data(Dataset train, Dataset test) {
  train_data_ = std::move(train);
  test_data_ = std::move(test);
}

void Trainer::set_resume(CheckpointData ckpt) { resume_ = std::move(ckpt); }

TrainResult Trainer::run() {
  if (!train_data_) {
    if (cfg_.data_dir.empty())
      throw std::invalid_argument("no data_dir configured (flag, config or "
                                  "ALPHAPOOL_DATA_DIR)");
    train_data_ = load_dataset(cfg_.dataset, cfg_.data_dir, "train");
    test_data_ = load_dataset(cfg_.dataset, cfg_.data_dir, "test");
  }
  const Dataset& train_data = *train_data_;
  const Dataset& test_data = *test_data_;

  std::filesystem::create_directories(cfg_.out_dir);

  std::mt19937 rng_init(static_cast<std::uint32_t>(cfg_.seed));
  std::mt19937 rng_shuffle(static_cast<std::uint32_t>(cfg_.seed + 1));
  std::mt19937 rng_augment(static_cast<std::uint32_t>(cfg_.seed + 2));
  if (resume_) {
    rng_init = rng_from_string(resume_->rng_states[0]);
    rng_shuffle = rng_from_string(resume_->rng_states[1]);
    rng_augment = rng_from_string(resume_->rng_states[2]);
  }

  Model<float> model = build_simple_cnn<float>(model_config_from(cfg_), rng_init);
  Sgd<float> sgd(SgdOptions{cfg_.momentum, cfg_.weight_decay});
  int start_epoch = 1;
  if (resume_) {
    apply_params(model, *resume_);
    sgd.load_state(resume_->velocities);
    start_epoch = resume_->epochs_done + 1;
    if (start_epoch > cfg_.epochs)
      throw std::invalid_argument("checkpoint already has " +
                                  std::to_string(resume_->epochs_done) +
                                  " epochs; nothing to do for epochs=" +
                                  std::to_string(cfg_.epochs));
  }

  const LrSchedule schedule = LrSchedule::parse(cfg_.base_lr, cfg_.lr_milestones);
  const int pad = cfg_.effective_augment_pad();
  auto alpha_layers = model.alpha_pools();

  {
    std::ofstream cfg_out(cfg_.out_dir + "/config_resolved.txt");
    cfg_out << cfg_.canonical_text();
    cfg_out << "data_dir=" << cfg_.data_dir << "\n";
    cfg_out << "out_dir=" << cfg_.out_dir << "\n";
  }

  TrainResult result;
  result.metrics_path = cfg_.out_dir + "/metrics.csv";
  std::ofstream metrics(result.metrics_path);
  if (!metrics) throw std::runtime_error("cannot write " + result.metrics_path);
  metrics << "# alphapool metrics schema v1\n";
  metrics << "epoch,lr,train_loss,train_acc,test_acc";
  for (std::size_t i = 0; i < alpha_layers.size(); ++i) metrics << ",alpha_pool" << (i + 1);
  metrics << "\n";

  std::ofstream trace;
  if (!alpha_layers.empty()) {
    trace.open(cfg_.out_dir + "/alpha_trace.csv");
    trace << "# alphapool alpha trace schema v1\n";
    trace << "epoch";
    for (std::size_t i = 0; i < alpha_layers.size(); ++i) trace << ",alpha_pool" << (i + 1);
    trace << "\n" << (start_epoch - 1);
    for (auto* p : alpha_layers) trace << "," << fmt_g(p->alpha());
    trace << "\n";
    trace.flush();
  }

  for (int epoch = start_epoch; epoch <= cfg_.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = schedule.at(epoch);

    BatchIterator it(train_data, cfg_.batch_size, true, rng_shuffle);
    Batch batch;
    double loss_acc = 0.0;
    std::int64_t correct = 0;
    std::int64_t batch_index = 0;
    while (it.next(batch)) {
      if (pad > 0) augment_pad_crop(batch, pad, rng_augment);
      Tensor<float> logits = model.forward(batch.images);
      LossResult<float> loss = softmax_cross_entropy(logits, batch.labels);
      if (!std::isfinite(static_cast<double>(loss.loss)))
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batch_index));
      loss_acc += static_cast<double>(loss.loss) * static_cast<double>(batch.labels.size());
      correct += count_correct(logits, batch.labels);
      model.backward(loss.grad);
      sgd.step(model.params(), lr);
      ++batch_index;
    }

    EpochRow row;
    row.epoch = epoch;
    row.lr = lr;
    row.train_loss = loss_acc / static_cast<double>(train_data.size());
    row.train_acc = static_cast<double>(correct) / static_cast<double>(train_data.size());
    row.test_acc = evaluate(model, test_data, cfg_.eval_batch);
    for (auto* p : alpha_layers) row.alphas.push_back(p->alpha());
    result.rows.push_back(row);

    metrics << epoch << "," << fmt_g(lr) << "," << fmt_g(row.train_loss) << ","
            << fmt_g(row.train_acc) << "," << fmt_g(row.test_acc);
    for (float a : row.alphas) metrics << "," << fmt_g(a);
    metrics << "\n";
    metrics.flush();
    if (trace.is_open()) {
      trace << epoch;
      for (float a : row.alphas) trace << "," << fmt_g(a);
      trace << "\n";
      trace.flush();
    }

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "[train] epoch " << epoch << "/" << cfg_.epochs << " lr " << fmt_g(lr)
              << " loss " << fmt_g(row.train_loss) << " train_acc " << fmt_g(row.train_acc)
              << " test_acc " << fmt_g(row.test_acc);
    if (!row.alphas.empty()) {
      std::cout << " alpha ";
      for (std::size_t i = 0; i < row.alphas.size(); ++i)
        std::cout << (i ? "," : "") << fmt_g(row.alphas[i]);
    }
    std::cout << " (" << fmt_g(secs) << "s)" << std::endl;

    if (cfg_.checkpoint_interval > 0 && epoch % cfg_.checkpoint_interval == 0 &&
        epoch != cfg_.epochs) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
      save_checkpoint(cfg_.out_dir + "/" + name,
                      snapshot(cfg_, epoch, rng_init, rng_shuffle, rng_augment, model, sgd));
    }
  }

  result.final_checkpoint = cfg_.out_dir + "/final.ckpt";
  save_checkpoint(result.final_checkpoint,
                  snapshot(cfg_, cfg_.epochs, rng_init, rng_shuffle, rng_augment, model, sgd));
  return result;
}

RestoredModel restore_model(const CheckpointData& ckpt) {
  RestoredModel out{TrainConfig::from_map(parse_kv_text(ckpt.config_text)), Model<float>{}};
  out.config.validate();
  std::mt19937 rng_init(static_cast<std::uint32_t>(out.config.seed));
  out.model = build_simple_cnn<float>(model_config_from(out.config), rng_init);
  apply_params(out.model, ckpt);
  return out;
}

}  // namespace alphapool
