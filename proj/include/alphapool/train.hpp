#pragma once

#include <optional>
#include <string>
#include <vector>

#include "alphapool/checkpoint.hpp"
#include "alphapool/config.hpp"
#include "alphapool/data.hpp"
#include "alphapool/model.hpp"

namespace alphapool {

struct EpochRow {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  std::vector<float> alphas;  // one per alpha pooling layer, in layer order
};

struct TrainResult {
  std::vector<EpochRow> rows;
  std::string final_checkpoint;
  std::string metrics_path;
};

ModelConfig model_config_from(const TrainConfig& cfg);

double evaluate(Model<float>& model, const Dataset& data, int batch_size);

class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);

  // Tests inject synthetic datasets; otherwise run() loads cfg.dataset
  // from cfg.data_dir.
  void set_data(Dataset train, Dataset test);
  void set_resume(CheckpointData ckpt);

  TrainResult run();

 private:
  TrainConfig cfg_;
  std::optional<Dataset> train_data_;
  std::optional<Dataset> test_data_;
  std::optional<CheckpointData> resume_;
};

// Rebuild the model a checkpoint was trained with and load its parameters.
struct RestoredModel {
  TrainConfig config;
  Model<float> model;
};
RestoredModel restore_model(const CheckpointData& ckpt);

}  // namespace alphapool
