#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace alphapool {

// key=value lines; '#' starts a comment; blank lines ignored.
std::map<std::string, std::string> parse_kv_text(const std::string& text);
std::map<std::string, std::string> parse_kv_file(const std::string& path);

struct TrainConfig {
  std::string dataset = "mnist";
  std::string data_dir;
  std::string out_dir = "run";
  std::string pool = "alpha";
  int epochs = 15;
  int batch_size = 32;
  double base_lr = 0.001;
  std::string lr_milestones = "5:0.1,10:0.1";
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::uint64_t seed = 1;
  int checkpoint_interval = 0;  // epochs between checkpoints; 0 = final only
  double alpha_init = -3.0;
  bool freeze_alpha = false;
  std::string activation = "auto";
  int augment_pad = -1;  // -1 = dataset default (0 for mnist, 4 for cifar10)
  int eval_batch = 250;

  static TrainConfig from_map(const std::map<std::string, std::string>& kv);
  void apply(const std::map<std::string, std::string>& kv);
  std::string canonical_text() const;
  void validate() const;

  int effective_augment_pad() const {
    if (augment_pad >= 0) return augment_pad;
    return dataset == "cifar10" ? 4 : 0;
  }
};

}  // namespace alphapool
