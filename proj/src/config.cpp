#include "alphapool/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "alphapool/model.hpp"
#include "alphapool/optim.hpp"

namespace alphapool {
namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used;
    const int x = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: '" + key + "' expects an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used;
    const unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: '" + key + "' expects an unsigned integer, got '" +
                                v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not key=value: '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config: empty key on line " + std::to_string(lineno));
    if (kv.count(key))
      throw std::invalid_argument("config: duplicate key '" + key + "'");
    kv[key] = val;
  }
  return kv;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_kv_text(ss.str());
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  c.apply(kv);
  return c;
}

void TrainConfig::apply(const std::map<std::string, std::string>& kv) {
  for (const auto& [key, v] : kv) {
    if (key == "dataset") dataset = v;
    else if (key == "data_dir") data_dir = v;
    else if (key == "out_dir") out_dir = v;
    else if (key == "pool") pool = v;
    else if (key == "epochs") epochs = to_int(key, v);
    else if (key == "batch_size") batch_size = to_int(key, v);
    else if (key == "base_lr") base_lr = to_double(key, v);
    else if (key == "lr_milestones") lr_milestones = v;
    else if (key == "momentum") momentum = to_double(key, v);
    else if (key == "weight_decay") weight_decay = to_double(key, v);
    else if (key == "seed") seed = to_u64(key, v);
    else if (key == "checkpoint_interval") checkpoint_interval = to_int(key, v);
    else if (key == "alpha_init") alpha_init = to_double(key, v);
    else if (key == "freeze_alpha") freeze_alpha = to_bool(key, v);
    else if (key == "activation") activation = v;
    else if (key == "augment_pad") augment_pad = to_int(key, v);
    else if (key == "eval_batch") eval_batch = to_int(key, v);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

void TrainConfig::validate() const {
  if (dataset != "mnist" && dataset != "cifar10")
    throw std::invalid_argument("config: dataset must be mnist or cifar10, got '" + dataset +
                                "'");
  parse_pool_kind(pool);
  parse_activation(activation);
  LrSchedule::parse(base_lr, lr_milestones);
  if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (eval_batch < 1) throw std::invalid_argument("config: eval_batch must be >= 1");
  if (checkpoint_interval < 0)
    throw std::invalid_argument("config: checkpoint_interval must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("config: momentum must be in [0, 1)");
  if (weight_decay < 0.0)
    throw std::invalid_argument("config: weight_decay must be >= 0");
  if (augment_pad < -1)
    throw std::invalid_argument("config: augment_pad must be >= 0 (or -1 for default)");
}

// Everything that defines the computation; deliberately excludes data_dir
// and out_dir so checkpoints from identical runs are byte-identical no
// matter where they were written.
std::string TrainConfig::canonical_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "dataset=" << dataset << "\n";
  os << "pool=" << pool << "\n";
  os << "epochs=" << epochs << "\n";
  os << "batch_size=" << batch_size << "\n";
  os << "base_lr=" << base_lr << "\n";
  os << "lr_milestones=" << lr_milestones << "\n";
  os << "momentum=" << momentum << "\n";
  os << "weight_decay=" << weight_decay << "\n";
  os << "seed=" << seed << "\n";
  os << "checkpoint_interval=" << checkpoint_interval << "\n";
  os << "alpha_init=" << alpha_init << "\n";
  os << "freeze_alpha=" << (freeze_alpha ? "true" : "false") << "\n";
  os << "activation=" << activation << "\n";
  os << "augment_pad=" << augment_pad << "\n";
  os << "eval_batch=" << eval_batch << "\n";
  return os.str();
}

}  // namespace alphapool
