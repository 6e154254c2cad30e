#include "vtr/runconfig.hpp"

#include <fstream>
#include <sstream>

#include "vtr/check.hpp"
#include "vtr/rng.hpp"

namespace vtr::data {

const std::vector<KeySpec>& RunConfig::known_keys() {
  static const std::vector<KeySpec> keys = {
      {"seed", "7", "master seed; every stream derives from it"},
      {"epochs", "200", "training epochs"},
      {"batch_size", "16", "pairs per optimizer step"},
      {"lr", "1e-3", "base learning rate (cosine-decayed to 0)"},
      {"weight_decay", "0.01", "decoupled weight decay"},
      {"adam_beta1", "0.9", "first-moment decay"},
      {"adam_beta2", "0.999", "second-moment decay"},
      {"adam_eps", "1e-8", "optimizer epsilon"},
      {"grad_clip", "1.0", "global-norm gradient clip; 0 disables"},
      {"warmup_frac", "0.1", "fraction of steps spent in linear lr warmup"},
      {"lambda", "0.5", "caption loss weight in the total objective"},
      {"k", "3", "prompt vectors sampled for training-time pooling"},
      {"nf", "6", "frames per training clip / cube temporal extent"},
      {"layers", "4", "video encoder depth"},
      {"dim", "64", "embedding width"},
      {"heads", "4", "attention heads"},
      {"patch", "8", "patch size"},
      {"image_size", "32", "frame height/width"},
      {"text_layers", "2", "text encoder depth"},
      {"max_len", "12", "token sequence cap"},
      {"cap_layers", "3", "caption decoder blocks"},
      {"use_cube", "true", "enable the prompt cube in the encoder"},
      {"use_aggregation", "true", "enable the cube readout (requires use_cube)"},
      {"use_caption", "true", "enable the auxiliary captioning loss"},
      {"tfidf_mode", "weight", "weight | mask (hard-mask zero-weight targets)"},
      {"pooling", "mean", "mean | attention | topk | xpool fusion head"},
      {"topk_kprime", "3", "k' for topk pooling"},
      {"threads", "1", "worker threads for per-item forward/backward"},
      {"eval_every", "1", "epochs between held-out retrieval evals"},
      {"early_stop_train_r1", "false", "stop once train R@1 reaches 100 both ways"},
      {"train_r1_every", "10", "epochs between train-split R@1 checks"},
      {"corpus_dir", "", "dataset directory (manifest.json, videos/, vocab.txt)"},
      {"out_dir", "runs/out", "output directory for checkpoints and logs"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const KeySpec& k : known_keys()) values_[k.name] = k.def;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (values_.find(key) == values_.end())
    throw ConfigError("unknown config key: " + key);
  values_[key] = value;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config: " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " lacks '='");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  try {
    return std::stoll(get(key));
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an integer: " + get(key));
  }
}

double RunConfig::get_double(const std::string& key) const {
  try {
    return std::stod(get(key));
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not a number: " + get(key));
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: " + v);
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  try {
    return std::stoull(get(key));
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an unsigned integer: " + get(key));
  }
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << "=" << v << "\n";
  return os.str();
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(Rng::fnv1a(serialize())));
  return buf;
}

}  // namespace vtr::data
