#include "ocl/config.hpp"

#include <cstdlib>
#include <fstream>

namespace ocl {

using nlohmann::json;

void RunConfig::validate() const {
  std::vector<std::string> errs;
  auto nonneg = [&](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v))
      errs.push_back(std::string(name) + " must be finite and >= 0");
  };

  if (embed_dim < 1) errs.push_back("embed_dim must be >= 1");
  if (spatial < 1) errs.push_back("spatial must be >= 1");
  for (int h : hidden)
    if (h < 1) errs.push_back("hidden widths must be >= 1");

  nonneg(weights.alpha1, "alpha1");
  nonneg(weights.alpha2, "alpha2");
  nonneg(weights.alpha3, "alpha3");
  nonneg(weights.lambda_orth, "lambda_orth");
  nonneg(weights.triplet_margin, "triplet_margin");
  nonneg(weights.euclid_margin, "euclid_margin");

  if (!(mask.p >= 0.0 && mask.p <= 1.0))
    errs.push_back("mask.p must lie in [0, 1]");

  if (pk.P < 2) errs.push_back("pk.P must be >= 2 (triplet mining)");
  if (pk.K < 2) errs.push_back("pk.K must be >= 2 (triplet mining)");
  if (pk.P * pk.K != batch_size)
    errs.push_back("P*K (" + std::to_string(pk.P * pk.K) +
                   ") must equal batch_size (" + std::to_string(batch_size) +
                   ")");

  if (!(lr > 0.0)) errs.push_back("lr must be > 0");
  nonneg(weight_decay, "weight_decay");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0))
    errs.push_back("decay_factor must lie in (0, 1]");
  for (int e : decay_epochs)
    if (e < 1) errs.push_back("decay_epochs entries must be >= 1");
  if (!(warmup_frac >= 0.0 && warmup_frac <= 1.0))
    errs.push_back("warmup_frac must lie in [0, 1]");

  if (epochs < 0) errs.push_back("epochs must be >= 0");
  if (eval_every < 0) errs.push_back("eval_every must be >= 0");
  if (checkpoint_every < 0) errs.push_back("checkpoint_every must be >= 0");
  if (k_max < 1) errs.push_back("k_max must be >= 1");
  if (threads < 0) errs.push_back("threads must be >= 0");
  if (!(ccl_update_rate > 0.0 && ccl_update_rate <= 1.0))
    errs.push_back("ccl_update_rate must lie in (0, 1]");

  if (!errs.empty()) {
    std::string msg = "invalid config:";
    for (const std::string& e : errs) msg += "\n  - " + e;
    throw InvalidConfig(msg);
  }
}

json RunConfig::to_json() const {
  json j;
  j["synthetic"] = {{"num_classes", synthetic.num_classes},
                    {"samples_per_class", synthetic.samples_per_class},
                    {"dim", synthetic.dim},
                    {"cluster_spread", synthetic.cluster_spread},
                    {"separation", synthetic.separation},
                    {"train_frac", synthetic.train_frac},
                    {"query_frac", synthetic.query_frac},
                    {"seed", synthetic.seed}};
  j["model"] = {{"embed_dim", embed_dim},
                {"hidden", hidden},
                {"spatial", spatial},
                {"leaky_slope", leaky_slope},
                {"split_pathways", split_pathways}};
  j["loss"] = {{"alpha1", weights.alpha1},
               {"alpha2", weights.alpha2},
               {"alpha3", weights.alpha3},
               {"lambda_orth", weights.lambda_orth},
               {"triplet_margin", weights.triplet_margin},
               {"euclid_margin", weights.euclid_margin},
               {"euclid_exclude_same_class", weights.euclid_exclude_same_class}};
  j["mask"] = {{"p", mask.p}, {"strategy", to_string(mask.strategy)}};
  j["batch"] = {{"P", pk.P}, {"K", pk.K}, {"batch_size", batch_size}};
  j["optim"] = {{"lr", lr},
                {"weight_decay", weight_decay},
                {"decay_epochs", decay_epochs},
                {"decay_factor", decay_factor},
                {"warmup_steps", warmup_steps},
                {"warmup_frac", warmup_frac}};
  j["run"] = {{"epochs", epochs},
              {"eval_every", eval_every},
              {"checkpoint_every", checkpoint_every},
              {"k_max", k_max},
              {"seed", seed},
              {"threads", threads},
              {"ccl_mode", ccl_mode},
              {"ccl_update_rate", ccl_update_rate}};
  return j;
}

namespace {

// Strict field reader: unknown keys inside a known section are config
// errors, so typos never silently fall back to defaults.
template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> known,
                std::vector<std::string>& errs) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) ok = true;
    if (!ok) errs.push_back("unknown key '" + section + "." + it.key() + "'");
  }
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  std::vector<std::string> errs;
  check_keys(j, "", {"synthetic", "model", "loss", "mask", "batch", "optim",
                     "run"},
             errs);
  if (j.contains("synthetic")) {
    const json& s = j.at("synthetic");
    check_keys(s, "synthetic",
               {"num_classes", "samples_per_class", "dim", "cluster_spread",
                "separation", "train_frac", "query_frac", "seed"},
               errs);
    read(s, "num_classes", c.synthetic.num_classes);
    read(s, "samples_per_class", c.synthetic.samples_per_class);
    read(s, "dim", c.synthetic.dim);
    read(s, "cluster_spread", c.synthetic.cluster_spread);
    read(s, "separation", c.synthetic.separation);
    read(s, "train_frac", c.synthetic.train_frac);
    read(s, "query_frac", c.synthetic.query_frac);
    read(s, "seed", c.synthetic.seed);
  }
  if (j.contains("model")) {
    const json& s = j.at("model");
    check_keys(s, "model",
               {"embed_dim", "hidden", "spatial", "leaky_slope",
                "split_pathways"},
               errs);
    read(s, "embed_dim", c.embed_dim);
    read(s, "hidden", c.hidden);
    read(s, "spatial", c.spatial);
    read(s, "leaky_slope", c.leaky_slope);
    read(s, "split_pathways", c.split_pathways);
  }
  if (j.contains("loss")) {
    const json& s = j.at("loss");
    check_keys(s, "loss",
               {"alpha1", "alpha2", "alpha3", "lambda_orth", "triplet_margin",
                "euclid_margin", "euclid_exclude_same_class"},
               errs);
    read(s, "alpha1", c.weights.alpha1);
    read(s, "alpha2", c.weights.alpha2);
    read(s, "alpha3", c.weights.alpha3);
    read(s, "lambda_orth", c.weights.lambda_orth);
    read(s, "triplet_margin", c.weights.triplet_margin);
    read(s, "euclid_margin", c.weights.euclid_margin);
    read(s, "euclid_exclude_same_class", c.weights.euclid_exclude_same_class);
  }
  if (j.contains("mask")) {
    const json& s = j.at("mask");
    check_keys(s, "mask", {"p", "strategy"}, errs);
    read(s, "p", c.mask.p);
    if (s.contains("strategy"))
      c.mask.strategy =
          mask_strategy_from_string(s.at("strategy").get<std::string>());
  }
  if (j.contains("batch")) {
    const json& s = j.at("batch");
    check_keys(s, "batch", {"P", "K", "batch_size"}, errs);
    read(s, "P", c.pk.P);
    read(s, "K", c.pk.K);
    if (s.contains("batch_size"))
      read(s, "batch_size", c.batch_size);
    else
      c.batch_size = c.pk.P * c.pk.K;
  }
  if (j.contains("optim")) {
    const json& s = j.at("optim");
    check_keys(s, "optim",
               {"lr", "weight_decay", "decay_epochs", "decay_factor",
                "warmup_steps", "warmup_frac"},
               errs);
    read(s, "lr", c.lr);
    read(s, "weight_decay", c.weight_decay);
    read(s, "decay_epochs", c.decay_epochs);
    read(s, "decay_factor", c.decay_factor);
    read(s, "warmup_steps", c.warmup_steps);
    read(s, "warmup_frac", c.warmup_frac);
  }
  if (j.contains("run")) {
    const json& s = j.at("run");
    check_keys(s, "run",
               {"epochs", "eval_every", "checkpoint_every", "k_max", "seed",
                "threads", "ccl_mode", "ccl_update_rate"},
               errs);
    read(s, "epochs", c.epochs);
    read(s, "eval_every", c.eval_every);
    read(s, "checkpoint_every", c.checkpoint_every);
    read(s, "k_max", c.k_max);
    read(s, "seed", c.seed);
    read(s, "threads", c.threads);
    read(s, "ccl_mode", c.ccl_mode);
    read(s, "ccl_update_rate", c.ccl_update_rate);
  }
  if (!errs.empty()) {
    std::string msg = "invalid config:";
    for (const std::string& e : errs) msg += "\n  - " + e;
    throw InvalidConfig(msg);
  }
  return c;
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InvalidConfig("malformed config " + path + ": " + e.what());
  }
  return from_json(j);
}

std::string RunConfig::hash() const {
  // Only trajectory-affecting fields take part: a resume may legitimately
  // extend epochs or change eval/checkpoint cadence and output paths.
  json j = to_json();
  j.erase("synthetic");
  j["run"] = {{"seed", seed},
              {"ccl_mode", ccl_mode},
              {"ccl_update_rate", ccl_update_rate}};
  const std::string dump = j.dump();
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

void apply_seed_override(RunConfig& cfg) {
  const char* env = std::getenv("OCL_SEED");
  if (!env) return;
  try {
    cfg.seed = std::stoull(env);
    cfg.synthetic.seed = cfg.seed;
  } catch (const std::exception&) {
    throw InvalidConfig("OCL_SEED must be an unsigned integer, got '" +
                        std::string(env) + "'");
  }
}

}  // namespace ocl
