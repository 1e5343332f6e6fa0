#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ocl/dataset.hpp"
#include "ocl/types.hpp"

namespace ocl {

// P identities x K samples per training batch.
struct PKBatchSpec {
  int P = 16;
  int K = 4;
};

// Everything a run needs. Loaded from JSON, overridden by CLI flags, and
// validated in one pass that reports every violation together.
struct RunConfig {
  SyntheticSpec synthetic;

  // model
  int embed_dim = 32;
  std::vector<int> hidden = {64, 64};
  int spatial = 2;
  double leaky_slope = 0.1;
  bool split_pathways = false;

  LossWeights weights;
  MaskConfig mask;
  PKBatchSpec pk;
  int batch_size = 64;  // must equal P*K

  // optimizer / schedule
  double lr = 1e-3;
  double weight_decay = 1e-4;
  std::vector<int> decay_epochs = {80, 180, 300};
  double decay_factor = 0.1;
  int warmup_steps = -1;      // -1: derive from warmup_frac
  double warmup_frac = 0.1;   // fraction of epoch-1 steps

  // run control
  int epochs = 10;
  int eval_every = 0;        // 0: only final
  int checkpoint_every = 0;  // 0: only final
  int k_max = 10;
  uint64_t seed = 42;
  int threads = 0;  // 0: library default

  // CCL ablation rung: unparameterized centers updated by the classical
  // moving-average rule instead of gradient descent.
  bool ccl_mode = false;
  double ccl_update_rate = 0.5;

  void validate() const;  // throws InvalidConfig listing all violations

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load_file(const std::string& path);

  // FNV-1a over the canonical JSON dump; guards checkpoint resumes.
  std::string hash() const;
};

// Applies the OCL_SEED environment override, if set.
void apply_seed_override(RunConfig& cfg);

}  // namespace ocl
