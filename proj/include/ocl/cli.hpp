#pragma once

#include <string>

#include "ocl/config.hpp"
#include "ocl/gradcheck.hpp"

namespace ocl::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitVerification = 4;

// Writes data.csv + manifest.json for cfg.synthetic into out_dir.
int cmd_generate(const RunConfig& cfg, const std::string& out_dir);

// Trains on the dataset in dataset_dir; writes config.json, trace.jsonl and
// checkpoint.json into out_dir. resume_path may name an earlier checkpoint
// produced under the same config.
int cmd_train(const RunConfig& cfg, const std::string& dataset_dir,
              const std::string& out_dir, const std::string& resume_path = "");

// Loads a checkpoint (self-describing: carries its config), embeds the
// query/gallery splits and writes a RetrievalResult JSON. Optionally dumps
// query+gallery embeddings as CSV (id, camera, f_0..f_{d-1}).
int cmd_eval(const std::string& checkpoint_path,
             const std::string& dataset_dir, const std::string& out_path,
             const std::string& export_embeddings_path = "");

// Finite-difference verification over every loss op and the pooling head.
int cmd_gradcheck(const GradCheckOptions& opts);

// Trains the ablation ladder under one seed and writes ablation.csv.
int cmd_ablate(const RunConfig& cfg, const std::string& dataset_dir,
               const std::string& out_dir, bool sweep_strategies,
               bool include_ccl);

// Full argv interface; maps errors onto exit codes.
int run_cli(int argc, char** argv);

}  // namespace ocl::cli
