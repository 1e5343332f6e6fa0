#pragma once

#include <map>
#include <string>
#include <vector>

#include "ocl/config.hpp"
#include "ocl/dataset.hpp"
#include "ocl/eval.hpp"
#include "ocl/model.hpp"
#include "ocl/optim.hpp"

namespace ocl {

// One identity-balanced batch: P distinct classes, K samples each. Samples
// are drawn without replacement when a class has >= K of them, with
// replacement otherwise.
std::vector<int> pk_sample(const std::vector<std::vector<int>>& groups,
                           const PKBatchSpec& spec, Rng& rng);

// A full epoch of batches: every class appears in at least one batch. Short
// trailing chunks are padded with extra distinct classes.
std::vector<std::vector<int>> pk_epoch_batches(
    const std::vector<std::vector<int>>& groups, const PKBatchSpec& spec,
    Rng& rng);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double loss_total = 0.0;
  double loss_softmax = 0.0;
  double loss_triplet = 0.0;
  double loss_intra_masked = 0.0;
  double loss_inter = 0.0;
  double loss_branch_ap = 0.0;
  double loss_branch_mp = 0.0;
  bool has_eval = false;
  double rank1 = 0.0;
  double map = 0.0;

  // One JSONL line; every loss component key is always present.
  std::string to_jsonl() const;
};

// End-to-end training loop: PK sampling -> extractor -> dual-pooling head ->
// BN/LeakyReLU -> mask draw -> combined loss -> backward -> Adam. Owns the
// single RNG stream, so runs are reproducible and resumable bit-for-bit.
class Trainer {
 public:
  Trainer(const RunConfig& cfg, const Dataset& dataset);

  void run();  // trains up to cfg.epochs total epochs
  // Runs exactly one epoch; exposed for callers that interleave work.
  void run_one_epoch();

  const std::vector<EpochRecord>& trace() const { return trace_; }
  Model& model() { return model_; }
  const RunConfig& config() const { return cfg_; }
  int completed_epochs() const { return completed_epochs_; }
  int num_classes() const { return static_cast<int>(class_ids_.size()); }
  int steps_per_epoch() const;

  RetrievalResult evaluate_retrieval();
  // Embeds a split; ids/cameras are the dataset's raw values.
  GallerySet embed_split(Split split);
  CompactnessReport train_compactness();
  CorrelationReport center_correlation();

  // Tensors whose gradient stayed exactly zero across the last epoch.
  std::vector<std::string> zero_grad_tensors() const;

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

 private:
  struct StepStats {
    double total = 0, softmax = 0, triplet = 0, intra_masked = 0, inter = 0,
           branch_ap = 0, branch_mp = 0, lr = 0;
  };
  StepStats step(const std::vector<int>& batch_indices, int epoch);
  SubspaceMask draw_mask(const EmbeddingBatch& batch, const CenterBank& bank);
  void update_ccl_centers(const Matrix& embeddings,
                          const std::vector<int>& labels);

  RunConfig cfg_;
  const Dataset& dataset_;
  Rng rng_;
  Model model_;
  OptimState opt_;

  std::vector<int> train_indices_;
  std::vector<int> class_ids_;               // sorted distinct train ids
  std::map<int, int> id_to_class_;
  std::vector<std::vector<int>> groups_;     // class -> train indices

  Matrix ccl_centers_;  // d x M, used only in ccl_mode

  std::vector<EpochRecord> trace_;
  int completed_epochs_ = 0;
  std::map<std::string, double> max_abs_grad_;  // per tensor, last epoch
};

}  // namespace ocl
