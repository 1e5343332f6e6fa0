#include "ocl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ocl/losses.hpp"
#include "ocl/masking.hpp"

using nlohmann::json;

namespace ocl {

namespace {

std::vector<int> pick_k(const std::vector<int>& group, int k, Rng& rng) {
  std::vector<int> out;
  out.reserve(k);
  const int n = static_cast<int>(group.size());
  if (n >= k) {
    std::vector<int> pool(group);
    for (int t = 0; t < k; ++t) {
      int j = t + static_cast<int>(rng.uniform_int(n - t));
      std::swap(pool[t], pool[j]);
      out.push_back(pool[t]);
    }
  } else {
    for (int t = 0; t < k; ++t)
      out.push_back(group[rng.uniform_int(n)]);
  }
  return out;
}

}  // namespace

std::vector<int> pk_sample(const std::vector<std::vector<int>>& groups,
                           const PKBatchSpec& spec, Rng& rng) {
  const int m = static_cast<int>(groups.size());
  if (m < spec.P)
    throw InvalidConfig("pk_sample: dataset has " + std::to_string(m) +
                        " identities, fewer than P=" + std::to_string(spec.P));
  std::vector<int> ids(m);
  for (int i = 0; i < m; ++i) ids[i] = i;
  rng.shuffle(ids);
  std::vector<int> batch;
  batch.reserve(spec.P * spec.K);
  for (int t = 0; t < spec.P; ++t)
    for (int idx : pick_k(groups[ids[t]], spec.K, rng)) batch.push_back(idx);
  return batch;
}

std::vector<std::vector<int>> pk_epoch_batches(
    const std::vector<std::vector<int>>& groups, const PKBatchSpec& spec,
    Rng& rng) {
  const int m = static_cast<int>(groups.size());
  if (m < spec.P)
    throw InvalidConfig("pk_epoch_batches: dataset has " + std::to_string(m) +
                        " identities, fewer than P=" + std::to_string(spec.P));
  std::vector<int> ids(m);
  for (int i = 0; i < m; ++i) ids[i] = i;
  rng.shuffle(ids);

  std::vector<std::vector<int>> batches;
  for (int start = 0; start < m; start += spec.P) {
    std::vector<int> chunk(ids.begin() + start,
                           ids.begin() + std::min(start + spec.P, m));
    // pad a short final chunk with distinct ids from the shuffled prefix
    for (int t = 0; static_cast<int>(chunk.size()) < spec.P; ++t)
      if (std::find(chunk.begin(), chunk.end(), ids[t]) == chunk.end())
        chunk.push_back(ids[t]);
    std::vector<int> batch;
    batch.reserve(spec.P * spec.K);
    for (int cls : chunk)
      for (int idx : pick_k(groups[cls], spec.K, rng)) batch.push_back(idx);
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::string EpochRecord::to_jsonl() const {
  json j;
  j["epoch"] = epoch;
  j["lr"] = lr;
  j["loss_total"] = loss_total;
  j["loss_softmax"] = loss_softmax;
  j["loss_triplet"] = loss_triplet;
  j["loss_intra_masked"] = loss_intra_masked;
  j["loss_inter"] = loss_inter;
  j["loss_branch_ap"] = loss_branch_ap;
  j["loss_branch_mp"] = loss_branch_mp;
  if (has_eval) {
    j["rank1"] = rank1;
    j["map"] = map;
  } else {
    j["rank1"] = nullptr;
    j["map"] = nullptr;
  }
  return j.dump();
}

Trainer::Trainer(const RunConfig& cfg, const Dataset& dataset)
    : cfg_(cfg), dataset_(dataset), rng_(cfg.seed) {
  cfg_.validate();

  train_indices_ = dataset_.indices_of(Split::Train);
  if (train_indices_.empty())
    throw InvalidConfig("dataset has no training samples");
  class_ids_ = dataset_.distinct_ids(Split::Train);
  for (size_t i = 0; i < class_ids_.size(); ++i)
    id_to_class_[class_ids_[i]] = static_cast<int>(i);
  groups_.assign(class_ids_.size(), {});
  for (int idx : train_indices_)
    groups_[id_to_class_.at(dataset_.ids[idx])].push_back(idx);

  ExtractorConfig ecfg;
  ecfg.image_input = dataset_.image;
  ecfg.input_dim = dataset_.dim;
  ecfg.hidden = cfg_.hidden;
  ecfg.spatial = cfg_.spatial;
  ecfg.out_dim = cfg_.embed_dim;
  ecfg.leaky_slope = cfg_.leaky_slope;
  ecfg.split_pathways = cfg_.split_pathways;
  if (dataset_.image) {
    ecfg.in_channels = dataset_.channels;
    ecfg.in_h = dataset_.height;
    ecfg.in_w = dataset_.width;
  }
  model_ = Model(ecfg, static_cast<int>(class_ids_.size()), rng_);
  opt_.base_lr = cfg_.lr;
  opt_.weight_decay = cfg_.weight_decay;
  opt_.decay_epochs = cfg_.decay_epochs;
  opt_.decay_factor = cfg_.decay_factor;
  opt_.warmup_steps =
      cfg_.warmup_steps >= 0
          ? cfg_.warmup_steps
          : static_cast<int>(std::llround(cfg_.warmup_frac *
                                          steps_per_epoch()));
  opt_.init(model_.parameters());

  if (cfg_.ccl_mode) {
    ccl_centers_ = Matrix(model_.embed_dim(), num_classes());
    for (double& v : ccl_centers_.data)
      v = rng_.normal() / std::sqrt(static_cast<double>(model_.embed_dim()));
  }
}

int Trainer::steps_per_epoch() const {
  const int m = static_cast<int>(groups_.size());
  return (m + cfg_.pk.P - 1) / cfg_.pk.P;
}

SubspaceMask Trainer::draw_mask(const EmbeddingBatch& batch,
                                const CenterBank& bank) {
  switch (cfg_.mask.strategy) {
    case MaskStrategy::Bernoulli:
      return sample_bernoulli(cfg_.mask, model_.embed_dim(), rng_);
    case MaskStrategy::Weighted:
      return sample_weighted(cfg_.mask, per_unit_intra_dist(batch, bank),
                             rng_);
    case MaskStrategy::Hard:
      return sample_hard(cfg_.mask, per_unit_intra_dist(batch, bank));
  }
  return SubspaceMask::ones(model_.embed_dim());
}

void Trainer::update_ccl_centers(const Matrix& embeddings,
                                 const std::vector<int>& labels) {
  const int d = ccl_centers_.rows;
  std::vector<int> counts(num_classes(), 0);
  Matrix delta(d, num_classes());
  for (size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    counts[y] += 1;
    for (int r = 0; r < d; ++r)
      delta(r, y) += embeddings(static_cast<int>(i), r) - ccl_centers_(r, y);
  }
  for (int y = 0; y < num_classes(); ++y) {
    if (counts[y] == 0) continue;
    for (int r = 0; r < d; ++r)
      ccl_centers_(r, y) +=
          cfg_.ccl_update_rate * delta(r, y) / (1.0 + counts[y]);
  }
}

Trainer::StepStats Trainer::step(const std::vector<int>& batch_indices,
                                 int epoch) {
  const int B = static_cast<int>(batch_indices.size());
  Matrix inputs(B, dataset_.dim);
  std::vector<int> labels(B);
  for (int i = 0; i < B; ++i) {
    const int idx = batch_indices[i];
    for (int k = 0; k < dataset_.dim; ++k)
      inputs(i, k) = dataset_.features(idx, k);
    labels[i] = id_to_class_.at(dataset_.ids[idx]);
  }

  ExtractorForward fwd = model_.extractor().forward(inputs);
  const bool branches = cfg_.weights.alpha1 > 0.0;
  HeadOutput head =
      branches ? head_losses(fwd.maps_ap, fwd.maps_mp, labels,
                             cfg_.weights.triplet_margin)
               : head_pool(fwd.maps_ap, fwd.maps_mp);

  Matrix embeddings = model_.normalize(head.fused, /*training=*/true);
  EmbeddingBatch batch{embeddings, labels};
  CenterBank bank = model_.bank();
  std::vector<int> classes = batch_class_set(batch);

  StepStats stats;
  LossReport rep;
  TotalLossBreakdown parts{};
  SubspaceMask mask = SubspaceMask::ones(model_.embed_dim());

  if (!cfg_.ccl_mode) {
    if (cfg_.weights.alpha2 > 0.0) mask = draw_mask(batch, bank);
    rep = total_loss(batch, bank, cfg_.weights, mask, classes, &parts);
  } else {
    // classical-center-loss rung: centers live outside the parameter set
    rep = softmax_ce(batch, bank);
    parts.softmax = rep.value;
    if (cfg_.weights.alpha1 > 0.0) {
      LossReport t = triplet_batch_hard(batch, cfg_.weights.triplet_margin);
      parts.triplet = t.value;
      rep.value += cfg_.weights.alpha1 * t.value;
      for (size_t i = 0; i < rep.grad_features->data.size(); ++i)
        rep.grad_features->data[i] +=
            cfg_.weights.alpha1 * t.grad_features->data[i];
    }
    if (cfg_.weights.alpha2 > 0.0) {
      CenterBank ccl_bank{ccl_centers_};
      LossReport ci = l_intra(batch, ccl_bank);
      parts.intra_masked = ci.value;
      rep.value += cfg_.weights.alpha2 * ci.value;
      for (size_t i = 0; i < rep.grad_features->data.size(); ++i)
        rep.grad_features->data[i] +=
            cfg_.weights.alpha2 * ci.grad_features->data[i];
    }
  }

  stats.softmax = parts.softmax;
  stats.triplet = parts.triplet;
  stats.intra_masked = parts.intra_masked;
  stats.inter = parts.inter;
  stats.branch_ap = branches ? head.triplet_ap.value : 0.0;
  stats.branch_mp = branches ? head.triplet_mp.value : 0.0;
  stats.total = rep.value + cfg_.weights.alpha1 * (stats.branch_ap +
                                                   stats.branch_mp);
  if (!std::isfinite(stats.total))
    throw DivergenceError("non-finite training loss", opt_.step_count);

  // backward
  for (Tensor* t : model_.parameters()) t->zero_grad();
  Matrix grad_fused = model_.normalize_backward(*rep.grad_features);
  HeadGrads hg = head_backward(head, fwd.maps_ap, fwd.maps_mp, grad_fused,
                               cfg_.weights.alpha1);
  model_.extractor().backward(hg.ap, hg.mp);
  if (!cfg_.ccl_mode) {
    Tensor& centers = model_.centers();
    for (size_t i = 0; i < centers.grad.size(); ++i)
      centers.grad[i] += rep.grad_centers->data[i];
  }

  for (Tensor* t : model_.parameters()) {
    double& mx = max_abs_grad_[t->name];
    for (double g : t->grad) mx = std::max(mx, std::abs(g));
  }

  stats.lr = lr_at(opt_.step_count, epoch, opt_);
  adam_step(model_.parameters(), opt_, stats.lr);

  if (cfg_.ccl_mode && cfg_.weights.alpha2 > 0.0)
    update_ccl_centers(embeddings, labels);
  return stats;
}

void Trainer::run_one_epoch() {
  const int epoch = completed_epochs_ + 1;
  max_abs_grad_.clear();
  for (Tensor* t : model_.parameters()) max_abs_grad_[t->name] = 0.0;

  std::vector<std::vector<int>> batches =
      pk_epoch_batches(groups_, cfg_.pk, rng_);
  EpochRecord rec;
  rec.epoch = epoch;
  for (const std::vector<int>& batch : batches) {
    StepStats s = step(batch, epoch);
    rec.loss_total += s.total;
    rec.loss_softmax += s.softmax;
    rec.loss_triplet += s.triplet;
    rec.loss_intra_masked += s.intra_masked;
    rec.loss_inter += s.inter;
    rec.loss_branch_ap += s.branch_ap;
    rec.loss_branch_mp += s.branch_mp;
    rec.lr = s.lr;
  }
  const double n = static_cast<double>(batches.size());
  rec.loss_total /= n;
  rec.loss_softmax /= n;
  rec.loss_triplet /= n;
  rec.loss_intra_masked /= n;
  rec.loss_inter /= n;
  rec.loss_branch_ap /= n;
  rec.loss_branch_mp /= n;

  completed_epochs_ = epoch;
  if (cfg_.eval_every > 0 && epoch % cfg_.eval_every == 0) {
    RetrievalResult res = evaluate_retrieval();
    rec.has_eval = true;
    rec.rank1 = res.rank_at(1);
    rec.map = res.map;
  }
  trace_.push_back(rec);
}

void Trainer::run() {
  while (completed_epochs_ < cfg_.epochs) run_one_epoch();
}

GallerySet Trainer::embed_split(Split split) {
  std::vector<int> indices = dataset_.indices_of(split);
  if (indices.empty())
    throw InvalidInput("dataset has no '" + to_string(split) + "' samples");
  Matrix inputs(static_cast<int>(indices.size()), dataset_.dim);
  GallerySet out;
  for (size_t i = 0; i < indices.size(); ++i) {
    for (int k = 0; k < dataset_.dim; ++k)
      inputs(static_cast<int>(i), k) = dataset_.features(indices[i], k);
    out.ids.push_back(dataset_.ids[indices[i]]);
    out.cameras.push_back(dataset_.cameras[indices[i]]);
  }
  out.embeddings = model_.embed(inputs);
  return out;
}

RetrievalResult Trainer::evaluate_retrieval() {
  GallerySet queries = embed_split(Split::Query);
  GallerySet gallery = embed_split(Split::Gallery);
  int k_max = std::min(cfg_.k_max, gallery.size());
  return evaluate(queries, gallery, k_max);
}

CompactnessReport Trainer::train_compactness() {
  GallerySet train = embed_split(Split::Train);
  std::vector<int> labels(train.ids.size());
  for (size_t i = 0; i < train.ids.size(); ++i)
    labels[i] = id_to_class_.at(train.ids[i]);
  EmbeddingBatch batch{train.embeddings, labels};
  return compactness_report(batch, model_.bank());
}

CorrelationReport Trainer::center_correlation() {
  return center_correlation_report(model_.bank(), {});
}

std::vector<std::string> Trainer::zero_grad_tensors() const {
  std::vector<std::string> out;
  for (const auto& [name, mx] : max_abs_grad_)
    if (mx == 0.0) out.push_back(name);
  return out;
}

void Trainer::save_checkpoint(const std::string& path) const {
  json j;
  j["version"] = 1;
  j["config_hash"] = cfg_.hash();
  j["config"] = cfg_.to_json();
  j["epochs_completed"] = completed_epochs_;
  j["rng"] = rng_.serialize();

  json tensors = json::array();
  for (const Tensor* t : const_cast<Trainer*>(this)->model_.state_tensors()) {
    json tj;
    tj["name"] = t->name;
    tj["shape"] = t->shape;
    tj["value"] = t->value;
    tensors.push_back(std::move(tj));
  }
  j["tensors"] = std::move(tensors);

  json optim;
  optim["step_count"] = opt_.step_count;
  optim["warmup_steps"] = opt_.warmup_steps;
  optim["m"] = opt_.m;
  optim["v"] = opt_.v;
  j["optim"] = std::move(optim);

  if (cfg_.ccl_mode) j["ccl_centers"] = ccl_centers_.data;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out << j.dump() << "\n";
  if (!out) throw IoError("write failed for checkpoint " + path);
}

void Trainer::load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint " + path + ": " + e.what());
  }
  if (j.at("version").get<int>() != 1)
    throw InvalidConfig("unsupported checkpoint version");
  if (j.at("config_hash").get<std::string>() != cfg_.hash())
    throw InvalidConfig(
        "checkpoint was produced under a different config (hash mismatch)");

  std::vector<Tensor*> tensors = model_.state_tensors();
  const json& tj = j.at("tensors");
  if (tj.size() != tensors.size())
    throw InvalidConfig("checkpoint tensor count mismatch");
  for (size_t i = 0; i < tensors.size(); ++i) {
    const json& t = tj[i];
    if (t.at("name").get<std::string>() != tensors[i]->name)
      throw InvalidConfig("checkpoint tensor order mismatch at " +
                          tensors[i]->name);
    VecD value = t.at("value").get<VecD>();
    if (value.size() != tensors[i]->value.size())
      throw InvalidConfig("checkpoint tensor size mismatch at " +
                          tensors[i]->name);
    tensors[i]->value = std::move(value);
  }

  const json& optim = j.at("optim");
  opt_.step_count = optim.at("step_count").get<long>();
  opt_.warmup_steps = optim.at("warmup_steps").get<int>();
  opt_.m = optim.at("m").get<std::vector<VecD>>();
  opt_.v = optim.at("v").get<std::vector<VecD>>();
  if (opt_.m.size() != model_.parameters().size())
    throw InvalidConfig("checkpoint optimizer state mismatch");

  rng_.deserialize(j.at("rng").get<std::string>());
  completed_epochs_ = j.at("epochs_completed").get<int>();
  if (cfg_.ccl_mode) ccl_centers_.data = j.at("ccl_centers").get<VecD>();
}

}  // namespace ocl
