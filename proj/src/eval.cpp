#include "ocl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ocl/kernels.hpp"

namespace ocl {

namespace {

bool excluded(int query_id, int query_cam, int gal_id, int gal_cam) {
  return query_cam >= 0 && gal_cam >= 0 && gal_id == query_id &&
         gal_cam == query_cam;
}

std::vector<int> rank_from_dists(const double* dist, int query_id,
                                 int query_cam, const GallerySet& gallery) {
  std::vector<int> idx;
  idx.reserve(gallery.size());
  for (int j = 0; j < gallery.size(); ++j)
    if (!excluded(query_id, query_cam, gallery.ids[j], gallery.cameras[j]))
      idx.push_back(j);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    return a < b;
  });
  return idx;
}

}  // namespace

std::vector<int> rank_gallery(const VecD& query, int query_id, int query_cam,
                              const GallerySet& gallery) {
  if (static_cast<int>(query.size()) != gallery.embeddings.cols)
    throw InvalidInput("rank_gallery: dimension mismatch");
  Matrix q(1, static_cast<int>(query.size()));
  q.data = query;
  Matrix d2 = kern::pairwise_sq_dist(q, gallery.embeddings);
  std::vector<int> ranked =
      rank_from_dists(d2.row(0), query_id, query_cam, gallery);
  if (ranked.empty())
    throw InvalidInput("rank_gallery: no valid gallery entries after "
                       "exclusion");
  return ranked;
}

RetrievalResult evaluate(const GallerySet& queries, const GallerySet& gallery,
                         int k_max) {
  if (queries.size() < 1 || gallery.size() < 1)
    throw InvalidInput("evaluate: empty query or gallery set");
  if (queries.embeddings.cols != gallery.embeddings.cols)
    throw InvalidInput("evaluate: embedding dimension mismatch");
  if (k_max < 1) throw InvalidInput("evaluate: k_max must be >= 1");

  Matrix d2 = kern::pairwise_sq_dist(queries.embeddings, gallery.embeddings);

  const int nq = queries.size();
  // Per-query results land in independent slots; the merge below walks them
  // in query order, so the reduction is order-independent across threads.
  std::vector<double> ap(nq, -1.0);        // -1 = skipped
  std::vector<int> first_rank(nq, 0);

#pragma omp parallel for
  for (int qi = 0; qi < nq; ++qi) {
    std::vector<int> ranked = rank_from_dists(
        d2.row(qi), queries.ids[qi], queries.cameras[qi], gallery);
    int n_pos = 0;
    for (int j : ranked)
      if (gallery.ids[j] == queries.ids[qi]) ++n_pos;
    if (n_pos == 0) continue;

    int hits = 0;
    double ap_sum = 0.0;
    int first = 0;
    for (size_t t = 0; t < ranked.size(); ++t) {
      if (gallery.ids[ranked[t]] == queries.ids[qi]) {
        ++hits;
        ap_sum += static_cast<double>(hits) / static_cast<double>(t + 1);
        if (first == 0) first = static_cast<int>(t + 1);
      }
    }
    ap[qi] = ap_sum / n_pos;
    first_rank[qi] = first;
  }

  RetrievalResult res;
  res.cmc.assign(k_max, 0.0);
  double map_sum = 0.0;
  for (int qi = 0; qi < nq; ++qi) {
    if (ap[qi] < 0.0) {
      ++res.skipped_queries;
      continue;
    }
    ++res.evaluated_queries;
    res.per_query_ap.push_back(ap[qi]);
    map_sum += ap[qi];
    for (int k = first_rank[qi]; k <= k_max; ++k) res.cmc[k - 1] += 1.0;
  }
  if (res.evaluated_queries == 0)
    throw InvalidInput("evaluate: no query has a valid positive");
  for (double& c : res.cmc) c /= res.evaluated_queries;
  res.map = map_sum / res.evaluated_queries;
  return res;
}

CorrelationReport center_correlation_report(const CenterBank& bank,
                                            const std::vector<int>& subset) {
  std::vector<int> classes = subset;
  if (classes.empty()) {
    classes.resize(bank.num_classes());
    for (int i = 0; i < bank.num_classes(); ++i) classes[i] = i;
  }
  if (classes.size() < 2)
    throw InvalidInput("center_correlation_report: need >= 2 centers");

  const int d = bank.dim();
  const int k = static_cast<int>(classes.size());
  Matrix chat(d, k);
  for (int j = 0; j < k; ++j) {
    VecD unit = kern::l2_normalize(bank.W.col_copy(classes[j]));
    for (int r = 0; r < d; ++r) chat(r, j) = unit[r];
  }

  CorrelationReport rep;
  rep.cosine = kern::gram(chat);
  double sum = 0.0, mx = 0.0;
  int count = 0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      if (i == j) continue;
      double a = std::abs(rep.cosine(i, j));
      sum += a;
      mx = std::max(mx, a);
      ++count;
    }
  rep.mean_abs_offdiag = sum / count;
  rep.max_abs_offdiag = mx;
  return rep;
}

CompactnessReport compactness_report(const EmbeddingBatch& batch,
                                     const CenterBank& bank) {
  batch.validate(bank.num_classes());
  if (batch.dim() != bank.dim())
    throw InvalidInput("compactness_report: dimension mismatch");

  std::map<int, std::pair<double, int>> acc;  // class -> (sum, count)
  double global = 0.0;
  for (int i = 0; i < batch.size(); ++i) {
    double sq = 0.0;
    for (int k = 0; k < batch.dim(); ++k) {
      double diff = batch.features(i, k) - bank.W(k, batch.labels[i]);
      sq += diff * diff;
    }
    double dist = std::sqrt(sq);
    auto& slot = acc[batch.labels[i]];
    slot.first += dist;
    slot.second += 1;
    global += dist;
  }

  CompactnessReport rep;
  for (const auto& [cls, sums] : acc)
    rep.per_class.emplace_back(cls, sums.first / sums.second);
  rep.global_mean = global / batch.size();
  return rep;
}

}  // namespace ocl
