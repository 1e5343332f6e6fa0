#pragma once

#include <utility>
#include <vector>

#include "ocl/types.hpp"

namespace ocl {

// Embedded samples with identities and optional camera ids (-1 = absent).
struct GallerySet {
  Matrix embeddings;  // n x d
  std::vector<int> ids;
  std::vector<int> cameras;

  int size() const { return embeddings.rows; }
};

struct RetrievalResult {
  VecD cmc;  // Rank-1..Rank-K_max accuracies
  double map = 0.0;
  VecD per_query_ap;  // one entry per evaluated query, in query order
  int evaluated_queries = 0;
  int skipped_queries = 0;  // queries with zero valid positives

  double rank_at(int k) const { return cmc.at(k - 1); }
};

// Gallery indices by ascending Euclidean distance, ties broken by index.
// Entries sharing both identity and camera with the query are excluded when
// both camera ids are present (standard single-query protocol).
std::vector<int> rank_gallery(const VecD& query, int query_id, int query_cam,
                              const GallerySet& gallery);

// Single-query CMC and mAP. Queries with zero valid positives are skipped
// and counted; throws if nothing remains evaluable.
RetrievalResult evaluate(const GallerySet& queries, const GallerySet& gallery,
                         int k_max);

struct CorrelationReport {
  Matrix cosine;  // pairwise cosines of the normalized centers
  double mean_abs_offdiag = 0.0;
  double max_abs_offdiag = 0.0;
};

// Pairwise cosine matrix over the (L2-normalized) centers of `subset`, or
// all centers when subset is empty.
CorrelationReport center_correlation_report(const CenterBank& bank,
                                            const std::vector<int>& subset);

struct CompactnessReport {
  std::vector<std::pair<int, double>> per_class;  // class id, mean |v - c|
  double global_mean = 0.0;                       // mean over all samples
};

CompactnessReport compactness_report(const EmbeddingBatch& batch,
                                     const CenterBank& bank);

}  // namespace ocl
