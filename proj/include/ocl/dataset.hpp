#pragma once

#include <string>
#include <vector>

#include "ocl/common.hpp"
#include "ocl/matrix.hpp"

namespace ocl {

enum class Split { Train, Query, Gallery };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

// Labeled samples with train/query/gallery splits. Camera id -1 means
// "no camera information" and disables the same-camera exclusion rule.
struct Dataset {
  int dim = 0;
  bool image = false;
  int channels = 0, height = 0, width = 0;  // set when image
  Matrix features;  // N x dim
  std::vector<int> ids;
  std::vector<int> cameras;
  std::vector<Split> splits;

  int size() const { return features.rows; }
  std::vector<int> indices_of(Split s) const;
  std::vector<int> distinct_ids(Split s) const;
};

struct SyntheticSpec {
  int num_classes = 10;
  int samples_per_class = 20;
  int dim = 16;
  double cluster_spread = 1.0;
  double separation = 1.0;
  double train_frac = 0.7;
  double query_frac = 0.1;  // remainder is gallery
  uint64_t seed = 0;

  // All violations reported together.
  void validate() const;
};

// Gaussian identity clusters: hidden per-class centers at scale
// `separation`, samples spread around them at scale `cluster_spread`.
// Deterministic for a fixed seed.
Dataset generate_synthetic(const SyntheticSpec& spec);

// data.csv (header: id,camera,split,f_0..f_{D-1}) plus manifest.json in
// `dir`. Byte-identical across runs for the same dataset.
void write_dataset(const Dataset& ds, const std::string& dir);
Dataset read_dataset(const std::string& dir);

// %.17g, round-trip exact for doubles.
std::string format_double(double x);

}  // namespace ocl
