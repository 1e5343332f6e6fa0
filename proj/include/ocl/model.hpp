#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ocl/matrix.hpp"
#include "ocl/pooling.hpp"
#include "ocl/types.hpp"

namespace ocl {

// Named parameter or buffer tensor. Gradients live alongside values so the
// optimizer and the coverage audit can walk one flat list.
struct Tensor {
  std::string name;
  std::vector<int> shape;
  VecD value;
  VecD grad;
  bool trainable = true;

  Tensor() = default;
  Tensor(std::string n, std::vector<int> s, bool train = true)
      : name(std::move(n)), shape(std::move(s)), trainable(train) {
    size_t total = 1;
    for (int dim : shape) total *= static_cast<size_t>(dim);
    value.assign(total, 0.0);
    grad.assign(total, 0.0);
  }

  size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

  Matrix as_matrix() const {
    Matrix m(shape[0], shape[1]);
    m.data = value;
    return m;
  }
};

struct Linear {
  Tensor W;  // out x in
  Tensor b;  // out

  Linear() = default;
  Linear(const std::string& name, int in, int out)
      : W(name + ".W", {out, in}), b(name + ".b", {out}) {}

  int in_dim() const { return W.shape[1]; }
  int out_dim() const { return W.shape[0]; }

  Matrix forward(const Matrix& x) const;
  // Accumulates W.grad/b.grad and returns the input gradient.
  Matrix backward(const Matrix& x, const Matrix& grad_out);
};

struct Conv2d {
  Tensor W;  // out_c x in_c x k x k (flattened)
  Tensor b;  // out_c
  int in_c = 0, out_c = 0, ksize = 3, stride = 1, pad = 1;

  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels,
         int stride_);

  int out_extent(int in_extent) const {
    return (in_extent + 2 * pad - ksize) / stride + 1;
  }

  std::vector<FeatureMap> forward(const std::vector<FeatureMap>& in) const;
  std::vector<FeatureMap> backward(const std::vector<FeatureMap>& in,
                                   const std::vector<FeatureMap>& grad_out);
};

// Per-channel batch normalization over B x d matrices. Training mode uses
// batch statistics and refreshes the running ones; eval mode reads the
// frozen running statistics only.
struct BatchNorm1d {
  Tensor gamma, beta;
  Tensor running_mean, running_var;  // buffers
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNorm1d() = default;
  explicit BatchNorm1d(const std::string& name, int dim)
      : gamma(name + ".gamma", {dim}),
        beta(name + ".beta", {dim}),
        running_mean(name + ".running_mean", {dim}, false),
        running_var(name + ".running_var", {dim}, false) {
    std::fill(gamma.value.begin(), gamma.value.end(), 1.0);
    std::fill(running_var.value.begin(), running_var.value.end(), 1.0);
  }

  Matrix forward(const Matrix& x, bool training);
  Matrix backward(const Matrix& grad_out);

 private:
  // caches from the last training-mode forward
  Matrix xhat_;
  VecD invstd_;
};

Matrix leaky_relu(const Matrix& x, double slope);
Matrix leaky_relu_backward(const Matrix& pre, const Matrix& grad_out,
                           double slope);

struct ExtractorConfig {
  bool image_input = false;
  // vector path
  int input_dim = 32;
  std::vector<int> hidden = {64, 64};
  int spatial = 2;  // output maps are d x spatial x spatial
  // image path
  int in_channels = 1, in_h = 16, in_w = 16;
  std::vector<int> conv_channels = {8, 16};  // widths of the strided blocks
  // shared
  int out_dim = 32;  // d
  double leaky_slope = 0.1;
  bool split_pathways = false;
};

struct ExtractorForward {
  std::vector<FeatureMap> maps_ap;
  std::vector<FeatureMap> maps_mp;  // aliases maps_ap unless split_pathways
};

// Toy feature extractor: an MLP reshaped to d x s x s maps for vector
// inputs, or three conv blocks (final one stride 1) for image inputs. With
// split_pathways the final block is duplicated so each pooling branch owns
// its own last-stage parameters.
class Extractor {
 public:
  Extractor() = default;
  Extractor(const ExtractorConfig& cfg, Rng& rng);

  ExtractorForward forward(const Matrix& inputs);
  void backward(const std::vector<FeatureMap>& grad_ap,
                const std::vector<FeatureMap>& grad_mp);

  std::vector<Tensor*> parameters();
  const ExtractorConfig& config() const { return cfg_; }
  // spatial extent of output maps
  int map_h() const { return map_h_; }
  int map_w() const { return map_w_; }

 private:
  ExtractorConfig cfg_;
  int map_h_ = 0, map_w_ = 0;

  // vector path
  std::vector<Linear> trunk_;
  Linear head_main_, head_alt_;
  // image path
  std::vector<Conv2d> convs_;  // strided blocks
  Conv2d final_main_, final_alt_;

  // forward caches
  Matrix input_;
  std::vector<Matrix> pre_, act_;  // per trunk layer
  std::vector<std::vector<FeatureMap>> conv_pre_, conv_act_;
};

// Extractor + post-fusion BatchNorm/LeakyReLU + parameterized class centers.
class Model {
 public:
  Model() = default;
  Model(const ExtractorConfig& cfg, int num_classes, Rng& rng);

  Extractor& extractor() { return extractor_; }
  BatchNorm1d& bn() { return bn_; }
  Tensor& centers() { return centers_; }
  int embed_dim() const { return extractor_.config().out_dim; }
  int num_classes() const { return centers_.shape[1]; }

  CenterBank bank() const {
    return CenterBank{centers_.as_matrix()};
  }

  // Normalize fused pooled features: LeakyReLU(BN(fused)).
  Matrix normalize(const Matrix& fused, bool training);
  // Gradient of normalize; valid after a training-mode call.
  Matrix normalize_backward(const Matrix& grad_out);

  // Inference-path embeddings for retrieval (frozen BN statistics).
  Matrix embed(const Matrix& inputs);

  std::vector<Tensor*> parameters();      // trainable only
  std::vector<Tensor*> state_tensors();   // params + buffers

 private:
  Extractor extractor_;
  BatchNorm1d bn_;
  Tensor centers_;  // d x M
  Matrix bn_out_;   // pre-activation cache for the leaky backward
};

}  // namespace ocl
