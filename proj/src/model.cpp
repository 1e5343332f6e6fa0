#include "ocl/model.hpp"

#include <cmath>

#include "ocl/kernels.hpp"

namespace ocl {

namespace {

void fill_normal(Tensor& t, double stddev, Rng& rng) {
  for (double& v : t.value) v = stddev * rng.normal();
}

Matrix maps_to_rows(const std::vector<FeatureMap>& maps) {
  const int B = static_cast<int>(maps.size());
  const int n = static_cast<int>(maps[0].data.size());
  Matrix out(B, n);
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < n; ++j) out(i, j) = maps[i].data[j];
  return out;
}

std::vector<FeatureMap> rows_to_maps(const Matrix& rows, int c, int h, int w) {
  std::vector<FeatureMap> maps(rows.rows);
  for (int i = 0; i < rows.rows; ++i) {
    FeatureMap fm(c, h, w);
    for (size_t j = 0; j < fm.data.size(); ++j) fm.data[j] = rows(i, j);
    maps[i] = std::move(fm);
  }
  return maps;
}

}  // namespace

Matrix Linear::forward(const Matrix& x) const {
  Matrix y = kern::matmul_nt(x, W.as_matrix());  // B x out
  for (int i = 0; i < y.rows; ++i)
    for (int j = 0; j < y.cols; ++j) y(i, j) += b.value[j];
  return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& grad_out) {
  Matrix gw = kern::matmul_tn(grad_out, x);  // out x in
  for (size_t i = 0; i < W.grad.size(); ++i) W.grad[i] += gw.data[i];
  for (int j = 0; j < grad_out.cols; ++j) {
    double s = 0.0;
    for (int i = 0; i < grad_out.rows; ++i) s += grad_out(i, j);
    b.grad[j] += s;
  }
  return kern::matmul(grad_out, W.as_matrix());  // B x in
}

Conv2d::Conv2d(const std::string& name, int in_channels, int out_channels,
               int stride_)
    : W(name + ".W", {out_channels, in_channels, 3, 3}),
      b(name + ".b", {out_channels}),
      in_c(in_channels),
      out_c(out_channels),
      stride(stride_) {}

std::vector<FeatureMap> Conv2d::forward(
    const std::vector<FeatureMap>& in) const {
  const int oh = out_extent(in[0].height);
  const int ow = out_extent(in[0].width);
  std::vector<FeatureMap> out(in.size());
  for (size_t i = 0; i < in.size(); ++i) {
    out[i] = FeatureMap(out_c, oh, ow);
    kern::conv2d_forward(in[i].data.data(), in_c, in[i].height, in[i].width,
                         W.value.data(), b.value.data(), out_c, ksize, stride,
                         pad, out[i].data.data(), oh, ow);
  }
  return out;
}

std::vector<FeatureMap> Conv2d::backward(
    const std::vector<FeatureMap>& in,
    const std::vector<FeatureMap>& grad_out) {
  std::vector<FeatureMap> gin(in.size());
  for (size_t i = 0; i < in.size(); ++i) {
    const FeatureMap& go = grad_out[i];
    gin[i] = FeatureMap(in_c, in[i].height, in[i].width);
    kern::conv2d_backward_input(go.data.data(), out_c, go.height, go.width,
                                W.value.data(), in_c, in[i].height,
                                in[i].width, ksize, stride, pad,
                                gin[i].data.data());
    kern::conv2d_backward_params(go.data.data(), out_c, go.height, go.width,
                                 in[i].data.data(), in_c, in[i].height,
                                 in[i].width, ksize, stride, pad,
                                 W.grad.data(), b.grad.data());
  }
  return gin;
}

Matrix BatchNorm1d::forward(const Matrix& x, bool training) {
  const int B = x.rows;
  const int d = x.cols;
  Matrix y(B, d);
  if (!training) {
    for (int j = 0; j < d; ++j) {
      double inv = 1.0 / std::sqrt(running_var.value[j] + eps);
      for (int i = 0; i < B; ++i)
        y(i, j) = gamma.value[j] * (x(i, j) - running_mean.value[j]) * inv +
                  beta.value[j];
    }
    return y;
  }

  xhat_ = Matrix(B, d);
  invstd_.resize(d);
  for (int j = 0; j < d; ++j) {
    double mean = 0.0;
    for (int i = 0; i < B; ++i) mean += x(i, j);
    mean /= B;
    double var = 0.0;
    for (int i = 0; i < B; ++i) {
      double c = x(i, j) - mean;
      var += c * c;
    }
    var /= B;
    double inv = 1.0 / std::sqrt(var + eps);
    invstd_[j] = inv;
    for (int i = 0; i < B; ++i) {
      xhat_(i, j) = (x(i, j) - mean) * inv;
      y(i, j) = gamma.value[j] * xhat_(i, j) + beta.value[j];
    }
    running_mean.value[j] = (1.0 - momentum) * running_mean.value[j] +
                            momentum * mean;
    running_var.value[j] = (1.0 - momentum) * running_var.value[j] +
                           momentum * var;
  }
  return y;
}

Matrix BatchNorm1d::backward(const Matrix& grad_out) {
  const int B = grad_out.rows;
  const int d = grad_out.cols;
  Matrix gx(B, d);
  for (int j = 0; j < d; ++j) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (int i = 0; i < B; ++i) {
      sum_g += grad_out(i, j);
      sum_gx += grad_out(i, j) * xhat_(i, j);
    }
    gamma.grad[j] += sum_gx;
    beta.grad[j] += sum_g;
    double scale = gamma.value[j] * invstd_[j];
    for (int i = 0; i < B; ++i)
      gx(i, j) = scale * (grad_out(i, j) - sum_g / B -
                          xhat_(i, j) * sum_gx / B);
  }
  return gx;
}

Matrix leaky_relu(const Matrix& x, double slope) {
  Matrix y(x.rows, x.cols);
  for (size_t i = 0; i < x.data.size(); ++i)
    y.data[i] = x.data[i] > 0.0 ? x.data[i] : slope * x.data[i];
  return y;
}

Matrix leaky_relu_backward(const Matrix& pre, const Matrix& grad_out,
                           double slope) {
  Matrix g(pre.rows, pre.cols);
  for (size_t i = 0; i < pre.data.size(); ++i)
    g.data[i] = grad_out.data[i] * (pre.data[i] > 0.0 ? 1.0 : slope);
  return g;
}

Extractor::Extractor(const ExtractorConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg_.out_dim < 1) throw InvalidConfig("extractor: out_dim must be >= 1");
  if (!cfg_.image_input) {
    if (cfg_.spatial < 1)
      throw InvalidConfig("extractor: spatial must be >= 1");
    map_h_ = map_w_ = cfg_.spatial;
    int prev = cfg_.input_dim;
    for (size_t i = 0; i < cfg_.hidden.size(); ++i) {
      trunk_.emplace_back("trunk" + std::to_string(i), prev, cfg_.hidden[i]);
      prev = cfg_.hidden[i];
    }
    const int head_out = cfg_.out_dim * cfg_.spatial * cfg_.spatial;
    head_main_ = Linear(cfg_.split_pathways ? "head_ap" : "head", prev,
                        head_out);
    if (cfg_.split_pathways) head_alt_ = Linear("head_mp", prev, head_out);

    for (Linear& l : trunk_)
      fill_normal(l.W, std::sqrt(2.0 / l.in_dim()), rng);
    fill_normal(head_main_.W, std::sqrt(2.0 / head_main_.in_dim()), rng);
    if (cfg_.split_pathways)
      fill_normal(head_alt_.W, std::sqrt(2.0 / head_alt_.in_dim()), rng);
  } else {
    int prev_c = cfg_.in_channels;
    int h = cfg_.in_h, w = cfg_.in_w;
    for (size_t i = 0; i < cfg_.conv_channels.size(); ++i) {
      convs_.emplace_back("conv" + std::to_string(i + 1), prev_c,
                          cfg_.conv_channels[i], /*stride=*/2);
      prev_c = cfg_.conv_channels[i];
      h = convs_.back().out_extent(h);
      w = convs_.back().out_extent(w);
      if (h < 1 || w < 1)
        throw InvalidConfig("extractor: image too small for the conv stack");
    }
    // Final block keeps stride 1 so no spatial information is discarded
    // before pooling.
    final_main_ = Conv2d(cfg_.split_pathways ? "final_ap" : "final", prev_c,
                         cfg_.out_dim, 1);
    if (cfg_.split_pathways)
      final_alt_ = Conv2d("final_mp", prev_c, cfg_.out_dim, 1);
    map_h_ = final_main_.out_extent(h);
    map_w_ = final_main_.out_extent(w);

    for (Conv2d& c : convs_)
      fill_normal(c.W, std::sqrt(2.0 / (c.in_c * 9.0)), rng);
    fill_normal(final_main_.W, std::sqrt(2.0 / (final_main_.in_c * 9.0)), rng);
    if (cfg_.split_pathways)
      fill_normal(final_alt_.W, std::sqrt(2.0 / (final_alt_.in_c * 9.0)), rng);
  }
}

ExtractorForward Extractor::forward(const Matrix& inputs) {
  ExtractorForward out;
  input_ = inputs;
  if (!cfg_.image_input) {
    pre_.clear();
    act_.clear();
    Matrix cur = inputs;
    for (Linear& l : trunk_) {
      pre_.push_back(l.forward(cur));
      act_.push_back(leaky_relu(pre_.back(), cfg_.leaky_slope));
      cur = act_.back();
    }
    Matrix main_rows = head_main_.forward(cur);
    out.maps_ap = rows_to_maps(main_rows, cfg_.out_dim, map_h_, map_w_);
    out.maps_mp = cfg_.split_pathways
                      ? rows_to_maps(head_alt_.forward(cur), cfg_.out_dim,
                                     map_h_, map_w_)
                      : out.maps_ap;
    return out;
  }

  conv_pre_.clear();
  conv_act_.clear();
  const int B = inputs.rows;
  std::vector<FeatureMap> cur(B);
  for (int i = 0; i < B; ++i) {
    FeatureMap fm(cfg_.in_channels, cfg_.in_h, cfg_.in_w);
    for (size_t j = 0; j < fm.data.size(); ++j) fm.data[j] = inputs(i, j);
    cur[i] = std::move(fm);
  }
  conv_act_.push_back(cur);  // input as activation 0
  for (Conv2d& c : convs_) {
    conv_pre_.push_back(c.forward(conv_act_.back()));
    std::vector<FeatureMap> act(conv_pre_.back().size());
    for (size_t i = 0; i < act.size(); ++i) {
      act[i] = conv_pre_.back()[i];
      for (double& v : act[i].data)
        v = v > 0.0 ? v : cfg_.leaky_slope * v;
    }
    conv_act_.push_back(std::move(act));
  }
  out.maps_ap = final_main_.forward(conv_act_.back());
  out.maps_mp = cfg_.split_pathways ? final_alt_.forward(conv_act_.back())
                                    : out.maps_ap;
  return out;
}

void Extractor::backward(const std::vector<FeatureMap>& grad_ap,
                         const std::vector<FeatureMap>& grad_mp) {
  if (!cfg_.image_input) {
    const Matrix& top_act = trunk_.empty() ? input_ : act_.back();
    Matrix g_main = maps_to_rows(grad_ap);
    if (!cfg_.split_pathways) {
      // shared pathway: both branches flow into the single head
      Matrix g_mp = maps_to_rows(grad_mp);
      for (size_t i = 0; i < g_main.data.size(); ++i)
        g_main.data[i] += g_mp.data[i];
    }
    Matrix gx = head_main_.backward(top_act, g_main);
    if (cfg_.split_pathways) {
      Matrix gx2 = head_alt_.backward(top_act, maps_to_rows(grad_mp));
      for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += gx2.data[i];
    }
    for (int li = static_cast<int>(trunk_.size()) - 1; li >= 0; --li) {
      Matrix gz = leaky_relu_backward(pre_[li], gx, cfg_.leaky_slope);
      const Matrix& below = li == 0 ? input_ : act_[li - 1];
      gx = trunk_[li].backward(below, gz);
    }
    return;
  }

  std::vector<FeatureMap> g_top = grad_ap;
  if (!cfg_.split_pathways)
    for (size_t i = 0; i < g_top.size(); ++i)
      for (size_t j = 0; j < g_top[i].data.size(); ++j)
        g_top[i].data[j] += grad_mp[i].data[j];
  std::vector<FeatureMap> g = final_main_.backward(conv_act_.back(), g_top);
  if (cfg_.split_pathways) {
    std::vector<FeatureMap> g2 =
        final_alt_.backward(conv_act_.back(), grad_mp);
    for (size_t i = 0; i < g.size(); ++i)
      for (size_t j = 0; j < g[i].data.size(); ++j)
        g[i].data[j] += g2[i].data[j];
  }
  for (int li = static_cast<int>(convs_.size()) - 1; li >= 0; --li) {
    // through the activation of block li
    for (size_t i = 0; i < g.size(); ++i)
      for (size_t j = 0; j < g[i].data.size(); ++j)
        g[i].data[j] *=
            conv_pre_[li][i].data[j] > 0.0 ? 1.0 : cfg_.leaky_slope;
    g = convs_[li].backward(conv_act_[li], g);
  }
}

std::vector<Tensor*> Extractor::parameters() {
  std::vector<Tensor*> out;
  for (Linear& l : trunk_) {
    out.push_back(&l.W);
    out.push_back(&l.b);
  }
  if (!cfg_.image_input) {
    out.push_back(&head_main_.W);
    out.push_back(&head_main_.b);
    if (cfg_.split_pathways) {
      out.push_back(&head_alt_.W);
      out.push_back(&head_alt_.b);
    }
  } else {
    for (Conv2d& c : convs_) {
      out.push_back(&c.W);
      out.push_back(&c.b);
    }
    out.push_back(&final_main_.W);
    out.push_back(&final_main_.b);
    if (cfg_.split_pathways) {
      out.push_back(&final_alt_.W);
      out.push_back(&final_alt_.b);
    }
  }
  return out;
}

Model::Model(const ExtractorConfig& cfg, int num_classes, Rng& rng)
    : extractor_(cfg, rng),
      bn_("bn", cfg.out_dim),
      centers_("centers.W", {cfg.out_dim, num_classes}) {
  if (num_classes < 1) throw InvalidConfig("model: num_classes must be >= 1");
  fill_normal(centers_, 1.0 / std::sqrt(static_cast<double>(cfg.out_dim)),
              rng);
}

Matrix Model::normalize(const Matrix& fused, bool training) {
  bn_out_ = bn_.forward(fused, training);
  return leaky_relu(bn_out_, extractor_.config().leaky_slope);
}

Matrix Model::normalize_backward(const Matrix& grad_out) {
  Matrix g = leaky_relu_backward(bn_out_, grad_out,
                                 extractor_.config().leaky_slope);
  return bn_.backward(g);
}

Matrix Model::embed(const Matrix& inputs) {
  ExtractorForward fwd = extractor_.forward(inputs);
  const int B = inputs.rows;
  const int d = embed_dim();
  Matrix fused(B, d);
  for (int i = 0; i < B; ++i) {
    VecD ap = avg_pool(fwd.maps_ap[i]);
    VecD mp = max_pool(fwd.maps_mp[i]).first;
    for (int c = 0; c < d; ++c) fused(i, c) = 0.5 * (ap[c] + mp[c]);
  }
  Matrix bn_out = bn_.forward(fused, /*training=*/false);
  return leaky_relu(bn_out, extractor_.config().leaky_slope);
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out = extractor_.parameters();
  out.push_back(&bn_.gamma);
  out.push_back(&bn_.beta);
  out.push_back(&centers_);
  return out;
}

std::vector<Tensor*> Model::state_tensors() {
  std::vector<Tensor*> out = parameters();
  out.push_back(&bn_.running_mean);
  out.push_back(&bn_.running_var);
  return out;
}

}  // namespace ocl
