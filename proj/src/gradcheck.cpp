#include "ocl/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>

#include "ocl/kernels.hpp"
#include "ocl/losses.hpp"
#include "ocl/masking.hpp"
#include "ocl/pooling.hpp"

namespace ocl {

namespace {

constexpr double kSafetyGap = 1e-3;

struct Instance {
  EmbeddingBatch batch;
  CenterBank bank;
  SubspaceMask mask;
  std::vector<int> classes;
};

Instance draw_instance(Rng& rng) {
  Instance in;
  const int c = 2 + static_cast<int>(rng.uniform_int(3));  // 2..4 classes
  const int B = 2 * c;                                     // 4..8 samples
  const int d = 3 + static_cast<int>(rng.uniform_int(14)); // 3..16
  const int M = c + static_cast<int>(rng.uniform_int(8 - c + 1));  // c..8

  in.batch.features = Matrix(B, d);
  for (double& v : in.batch.features.data) v = rng.normal();
  in.batch.labels.resize(B);
  for (int i = 0; i < B; ++i) in.batch.labels[i] = i % c;

  in.bank.W = Matrix(d, M);
  for (double& v : in.bank.W.data) v = rng.normal();

  in.mask.bits.resize(d);
  for (int k = 0; k < d; ++k) in.mask.bits[k] = rng.bernoulli(0.5) ? 1 : 0;

  in.classes = batch_class_set(in.batch);
  return in;
}

// The mining argmax/argmin and the hinge must clear the finite-difference
// step by a wide margin, otherwise the perturbed evaluation crosses a kink.
bool triplet_fd_safe(const EmbeddingBatch& batch, double margin) {
  const int B = batch.size();
  Matrix d2(B, B);
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < B; ++j) {
      double s = 0.0;
      for (int k = 0; k < batch.dim(); ++k) {
        double diff = batch.features(i, k) - batch.features(j, k);
        s += diff * diff;
      }
      d2(i, j) = s;
    }
  for (int a = 0; a < B; ++a) {
    VecD pos, neg;
    for (int j = 0; j < B; ++j) {
      if (j == a) continue;
      double dist = std::sqrt(d2(a, j));
      if (batch.labels[j] == batch.labels[a])
        pos.push_back(dist);
      else
        neg.push_back(dist);
    }
    if (pos.empty() || neg.empty()) continue;
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    double hp = pos.back();
    double hn = neg.front();
    if (hp < kSafetyGap || hn < kSafetyGap) return false;
    if (pos.size() >= 2 && hp - pos[pos.size() - 2] < kSafetyGap) return false;
    if (neg.size() >= 2 && neg[1] - hn < kSafetyGap) return false;
    if (std::abs(margin + hp - hn) < kSafetyGap) return false;
  }
  return true;
}

bool inter_max_fd_safe(const CenterBank& bank, const std::vector<int>& cls) {
  const int k = static_cast<int>(cls.size());
  Matrix chat(bank.dim(), k);
  for (int j = 0; j < k; ++j) {
    VecD unit = kern::l2_normalize(bank.W.col_copy(cls[j]));
    for (int r = 0; r < bank.dim(); ++r) chat(r, j) = unit[r];
  }
  // unordered pairs only: the (i,j)/(j,i) twins move together under any
  // perturbation, so they are not a tie for FD purposes
  VecD entries;
  for (int i = 0; i < k; ++i)
    for (int j = i; j < k; ++j) {
      double s = 0.0;
      for (int r = 0; r < bank.dim(); ++r) s += chat(r, i) * chat(r, j);
      if (i == j) s -= 1.0;
      entries.push_back(std::abs(s));
    }
  std::sort(entries.begin(), entries.end());
  double top = entries.back();
  if (top < kSafetyGap) return false;
  if (entries.size() >= 2 && top - entries[entries.size() - 2] < kSafetyGap)
    return false;
  return true;
}

bool euclid_fd_safe(const EmbeddingBatch& batch, const CenterBank& bank,
                    double m) {
  for (int i = 0; i < batch.size(); ++i)
    for (int j = 0; j < batch.size(); ++j) {
      if (i == j || batch.labels[i] == batch.labels[j]) continue;
      double s = 0.0;
      for (int r = 0; r < bank.dim(); ++r) {
        double diff =
            bank.W(r, batch.labels[i]) - bank.W(r, batch.labels[j]);
        s += diff * diff;
      }
      double dist = std::sqrt(s);
      if (dist < kSafetyGap || std::abs(m - dist) < kSafetyGap) return false;
    }
  return true;
}

bool maxpool_fd_safe(const FeatureMap& fm) {
  for (int c = 0; c < fm.channels; ++c) {
    const double* p = fm.data.data() + static_cast<size_t>(c) * fm.spatial();
    double top = -1e300, second = -1e300;
    for (int t = 0; t < fm.spatial(); ++t) {
      if (p[t] > top) {
        second = top;
        top = p[t];
      } else if (p[t] > second) {
        second = p[t];
      }
    }
    if (fm.spatial() >= 2 && top - second < kSafetyGap) return false;
  }
  return true;
}

double relative_err(double a, double fd) {
  return std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
}

double fd_max_err(VecD& x, const std::function<double()>& f,
                  const VecD& analytic, double h) {
  double worst = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f();
    x[i] = orig - h;
    const double fm = f();
    x[i] = orig;
    worst = std::max(worst, relative_err(analytic[i], (fp - fm) / (2.0 * h)));
  }
  return worst;
}

struct OpCheck {
  std::string name;
  // Draws one instance (rng already positioned) and returns the max
  // relative FD error over its input coordinates.
  std::function<double(Rng&, const GradCheckOptions&, bool corrupt)> run;
};

Instance draw_safe(Rng& rng, const std::function<bool(const Instance&)>& ok) {
  for (int tries = 0; tries < 200; ++tries) {
    Instance in = draw_instance(rng);
    if (ok(in)) return in;
  }
  throw InvalidInput("gradcheck: could not draw an FD-safe instance");
}

VecD maybe_corrupt(VecD g, bool corrupt) {
  if (corrupt && !g.empty()) g[0] += 0.01;
  return g;
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck(const GradCheckOptions& opts) {
  std::vector<OpCheck> ops;

  auto features_check = [](auto loss_fn) {
    return [loss_fn](Rng& rng, const GradCheckOptions& o, bool corrupt) {
      Instance in = draw_safe(rng, [&](const Instance& i) {
        return triplet_fd_safe(i.batch, 0.3);
      });
      LossReport rep = loss_fn(in);
      VecD analytic = maybe_corrupt(rep.grad_features->data, corrupt);
      return fd_max_err(
          in.batch.features.data, [&] { return loss_fn(in).value; }, analytic,
          o.h);
    };
  };
  auto centers_check = [](auto loss_fn, auto safe) {
    return [loss_fn, safe](Rng& rng, const GradCheckOptions& o, bool corrupt) {
      Instance in = draw_safe(rng, safe);
      LossReport rep = loss_fn(in);
      VecD analytic = maybe_corrupt(rep.grad_centers->data, corrupt);
      return fd_max_err(
          in.bank.W.data, [&] { return loss_fn(in).value; }, analytic, o.h);
    };
  };
  auto always_safe = [](const Instance&) { return true; };

  auto softmax_fn = [](const Instance& in) {
    return softmax_ce(in.batch, in.bank);
  };
  auto triplet_fn = [](const Instance& in) {
    return triplet_batch_hard(in.batch, 0.3);
  };
  auto intra_fn = [](const Instance& in) { return l_intra(in.batch, in.bank); };
  auto intra_masked_fn = [](const Instance& in) {
    return l_intra_masked(in.batch, in.bank, in.mask);
  };
  auto orth_fn = [](const Instance& in) {
    return l_inter_orth(in.bank, in.classes, 0.5);
  };
  auto inter_max_fn = [](const Instance& in) {
    return l_inter_max(in.bank, in.classes);
  };
  auto euclid_fn = [](const Instance& in) {
    return l_inter_euclid(in.batch, in.bank, 1.0);
  };
  LossWeights total_w;
  total_w.alpha1 = 0.7;
  total_w.alpha2 = 0.3;
  total_w.alpha3 = 0.2;
  auto total_fn = [total_w](const Instance& in) {
    return total_loss(in.batch, in.bank, total_w, in.mask, in.classes);
  };

  auto triplet_safe = [](const Instance& i) {
    return triplet_fd_safe(i.batch, 0.3);
  };
  auto inter_max_safe = [](const Instance& i) {
    return inter_max_fd_safe(i.bank, i.classes);
  };
  auto euclid_safe = [](const Instance& i) {
    return euclid_fd_safe(i.batch, i.bank, 1.0);
  };

  ops.push_back({"softmax_ce/features", features_check(softmax_fn)});
  ops.push_back({"softmax_ce/centers",
                 centers_check(softmax_fn, always_safe)});
  ops.push_back({"triplet_batch_hard/features", features_check(triplet_fn)});
  ops.push_back({"l_intra/features", features_check(intra_fn)});
  ops.push_back({"l_intra/centers", centers_check(intra_fn, always_safe)});
  ops.push_back(
      {"l_intra_masked/features", features_check(intra_masked_fn)});
  ops.push_back(
      {"l_intra_masked/centers", centers_check(intra_masked_fn, always_safe)});
  ops.push_back({"l_inter_orth/centers", centers_check(orth_fn, always_safe)});
  ops.push_back(
      {"l_inter_max/centers", centers_check(inter_max_fn, inter_max_safe)});
  ops.push_back(
      {"l_inter_euclid/centers", centers_check(euclid_fn, euclid_safe)});
  ops.push_back({"total_loss/features", features_check(total_fn)});
  ops.push_back({"total_loss/centers", centers_check(total_fn, triplet_safe)});

  // pooling head
  ops.push_back({"avg_pool/map",
                 [](Rng& rng, const GradCheckOptions& o, bool corrupt) {
                   FeatureMap fm(4, 3, 3);
                   for (double& v : fm.data) v = rng.normal();
                   VecD probe(4);
                   for (double& v : probe) v = rng.normal();
                   auto f = [&] {
                     VecD p = avg_pool(fm);
                     double s = 0.0;
                     for (int c = 0; c < 4; ++c) s += p[c] * probe[c];
                     return s;
                   };
                   VecD analytic =
                       maybe_corrupt(avg_pool_backward(fm, probe).data,
                                     corrupt);
                   return fd_max_err(fm.data, f, analytic, o.h);
                 }});
  ops.push_back({"max_pool/map",
                 [](Rng& rng, const GradCheckOptions& o, bool corrupt) {
                   FeatureMap fm(4, 3, 3);
                   do {
                     for (double& v : fm.data) v = rng.normal();
                   } while (!maxpool_fd_safe(fm));
                   VecD probe(4);
                   for (double& v : probe) v = rng.normal();
                   auto f = [&] {
                     auto [p, arg] = max_pool(fm);
                     double s = 0.0;
                     for (int c = 0; c < 4; ++c) s += p[c] * probe[c];
                     return s;
                   };
                   auto [p, arg] = max_pool(fm);
                   VecD analytic = maybe_corrupt(
                       max_pool_backward(fm, arg, probe).data, corrupt);
                   return fd_max_err(fm.data, f, analytic, o.h);
                 }});
  ops.push_back({"fuse/branches",
                 [](Rng& rng, const GradCheckOptions& o, bool corrupt) {
                   const int d = 6;
                   PooledPair pair;
                   pair.v_ap.resize(d);
                   pair.v_mp.resize(d);
                   for (double& v : pair.v_ap) v = rng.normal();
                   for (double& v : pair.v_mp) v = rng.normal();
                   VecD probe(d);
                   for (double& v : probe) v = rng.normal();
                   auto f = [&] {
                     VecD fused = fuse(pair);
                     double s = 0.0;
                     for (int c = 0; c < d; ++c) s += fused[c] * probe[c];
                     return s;
                   };
                   auto [ga, gm] = fuse_backward(probe);
                   VecD analytic = ga;
                   analytic.insert(analytic.end(), gm.begin(), gm.end());
                   analytic = maybe_corrupt(std::move(analytic), corrupt);
                   VecD flat = pair.v_ap;
                   flat.insert(flat.end(), pair.v_mp.begin(),
                               pair.v_mp.end());
                   double worst = 0.0;
                   for (size_t i = 0; i < flat.size(); ++i) {
                     double& slot = i < static_cast<size_t>(d)
                                        ? pair.v_ap[i]
                                        : pair.v_mp[i - d];
                     const double orig = slot;
                     slot = orig + o.h;
                     double fp = f();
                     slot = orig - o.h;
                     double fm2 = f();
                     slot = orig;
                     worst = std::max(
                         worst,
                         relative_err(analytic[i], (fp - fm2) / (2.0 * o.h)));
                   }
                   return worst;
                 }});
  ops.push_back({"head/maps",
                 [](Rng& rng, const GradCheckOptions& o, bool corrupt) {
                   const int B = 6, d = 4, s = 3;
                   std::vector<int> labels = {0, 0, 1, 1, 2, 2};
                   std::vector<FeatureMap> maps;
                   Matrix probe(B, d);
                   while (true) {
                     maps.assign(B, FeatureMap(d, s, s));
                     for (auto& fm : maps)
                       for (double& v : fm.data) v = rng.normal();
                     bool ok = true;
                     for (const auto& fm : maps)
                       if (!maxpool_fd_safe(fm)) ok = false;
                     if (!ok) continue;
                     HeadOutput ho = head_pool(maps, maps);
                     if (triplet_fd_safe({ho.v_ap, labels}, 0.3) &&
                         triplet_fd_safe({ho.v_mp, labels}, 0.3))
                       break;
                   }
                   for (double& v : probe.data) v = rng.normal();

                   auto f = [&] {
                     HeadOutput ho = head_losses(maps, maps, labels, 0.3);
                     double sum =
                         ho.triplet_ap.value + ho.triplet_mp.value;
                     for (int i = 0; i < B; ++i)
                       for (int c = 0; c < d; ++c)
                         sum += ho.fused(i, c) * probe(i, c);
                     return sum;
                   };

                   HeadOutput ho = head_losses(maps, maps, labels, 0.3);
                   HeadGrads hg = head_backward(ho, maps, maps, probe, 1.0);
                   double worst = 0.0;
                   for (int i = 0; i < B; ++i) {
                     VecD analytic(hg.ap[i].data);
                     for (size_t t = 0; t < analytic.size(); ++t)
                       analytic[t] += hg.mp[i].data[t];
                     analytic = maybe_corrupt(std::move(analytic),
                                              corrupt && i == 0);
                     worst = std::max(
                         worst, fd_max_err(maps[i].data, f, analytic, o.h));
                   }
                   return worst;
                 }});

  std::vector<GradCheckCase> cases;
  for (const OpCheck& op : ops) {
    GradCheckCase c;
    c.op = op.name;
    c.instances = opts.instances;
    const bool corrupt = opts.corrupt_op == op.name;
    for (int t = 0; t < opts.instances; ++t) {
      const uint64_t inst_seed = opts.seed * 1000003ULL + t;
      Rng rng(inst_seed);
      double err = op.run(rng, opts, corrupt);
      if (err > c.max_rel_err) {
        c.max_rel_err = err;
        c.worst_seed = inst_seed;
      }
    }
    c.pass = c.max_rel_err < opts.tol;
    cases.push_back(c);
  }
  return cases;
}

bool gradcheck_all_pass(const std::vector<GradCheckCase>& cases) {
  for (const GradCheckCase& c : cases)
    if (!c.pass) return false;
  return true;
}

std::string gradcheck_report(const std::vector<GradCheckCase>& cases) {
  std::string out =
      "op                            max_rel_err  instances  status\n";
  char line[160];
  for (const GradCheckCase& c : cases) {
    std::snprintf(line, sizeof(line), "%-29s %-12.3e %-10d %s\n",
                  c.op.c_str(), c.max_rel_err, c.instances,
                  c.pass ? "ok" : "FAIL");
    out += line;
    if (!c.pass) {
      std::snprintf(line, sizeof(line), "  worst instance seed: %llu\n",
                    static_cast<unsigned long long>(c.worst_seed));
      out += line;
    }
  }
  return out;
}

}  // namespace ocl
