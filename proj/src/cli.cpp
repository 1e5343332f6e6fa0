#include "ocl/cli.hpp"

#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "ocl/eval.hpp"
#include "ocl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ocl::cli {

namespace {

void apply_threads(const RunConfig& cfg) {
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir);
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("write failed for " + path);
}

json result_to_json(const RetrievalResult& res) {
  json j;
  j["rank1"] = res.rank_at(1);
  if (res.cmc.size() >= 5) j["rank5"] = res.rank_at(5);
  if (res.cmc.size() >= 10) j["rank10"] = res.rank_at(10);
  j["map"] = res.map;
  j["cmc"] = res.cmc;
  j["evaluated_queries"] = res.evaluated_queries;
  j["skipped_queries"] = res.skipped_queries;
  return j;
}

void export_embeddings_csv(Trainer& trainer, const std::string& path) {
  std::string out = "id,camera";
  const int d = trainer.model().embed_dim();
  for (int k = 0; k < d; ++k) out += ",f_" + std::to_string(k);
  out += "\n";
  for (Split split : {Split::Query, Split::Gallery}) {
    GallerySet set = trainer.embed_split(split);
    for (int i = 0; i < set.size(); ++i) {
      out += std::to_string(set.ids[i]) + "," +
             std::to_string(set.cameras[i]);
      for (int k = 0; k < d; ++k)
        out += "," + format_double(set.embeddings(i, k));
      out += "\n";
    }
  }
  write_text(path, out);
}

}  // namespace

int cmd_generate(const RunConfig& cfg, const std::string& out_dir) {
  Dataset ds = generate_synthetic(cfg.synthetic);
  write_dataset(ds, out_dir);
  std::cout << "generated " << ds.size() << " samples ("
            << cfg.synthetic.num_classes << " classes, dim "
            << cfg.synthetic.dim << ") -> " << out_dir << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, const std::string& dataset_dir,
              const std::string& out_dir, const std::string& resume_path) {
  apply_threads(cfg);
  cfg.validate();
  ensure_dir(out_dir);
  Dataset ds = read_dataset(dataset_dir);
  Trainer trainer(cfg, ds);
  if (!resume_path.empty()) trainer.load_checkpoint(resume_path);

  write_text((fs::path(out_dir) / "config.json").string(),
             cfg.to_json().dump(2) + "\n");

  while (trainer.completed_epochs() < cfg.epochs) {
    trainer.run_one_epoch();
    if (cfg.checkpoint_every > 0 &&
        trainer.completed_epochs() % cfg.checkpoint_every == 0)
      trainer.save_checkpoint(
          (fs::path(out_dir) /
           ("checkpoint_epoch_" + std::to_string(trainer.completed_epochs()) +
            ".json"))
              .string());
  }

  std::string trace;
  for (const EpochRecord& rec : trainer.trace()) trace += rec.to_jsonl() + "\n";
  write_text((fs::path(out_dir) / "trace.jsonl").string(), trace);
  trainer.save_checkpoint((fs::path(out_dir) / "checkpoint.json").string());

  if (!trainer.trace().empty()) {
    const EpochRecord& last = trainer.trace().back();
    std::printf("trained %d epochs, final loss_total %.6f -> %s\n",
                trainer.completed_epochs(), last.loss_total, out_dir.c_str());
  } else {
    std::printf("trained 0 epochs (initial checkpoint) -> %s\n",
                out_dir.c_str());
  }
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path,
             const std::string& dataset_dir, const std::string& out_path,
             const std::string& export_embeddings_path) {
  std::ifstream in(checkpoint_path);
  if (!in) throw IoError("cannot open checkpoint " + checkpoint_path);
  json ckpt;
  try {
    in >> ckpt;
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint: " + std::string(e.what()));
  }
  if (!ckpt.contains("config"))
    throw InvalidConfig("checkpoint carries no config section");
  RunConfig cfg = RunConfig::from_json(ckpt.at("config"));
  apply_threads(cfg);

  Dataset ds = read_dataset(dataset_dir);
  Trainer trainer(cfg, ds);
  trainer.load_checkpoint(checkpoint_path);

  RetrievalResult res = trainer.evaluate_retrieval();
  json out = result_to_json(res);
  CorrelationReport corr = trainer.center_correlation();
  out["center_mean_abs_cos"] = corr.mean_abs_offdiag;
  out["center_max_abs_cos"] = corr.max_abs_offdiag;
  write_text(out_path, out.dump(2) + "\n");

  if (!export_embeddings_path.empty())
    export_embeddings_csv(trainer, export_embeddings_path);

  std::printf("rank1 %.4f  map %.4f  (%d queries, %d skipped) -> %s\n",
              res.rank_at(1), res.map, res.evaluated_queries,
              res.skipped_queries, out_path.c_str());
  return kExitOk;
}

int cmd_gradcheck(const GradCheckOptions& opts) {
  std::vector<GradCheckCase> cases = run_gradcheck(opts);
  std::cout << gradcheck_report(cases);
  if (!gradcheck_all_pass(cases)) {
    for (const GradCheckCase& c : cases)
      if (!c.pass)
        std::cerr << "gradcheck FAILED for " << c.op << " (max rel err "
                  << c.max_rel_err << ", seed " << c.worst_seed << ")\n";
    return kExitVerification;
  }
  std::cout << "all gradients verified (tol " << opts.tol << ")\n";
  return kExitOk;
}

int cmd_ablate(const RunConfig& cfg, const std::string& dataset_dir,
               const std::string& out_dir, bool sweep_strategies,
               bool include_ccl) {
  apply_threads(cfg);
  cfg.validate();
  ensure_dir(out_dir);
  Dataset ds = read_dataset(dataset_dir);

  struct Rung {
    std::string name;
    RunConfig cfg;
  };
  std::vector<Rung> rungs;

  RunConfig base = cfg;
  base.ccl_mode = false;

  Rung baseline{"baseline", base};
  baseline.cfg.weights.alpha2 = 0.0;
  baseline.cfg.weights.alpha3 = 0.0;
  rungs.push_back(baseline);

  Rung intra{"+intra", base};
  intra.cfg.weights.alpha3 = 0.0;
  intra.cfg.mask.p = 1.0;  // full-space intra loss
  intra.cfg.mask.strategy = MaskStrategy::Bernoulli;
  rungs.push_back(intra);

  Rung masked{"+intra_masked", base};
  masked.cfg.weights.alpha3 = 0.0;
  rungs.push_back(masked);

  Rung full{"+intra_masked+inter", base};
  rungs.push_back(full);

  if (include_ccl) {
    Rung ccl{"ccl", base};
    ccl.cfg.ccl_mode = true;
    ccl.cfg.weights.alpha3 = 0.0;
    rungs.push_back(ccl);
  }
  if (sweep_strategies) {
    for (MaskStrategy s : {MaskStrategy::Bernoulli, MaskStrategy::Weighted,
                           MaskStrategy::Hard}) {
      Rung r{"full+" + to_string(s), full.cfg};
      r.cfg.mask.strategy = s;
      rungs.push_back(r);
    }
  }

  std::string csv = "rung,rank1,map,center_mean_abs_cos,compactness\n";
  for (const Rung& rung : rungs) {
    Trainer trainer(rung.cfg, ds);
    trainer.run();
    RetrievalResult res = trainer.evaluate_retrieval();
    CorrelationReport corr = trainer.center_correlation();
    CompactnessReport comp = trainer.train_compactness();
    csv += rung.name + "," + format_double(res.rank_at(1)) + "," +
           format_double(res.map) + "," +
           format_double(corr.mean_abs_offdiag) + "," +
           format_double(comp.global_mean) + "\n";
    std::printf("%-22s rank1 %.4f  map %.4f  |cos| %.4f  compact %.4f\n",
                rung.name.c_str(), res.rank_at(1), res.map,
                corr.mean_abs_offdiag, comp.global_mean);
  }
  write_text((fs::path(out_dir) / "ablation.csv").string(), csv);
  return kExitOk;
}

namespace {

// Deferred flag application: values land in cfg only for flags the user
// actually passed, after any --config file has been loaded.
struct TrainOpts {
  std::string config_path, dataset_dir, out_dir, resume;
  int epochs = 0, p = 0, k = 0, batch_size = 0, warmup_steps = 0;
  int eval_every = 0, checkpoint_every = 0, k_max = 0, embed_dim = 0;
  int spatial = 0, threads = 0;
  double lr = 0, weight_decay = 0, decay_factor = 0, warmup_frac = 0;
  double alpha1 = 0, alpha2 = 0, alpha3 = 0, lambda_orth = 0, margin = 0;
  double euclid_margin = 0, mask_p = 0, leaky_slope = 0;
  std::vector<int> decay_epochs, hidden;
  std::string mask_strategy;
  uint64_t seed = 0;
  bool split_pathways = false, ccl = false;
  bool sweep_strategies = false, include_ccl = false;
};

void add_train_options(CLI::App* sub, TrainOpts& o) {
  sub->add_option("--config", o.config_path, "JSON config file");
  sub->add_option("--dataset", o.dataset_dir, "dataset directory")
      ->required();
  sub->add_option("--out", o.out_dir, "output directory")->required();
  sub->add_option("--epochs", o.epochs, "training epochs");
  sub->add_option("--lr", o.lr, "base learning rate (default 0.001)");
  sub->add_option("--weight-decay", o.weight_decay,
                  "decoupled weight decay (default 1e-4)");
  sub->add_option("--decay-epochs", o.decay_epochs,
                  "step-decay epochs (default 80,180,300)")
      ->delimiter(',');
  sub->add_option("--decay-factor", o.decay_factor, "lr decay factor");
  sub->add_option("--warmup-steps", o.warmup_steps,
                  "warmup steps (-1: from --warmup-frac)");
  sub->add_option("--warmup-frac", o.warmup_frac,
                  "warmup as a fraction of epoch-1 steps");
  sub->add_option("--p", o.p, "identities per batch (default 16)");
  sub->add_option("--k", o.k, "samples per identity (default 4)");
  sub->add_option("--batch-size", o.batch_size, "must equal P*K");
  sub->add_option("--alpha1", o.alpha1, "triplet weight");
  sub->add_option("--alpha2", o.alpha2, "masked intra-class weight");
  sub->add_option("--alpha3", o.alpha3, "inter-class orthogonality weight");
  sub->add_option("--lambda-orth", o.lambda_orth,
                  "inner scale of the orthogonal term");
  sub->add_option("--margin", o.margin, "triplet margin");
  sub->add_option("--euclid-margin", o.euclid_margin,
                  "hinge margin of the euclidean inter loss");
  sub->add_option("--mask-p", o.mask_p, "mask keep probability");
  sub->add_option("--mask-strategy", o.mask_strategy,
                  "bernoulli|weighted|hard");
  sub->add_option("--embed-dim", o.embed_dim, "embedding dimension d");
  sub->add_option("--hidden", o.hidden, "hidden widths of the extractor")
      ->delimiter(',');
  sub->add_option("--spatial", o.spatial,
                  "spatial extent of the toy feature maps");
  sub->add_option("--leaky-slope", o.leaky_slope, "LeakyReLU slope");
  sub->add_flag("--split-pathways", o.split_pathways,
                "duplicate the final extractor block per pooling branch");
  sub->add_option("--eval-every", o.eval_every,
                  "evaluate retrieval every N epochs (0: never)");
  sub->add_option("--checkpoint-every", o.checkpoint_every,
                  "write a checkpoint every N epochs (0: final only)");
  sub->add_option("--kmax", o.k_max, "CMC depth");
  sub->add_option("--seed", o.seed, "run seed");
  sub->add_option("--threads", o.threads, "OpenMP threads (0: default)");
  sub->add_flag("--ccl", o.ccl,
                "classical center loss mode (unparameterized centers)");
}

RunConfig resolve_config(CLI::App* sub, const TrainOpts& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig()
                                        : RunConfig::load_file(o.config_path);
  auto set = [&](const char* flag, auto& dst, const auto& src) {
    if (sub->count(flag)) dst = src;
  };
  set("--epochs", cfg.epochs, o.epochs);
  set("--lr", cfg.lr, o.lr);
  set("--weight-decay", cfg.weight_decay, o.weight_decay);
  set("--decay-epochs", cfg.decay_epochs, o.decay_epochs);
  set("--decay-factor", cfg.decay_factor, o.decay_factor);
  set("--warmup-steps", cfg.warmup_steps, o.warmup_steps);
  set("--warmup-frac", cfg.warmup_frac, o.warmup_frac);
  set("--p", cfg.pk.P, o.p);
  set("--k", cfg.pk.K, o.k);
  set("--alpha1", cfg.weights.alpha1, o.alpha1);
  set("--alpha2", cfg.weights.alpha2, o.alpha2);
  set("--alpha3", cfg.weights.alpha3, o.alpha3);
  set("--lambda-orth", cfg.weights.lambda_orth, o.lambda_orth);
  set("--margin", cfg.weights.triplet_margin, o.margin);
  set("--euclid-margin", cfg.weights.euclid_margin, o.euclid_margin);
  set("--mask-p", cfg.mask.p, o.mask_p);
  set("--embed-dim", cfg.embed_dim, o.embed_dim);
  set("--hidden", cfg.hidden, o.hidden);
  set("--spatial", cfg.spatial, o.spatial);
  set("--leaky-slope", cfg.leaky_slope, o.leaky_slope);
  set("--eval-every", cfg.eval_every, o.eval_every);
  set("--checkpoint-every", cfg.checkpoint_every, o.checkpoint_every);
  set("--kmax", cfg.k_max, o.k_max);
  set("--seed", cfg.seed, o.seed);
  set("--threads", cfg.threads, o.threads);
  if (sub->count("--mask-strategy"))
    cfg.mask.strategy = mask_strategy_from_string(o.mask_strategy);
  if (sub->count("--split-pathways")) cfg.split_pathways = o.split_pathways;
  if (sub->count("--ccl")) cfg.ccl_mode = o.ccl;
  if (sub->count("--batch-size"))
    cfg.batch_size = o.batch_size;
  else if (sub->count("--p") || sub->count("--k"))
    cfg.batch_size = cfg.pk.P * cfg.pk.K;
  apply_seed_override(cfg);
  return cfg;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{
      "ocl: orthogonal center learning with subspace masking, at desk scale"};
  app.require_subcommand(1);

  // generate
  auto gen = std::make_shared<TrainOpts>();
  SyntheticSpec gen_spec;
  CLI::App* gen_sub =
      app.add_subcommand("generate", "generate a synthetic dataset");
  gen_sub->add_option("--out", gen->out_dir, "output directory")->required();
  gen_sub->add_option("--classes", gen_spec.num_classes, "identity count");
  gen_sub->add_option("--samples", gen_spec.samples_per_class,
                      "samples per identity (all splits)");
  gen_sub->add_option("--dim", gen_spec.dim, "feature dimension");
  gen_sub->add_option("--spread", gen_spec.cluster_spread,
                      "within-cluster stddev");
  gen_sub->add_option("--separation", gen_spec.separation,
                      "between-cluster scale");
  gen_sub->add_option("--train-frac", gen_spec.train_frac, "train fraction");
  gen_sub->add_option("--query-frac", gen_spec.query_frac, "query fraction");
  gen_sub->add_option("--seed", gen_spec.seed, "generation seed");

  // train
  auto tr = std::make_shared<TrainOpts>();
  CLI::App* train_sub = app.add_subcommand("train", "train a model");
  add_train_options(train_sub, *tr);
  train_sub->add_option("--resume", tr->resume,
                        "resume from a checkpoint written under this config");

  // eval
  std::string eval_ckpt, eval_dataset, eval_out, eval_export;
  CLI::App* eval_sub =
      app.add_subcommand("eval", "single-query CMC/mAP evaluation");
  eval_sub->add_option("--checkpoint", eval_ckpt, "checkpoint file")
      ->required();
  eval_sub->add_option("--dataset", eval_dataset, "dataset directory")
      ->required();
  eval_sub->add_option("--out", eval_out, "result JSON path")->required();
  eval_sub->add_option("--export-embeddings", eval_export,
                       "also write query+gallery embeddings CSV here");

  // gradcheck
  GradCheckOptions gc;
  CLI::App* gc_sub = app.add_subcommand(
      "gradcheck", "finite-difference verification of all loss gradients");
  gc_sub->add_option("--seed", gc.seed, "instance seed");
  gc_sub->add_option("--instances", gc.instances, "instances per op");
  gc_sub->add_option("--corrupt", gc.corrupt_op,
                     "test hook: corrupt this op's analytic gradient");

  // ablate
  auto ab = std::make_shared<TrainOpts>();
  CLI::App* ab_sub =
      app.add_subcommand("ablate", "train the loss-ablation ladder");
  add_train_options(ab_sub, *ab);
  ab_sub->add_flag("--sweep-strategies", ab->sweep_strategies,
                   "add one full-loss rung per mask strategy");
  ab_sub->add_flag("--include-ccl", ab->include_ccl,
                   "add a classical-center-loss rung");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen_sub->parsed()) {
      RunConfig cfg;
      cfg.synthetic = gen_spec;
      apply_seed_override(cfg);
      if (std::getenv("OCL_SEED")) cfg.synthetic.seed = cfg.seed;
      return cmd_generate(cfg, gen->out_dir);
    }
    if (train_sub->parsed())
      return cmd_train(resolve_config(train_sub, *tr), tr->dataset_dir,
                       tr->out_dir, tr->resume);
    if (eval_sub->parsed())
      return cmd_eval(eval_ckpt, eval_dataset, eval_out, eval_export);
    if (gc_sub->parsed()) return cmd_gradcheck(gc);
    if (ab_sub->parsed())
      return cmd_ablate(resolve_config(ab_sub, *ab), ab->dataset_dir,
                        ab->out_dir, ab->sweep_strategies, ab->include_ccl);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const InvalidConfig& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace ocl::cli
