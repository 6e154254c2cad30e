#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "vtr/corpus.hpp"
#include "vtr/costmodel.hpp"
#include "vtr/gradcheck.hpp"
#include "vtr/retrieval.hpp"
#include "vtr/runconfig.hpp"
#include "vtr/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

void write_manifest(const std::string& dir, const std::string& command,
                    std::uint64_t seed, const json& args) {
  fs::create_directories(dir);
  json manifest;
  manifest["command"] = command;
  manifest["version"] = kVersion;
  manifest["seed"] = seed;
  manifest["args"] = args;
  manifest["config_hash"] = [&]() {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(vtr::Rng::fnv1a(args.dump())));
    return std::string(buf);
  }();
  std::ofstream os(fs::path(dir) / "run_manifest.json", std::ios::trunc);
  os << manifest.dump(2) << "\n";
}

vtr::model::ModelConfig model_config_from(const vtr::data::RunConfig& cfg,
                                          int vocab_size) {
  vtr::model::ModelConfig mc;
  mc.image_size = cfg.get_int("image_size");
  mc.patch = cfg.get_int("patch");
  mc.dim = cfg.get_int("dim");
  mc.heads = static_cast<int>(cfg.get_int("heads"));
  mc.layers = static_cast<int>(cfg.get_int("layers"));
  mc.nf = cfg.get_int("nf");
  mc.text_layers = static_cast<int>(cfg.get_int("text_layers"));
  mc.max_len = cfg.get_int("max_len");
  mc.cap_layers = static_cast<int>(cfg.get_int("cap_layers"));
  mc.vocab_size = vocab_size;
  mc.use_cube = cfg.get_bool("use_cube");
  mc.use_aggregation = cfg.get_bool("use_aggregation");
  mc.use_caption = cfg.get_bool("use_caption");
  mc.tfidf_mode = cfg.get("tfidf_mode") == "mask" ? vtr::model::TfidfMode::mask
                                                  : vtr::model::TfidfMode::weight;
  mc.pooling = vtr::model::pooling_from_name(cfg.get("pooling"));
  mc.topk_kprime = static_cast<int>(cfg.get_int("topk_kprime"));
  return mc;
}

vtr::train::TrainConfig train_config_from(const vtr::data::RunConfig& cfg) {
  vtr::train::TrainConfig tc;
  tc.lambda = cfg.get_double("lambda");
  tc.k = static_cast<int>(cfg.get_int("k"));
  tc.epochs = static_cast<int>(cfg.get_int("epochs"));
  tc.batch_size = static_cast<int>(cfg.get_int("batch_size"));
  tc.base_lr = cfg.get_double("lr");
  tc.weight_decay = cfg.get_double("weight_decay");
  tc.beta1 = cfg.get_double("adam_beta1");
  tc.beta2 = cfg.get_double("adam_beta2");
  tc.eps = cfg.get_double("adam_eps");
  tc.grad_clip = cfg.get_double("grad_clip");
  tc.warmup_frac = cfg.get_double("warmup_frac");
  tc.seed = cfg.get_u64("seed");
  tc.threads = static_cast<int>(cfg.get_int("threads"));
  tc.eval_every = static_cast<int>(cfg.get_int("eval_every"));
  tc.early_stop_train_r1 = cfg.get_bool("early_stop_train_r1");
  tc.train_r1_every = static_cast<int>(cfg.get_int("train_r1_every"));
  return tc;
}

json config_as_json(const vtr::data::RunConfig& cfg) {
  json j;
  for (const auto& [k, v] : cfg.values()) j[k] = v;
  return j;
}

struct EvalTable {
  double r1_t2v, r5_t2v, r10_t2v, mnr_t2v;
  double r1_v2t, r5_v2t, r10_v2t, mnr_v2t;
  double meta;
};

EvalTable evaluate(const vtr::model::Model& m, const vtr::data::Corpus& corpus,
                   const std::vector<int>& ids, vtr::bench::Strategy strategy,
                   std::int64_t nw) {
  std::vector<const vtr::model::VideoClip*> clips;
  std::vector<vtr::model::TokenSequence> seqs;
  for (int id : ids) {
    clips.push_back(&corpus.item(id).clip);
    seqs.push_back(vtr::model::tokenize(corpus.item(id).caption, corpus.vocab,
                                        m.cfg.max_len));
  }
  vtr::bench::RetrievalIndex idx =
      vtr::bench::build_index(m, clips, seqs, strategy, nw);
  vtr::bench::RankResult rr = vtr::bench::rank(idx);

  const std::int64_t n = static_cast<std::int64_t>(ids.size());
  std::vector<int> gt(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) gt[static_cast<std::size_t>(i)] = static_cast<int>(i);

  std::vector<std::vector<int>> v2t(static_cast<std::size_t>(n));
  std::vector<double> column(static_cast<std::size_t>(n));
  for (std::int64_t v = 0; v < n; ++v) {
    for (std::int64_t t = 0; t < n; ++t)
      column[static_cast<std::size_t>(t)] = rr.sims[static_cast<std::size_t>(t * n + v)];
    v2t[static_cast<std::size_t>(v)] = vtr::bench::order_candidates(column.data(), n);
  }

  EvalTable tbl{};
  tbl.r1_t2v = vtr::bench::recall_at_k(rr.ranking, gt, 1);
  tbl.r5_t2v = vtr::bench::recall_at_k(rr.ranking, gt, 5);
  tbl.r10_t2v = vtr::bench::recall_at_k(rr.ranking, gt, 10);
  tbl.mnr_t2v = vtr::bench::mean_rank(rr.ranking, gt);
  tbl.r1_v2t = vtr::bench::recall_at_k(v2t, gt, 1);
  tbl.r5_v2t = vtr::bench::recall_at_k(v2t, gt, 5);
  tbl.r10_v2t = vtr::bench::recall_at_k(v2t, gt, 10);
  tbl.mnr_v2t = vtr::bench::mean_rank(v2t, gt);
  tbl.meta = vtr::bench::meta_sum(tbl.r1_t2v, tbl.r5_t2v, tbl.r10_t2v, tbl.r1_v2t,
                                  tbl.r5_v2t, tbl.r10_v2t);
  return tbl;
}

int cmd_gencorpus(std::uint64_t seed, int pairs, int val, std::int64_t nf,
                  std::int64_t size, int renders, bool allow_dup, bool confusable,
                  const std::string& out) {
  vtr::data::GenParams p;
  p.seed = seed;
  p.n_pairs = pairs;
  p.n_val = val;
  p.nf = nf;
  p.height = size;
  p.width = size;
  p.renders_per_pair = renders;
  p.allow_duplicate_captions = allow_dup;
  p.confusable_val = confusable;
  vtr::data::Corpus corpus = vtr::data::generate_corpus(p);
  vtr::data::write_corpus(corpus, out);
  write_manifest(out, "gencorpus", seed,
                 json{{"pairs", pairs},
                      {"val", val},
                      {"nf", nf},
                      {"size", size},
                      {"renders", renders},
                      {"allow_duplicates", allow_dup},
                      {"confusable_val", confusable},
                      {"out", out}});
  std::printf("wrote %d pairs (%zu train / %zu val) to %s\n", pairs,
              corpus.train_ids.size(), corpus.val_ids.size(), out.c_str());
  return 0;
}

int cmd_train(const std::string& config_path,
              const std::vector<std::string>& overrides) {
  vtr::data::RunConfig cfg = config_path.empty()
                                 ? vtr::data::RunConfig()
                                 : vtr::data::RunConfig::from_file(config_path);
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw vtr::ConfigError("--set expects key=value, got: " + kv);
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  const std::string corpus_dir = cfg.get("corpus_dir");
  if (corpus_dir.empty()) throw vtr::ConfigError("corpus_dir is required");
  vtr::data::Corpus corpus = vtr::data::load_corpus(corpus_dir);
  VTR_CHECK(corpus.params.nf == cfg.get_int("nf"),
            "corpus has Nf=", corpus.params.nf, " but config trains with nf=",
            cfg.get_int("nf"));

  vtr::model::Model m =
      vtr::model::init_model(model_config_from(cfg, corpus.vocab.size()),
                             cfg.get_u64("seed"));
  vtr::train::TrainConfig tc = train_config_from(cfg);
  const std::string out_dir = cfg.get("out_dir");
  write_manifest(out_dir, "train", tc.seed, config_as_json(cfg));

  vtr::train::TrainResult res = vtr::train::train(m, corpus, tc, out_dir);
  const auto& last = res.log.back();
  std::printf("trained %d steps (%zu epochs%s); final l_con=%.4f l_cap=%.4f "
              "val R@1 t2v=%.1f v2t=%.1f\n",
              res.steps, res.log.size(), res.early_stopped ? ", early stop" : "",
              last.l_con, last.l_cap, last.r1_t2v, last.r1_v2t);
  std::printf("checkpoint: %s\n", res.checkpoint_path.c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& corpus_dir,
             const std::string& split, const std::string& strategy_name,
             std::int64_t nw, const std::string& out_dir) {
  vtr::model::Model m = vtr::model::load_model(checkpoint);
  vtr::data::Corpus corpus = vtr::data::load_corpus(corpus_dir);
  std::vector<int> ids;
  if (split == "train") {
    ids = corpus.train_ids;
  } else if (split == "val") {
    ids = corpus.val_ids;
  } else if (split == "all") {
    for (const auto& item : corpus.items) ids.push_back(item.id);
  } else {
    throw vtr::ConfigError("split must be train|val|all, got: " + split);
  }
  VTR_CHECK(!ids.empty(), "selected split is empty");
  vtr::bench::Strategy strategy = vtr::bench::strategy_from_name(strategy_name);
  EvalTable tbl = evaluate(m, corpus, ids, strategy, nw);

  std::printf("%-14s %6s %6s %6s %6s\n", "direction", "R@1", "R@5", "R@10", "MnR");
  std::printf("%-14s %6.1f %6.1f %6.1f %6.2f\n", "text->video", tbl.r1_t2v,
              tbl.r5_t2v, tbl.r10_t2v, tbl.mnr_t2v);
  std::printf("%-14s %6.1f %6.1f %6.1f %6.2f\n", "video->text", tbl.r1_v2t,
              tbl.r5_v2t, tbl.r10_v2t, tbl.mnr_v2t);
  std::printf("Meta Sum: %.1f\n", tbl.meta);

  if (!out_dir.empty()) {
    write_manifest(out_dir, "eval", 0,
                   json{{"checkpoint", checkpoint},
                        {"corpus", corpus_dir},
                        {"split", split},
                        {"strategy", strategy_name},
                        {"nw", nw}});
    json j{{"split", split},
           {"strategy", strategy_name},
           {"n", ids.size()},
           {"t2v", {{"r1", tbl.r1_t2v}, {"r5", tbl.r5_t2v}, {"r10", tbl.r10_t2v}, {"mnr", tbl.mnr_t2v}}},
           {"v2t", {{"r1", tbl.r1_v2t}, {"r5", tbl.r5_v2t}, {"r10", tbl.r10_v2t}, {"mnr", tbl.mnr_v2t}}},
           {"meta_sum", tbl.meta}};
    std::ofstream os(fs::path(out_dir) / "metrics.json", std::ios::trunc);
    os << j.dump(2) << "\n";
  }
  return 0;
}

std::vector<std::int64_t> parse_int_list(const std::string& s) {
  std::vector<std::int64_t> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(std::stoll(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  VTR_CHECK(!out.empty(), "empty integer list");
  return out;
}

int cmd_bench(const std::string& strategies, const std::string& nv_list,
              const std::string& nt_list, const std::string& nf_list,
              std::int64_t nw, std::int64_t d, int trials, std::int64_t block,
              int threads, std::uint64_t seed, const std::string& out_dir) {
  std::vector<vtr::bench::Strategy> picks;
  if (strategies == "all") {
    picks = {vtr::bench::Strategy::mean_pool, vtr::bench::Strategy::attention_pool,
             vtr::bench::Strategy::topk_pool, vtr::bench::Strategy::xpool_style,
             vtr::bench::Strategy::xclip_style};
  } else {
    std::string cur;
    for (char c : strategies + ",") {
      if (c == ',') {
        if (!cur.empty()) picks.push_back(vtr::bench::strategy_from_name(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
  }
  VTR_CHECK(!picks.empty(), "no strategies selected");

  std::vector<vtr::bench::CostReport> reports;
  for (vtr::bench::Strategy s : picks) {
    for (std::int64_t nv : parse_int_list(nv_list)) {
      for (std::int64_t nt : parse_int_list(nt_list)) {
        for (std::int64_t nf : parse_int_list(nf_list)) {
          vtr::bench::CostParams p;
          p.strategy = s;
          p.nv = nv;
          p.nt = nt;
          p.nf = nf;
          p.nw = nw;
          p.d = d;
          p.trials = trials;
          p.block = block;
          p.threads = threads;
          p.seed = seed;
          vtr::bench::CostReport r = vtr::bench::cost_profile(p);
          std::printf("%-15s Nv=%-6lld Nt=%-5lld Nf=%-3lld ops=%-11lld "
                      "time=%9.2fms peak=%lld bytes\n",
                      r.strategy.c_str(), static_cast<long long>(r.nv),
                      static_cast<long long>(r.nt), static_cast<long long>(r.nf),
                      static_cast<long long>(r.analytic_ops), r.time_ms,
                      static_cast<long long>(r.peak_bytes));
          reports.push_back(std::move(r));
        }
      }
    }
  }
  fs::create_directories(out_dir);
  vtr::bench::write_reports_csv((fs::path(out_dir) / "report.csv").string(), reports);
  vtr::bench::write_reports_json((fs::path(out_dir) / "report.json").string(), reports);
  vtr::bench::write_plot_data((fs::path(out_dir) / "plot.tsv").string(), reports);
  write_manifest(out_dir, "bench", seed,
                 json{{"strategies", strategies},
                      {"Nv", nv_list},
                      {"Nt", nt_list},
                      {"Nf", nf_list},
                      {"Nw", nw},
                      {"D", d},
                      {"trials", trials},
                      {"block", block},
                      {"threads", threads}});
  std::printf("reports written to %s\n", out_dir.c_str());
  return 0;
}

int cmd_gradcheck(const std::string& config_path, int probes, std::uint64_t seed,
                  double tolerance) {
  vtr::data::RunConfig cfg = config_path.empty()
                                 ? vtr::data::RunConfig()
                                 : vtr::data::RunConfig::from_file(config_path);
  vtr::data::GenParams gp;
  gp.seed = seed;
  gp.n_pairs = 4;
  gp.n_val = 0;
  gp.nf = cfg.get_int("nf");
  gp.height = cfg.get_int("image_size");
  gp.width = cfg.get_int("image_size");
  vtr::data::Corpus corpus = vtr::data::generate_corpus(gp);

  vtr::model::Model m =
      vtr::model::init_model(model_config_from(cfg, corpus.vocab.size()), seed);
  vtr::train::TrainConfig tc = train_config_from(cfg);

  std::vector<vtr::model::TokenSequence> seqs;
  for (int id : corpus.train_ids)
    seqs.push_back(vtr::model::tokenize(corpus.item(id).caption, corpus.vocab,
                                        m.cfg.max_len));
  const vtr::model::TokenWeightTable table =
      vtr::model::tfidf_weights(seqs, corpus.vocab);

  std::vector<vtr::train::BatchItem> items;
  for (int i = 0; i < 2; ++i) {
    vtr::train::BatchItem item;
    item.clip = &corpus.item(corpus.train_ids[static_cast<std::size_t>(i)]).clip;
    item.tokens = seqs[static_cast<std::size_t>(i)];
    item.pool_stream = static_cast<std::uint64_t>(i);
    items.push_back(std::move(item));
  }
  vtr::train::GradcheckReport report =
      vtr::train::gradcheck_model(m, items, tc, table, probes);
  for (const auto& g : report.groups)
    std::printf("%-24s probes=%-3d max_rel_err=%.3e\n", g.name.c_str(), g.probes,
                g.max_rel_err);
  std::printf("checked %lld entries across %zu groups in %.1fs; max rel err %.3e\n",
              static_cast<long long>(report.entries_checked), report.groups.size(),
              report.seconds, report.max_rel_err);
  if (report.max_rel_err >= tolerance) {
    std::fprintf(stderr, "gradcheck FAILED: %.3e >= %.1e\n", report.max_rel_err,
                 tolerance);
    return 1;
  }
  std::printf("gradcheck OK (< %.1e)\n", tolerance);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"toy video-text retrieval lab: prompt-cube encoder, contrastive "
               "training, and a ranking cost benchmark"};
  app.require_subcommand(1);

  // gencorpus
  auto* gen = app.add_subcommand("gencorpus", "generate a synthetic shape-motion corpus");
  std::uint64_t g_seed = 7;
  int g_pairs = 72, g_val = 8;
  std::int64_t g_nf = 6, g_size = 32;
  int g_renders = 1;
  bool g_dup = false, g_no_confusable = false;
  std::string g_out = "corpus";
  gen->add_option("--seed", g_seed, "generator seed");
  gen->add_option("--pairs", g_pairs, "number of video/caption pairs");
  gen->add_option("--val", g_val, "held-out pair count");
  gen->add_option("--nf", g_nf, "frames per video");
  gen->add_option("--size", g_size, "frame height/width");
  gen->add_option("--renders", g_renders, "renders per pair (training augmentation)");
  gen->add_flag("--allow-duplicates", g_dup, "permit duplicate captions");
  gen->add_flag("--no-confusable-val", g_no_confusable,
                "pick the held-out split at random instead of temporal minimal pairs");
  gen->add_option("--out", g_out, "output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "train a model from a run config");
  std::string t_config;
  std::vector<std::string> t_sets;
  tr->add_option("--config", t_config, "run config file (key=value lines)");
  tr->add_option("--set", t_sets, "override a config key, e.g. --set epochs=50");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a corpus split");
  std::string e_ckpt, e_corpus, e_split = "val", e_strategy = "mean_pool",
              e_out = "";
  std::int64_t e_nw = 6;
  ev->add_option("--checkpoint", e_ckpt, "model checkpoint")->required();
  ev->add_option("--corpus", e_corpus, "corpus directory")->required();
  ev->add_option("--split", e_split, "train|val|all");
  ev->add_option("--strategy", e_strategy, "fusion strategy for ranking");
  ev->add_option("--nw", e_nw, "token vectors per text (xclip_style)");
  ev->add_option("--out", e_out, "directory for metrics.json (optional)");

  // bench
  auto* be = app.add_subcommand("bench", "profile ranking cost for fusion strategies");
  std::string b_strategy = "all", b_nv = "16384", b_nt = "512", b_nf = "12",
              b_out = "bench_out";
  std::int64_t b_nw = 10, b_d = 64, b_block = 64;
  int b_trials = 3, b_threads = 1;
  std::uint64_t b_seed = 7;
  be->add_option("--strategy", b_strategy, "strategy name, comma list, or 'all'");
  be->add_option("--Nv", b_nv, "candidate video count (comma list for sweeps)");
  be->add_option("--Nt", b_nt, "text query count (comma list)");
  be->add_option("--Nf", b_nf, "frames per video (comma list)");
  be->add_option("--Nw", b_nw, "tokens per text");
  be->add_option("--D", b_d, "embedding width");
  be->add_option("--trials", b_trials, "timing trials (median reported)");
  be->add_option("--block", b_block, "query block size");
  be->add_option("--parallel", b_threads, "worker threads (reported separately)");
  be->add_option("--seed", b_seed, "synthetic index seed");
  be->add_option("--out", b_out, "report directory");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck",
                                "finite-difference check over every parameter group");
  std::string c_config;
  int c_probes = 3;
  std::uint64_t c_seed = 7;
  double c_tol = 1e-3;
  gc->add_option("--config", c_config, "run config for model dimensions");
  gc->add_option("--probes", c_probes, "entries probed per parameter group");
  gc->add_option("--seed", c_seed, "model/data seed");
  gc->add_option("--tolerance", c_tol, "max allowed relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 2;
  }

  try {
    if (gen->parsed())
      return cmd_gencorpus(g_seed, g_pairs, g_val, g_nf, g_size, g_renders,
                           g_dup, !g_no_confusable, g_out);
    if (tr->parsed()) return cmd_train(t_config, t_sets);
    if (ev->parsed())
      return cmd_eval(e_ckpt, e_corpus, e_split, e_strategy, e_nw, e_out);
    if (be->parsed())
      return cmd_bench(b_strategy, b_nv, b_nt, b_nf, b_nw, b_d, b_trials, b_block,
                       b_threads, b_seed, b_out);
    if (gc->parsed()) return cmd_gradcheck(c_config, c_probes, c_seed, c_tol);
  } catch (const vtr::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
