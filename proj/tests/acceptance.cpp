#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>

#include "bench_oracle.hpp"
#include "vtr/costmodel.hpp"
#include "vtr/gradcheck.hpp"
#include "vtr/train.hpp"

using namespace vtr;
using namespace vtr::core;

namespace {

namespace fs = std::filesystem;

// Collects sub-checks for one acceptance criterion and prints a single
// PASS/FAIL line when it goes out of scope.
struct Criterion {
  const char* id;
  const char* name;
  bool ok = true;
  std::string detail;

  Criterion(const char* id_, const char* name_) : id(id_), name(name_) {}
  ~Criterion() {
    std::printf("[ACCEPT] %s %-22s %s%s\n", id, name, ok ? "PASS" : "FAIL",
                detail.empty() ? "" : ("  (" + detail + ")").c_str());
    std::fflush(stdout);
  }
  void expect(bool cond, const char* what) {
    if (!cond) ok = false;
    CHECK_MESSAGE(cond, id, ": ", what);
  }
  template <typename... Args>
  void note(Args&&... args) {
    if (!detail.empty()) detail += ", ";
    detail += vtr::detail::format_msg(std::forward<Args>(args)...);
  }
};

model::ModelConfig toy_config(int vocab_size) {
  model::ModelConfig cfg;  // layers=4, dim=64, heads=4, patch=8, 32x32, nf=6
  cfg.vocab_size = vocab_size;
  return cfg;
}

data::Corpus benchmark_corpus(std::uint64_t seed = 7, std::int64_t size = 32) {
  data::GenParams p;
  p.seed = seed;
  p.n_pairs = 72;
  p.n_val = 8;
  p.nf = 6;
  p.height = size;
  p.width = size;
  p.confusable_val = true;
  return data::generate_corpus(p);
}

std::vector<train::BatchItem> two_pair_batch(const data::Corpus& corpus,
                                             const model::Model& m) {
  std::vector<train::BatchItem> items;
  for (int i = 0; i < 2; ++i) {
    train::BatchItem item;
    const int id = corpus.train_ids[static_cast<std::size_t>(i)];
    item.clip = &corpus.item(id).clip;
    item.tokens = model::tokenize(corpus.item(id).caption, corpus.vocab, m.cfg.max_len);
    item.pool_stream = static_cast<std::uint64_t>(i);
    items.push_back(std::move(item));
  }
  return items;
}

model::TokenWeightTable train_table(const data::Corpus& corpus, const model::Model& m) {
  std::vector<model::TokenSequence> seqs;
  for (int id : corpus.train_ids)
    seqs.push_back(model::tokenize(corpus.item(id).caption, corpus.vocab, m.cfg.max_len));
  return model::tfidf_weights(seqs, corpus.vocab);
}

// Plain-loop retrieval R@1 oracle: encode, normalize, argmax both ways.
struct BruteForceR1 {
  double t2v = 0.0, v2t = 0.0;
  bool argmax_is_identity_t2v = true, argmax_is_identity_v2t = true;
};

BruteForceR1 brute_force_r1(const model::Model& m, const data::Corpus& corpus,
                            const std::vector<int>& ids) {
  const std::int64_t n = static_cast<std::int64_t>(ids.size());
  const std::int64_t d = m.cfg.dim;
  std::vector<double> x(static_cast<std::size_t>(n * d)), y(static_cast<std::size_t>(n * d));
  for (std::int64_t i = 0; i < n; ++i) {
    Tensor xv = model::video_repr(m, corpus.item(ids[static_cast<std::size_t>(i)]).clip, 3,
                                  false, nullptr);
    Tensor yv = model::encode_text(
        model::tokenize(corpus.item(ids[static_cast<std::size_t>(i)]).caption,
                        corpus.vocab, m.cfg.max_len),
        m.text);
    double nrm = 0.0;
    for (std::int64_t j = 0; j < d; ++j) nrm += xv.data()[j] * xv.data()[j];
    nrm = std::sqrt(nrm);
    for (std::int64_t j = 0; j < d; ++j) {
      x[static_cast<std::size_t>(i * d + j)] = xv.data()[j] / nrm;
      y[static_cast<std::size_t>(i * d + j)] = yv.data()[j];
    }
  }
  BruteForceR1 out;
  std::int64_t hits_t2v = 0, hits_v2t = 0;
  for (std::int64_t q = 0; q < n; ++q) {
    int best_v = 0, best_t = 0;
    double sv = -2.0, st = -2.0;
    for (std::int64_t c = 0; c < n; ++c) {
      double s_tv = 0.0, s_vt = 0.0;
      for (std::int64_t j = 0; j < d; ++j) {
        s_tv += y[static_cast<std::size_t>(q * d + j)] * x[static_cast<std::size_t>(c * d + j)];
        s_vt += x[static_cast<std::size_t>(q * d + j)] * y[static_cast<std::size_t>(c * d + j)];
      }
      if (s_tv > sv) {
        sv = s_tv;
        best_v = static_cast<int>(c);
      }
      if (s_vt > st) {
        st = s_vt;
        best_t = static_cast<int>(c);
      }
    }
    hits_t2v += best_v == q ? 1 : 0;
    hits_v2t += best_t == q ? 1 : 0;
    out.argmax_is_identity_t2v = out.argmax_is_identity_t2v && best_v == q;
    out.argmax_is_identity_v2t = out.argmax_is_identity_v2t && best_t == q;
  }
  out.t2v = 100.0 * static_cast<double>(hits_t2v) / static_cast<double>(n);
  out.v2t = 100.0 * static_cast<double>(hits_v2t) / static_cast<double>(n);
  return out;
}

}  // namespace

TEST_CASE("criterion 1: gradient integrity") {
  Criterion c{"C1", "gradient-integrity"};
  data::Corpus corpus = benchmark_corpus();
  model::Model m = model::init_model(toy_config(corpus.vocab.size()), 7);
  train::TrainConfig cfg;
  cfg.k = 3;
  cfg.lambda = 0.5;
  auto items = two_pair_batch(corpus, m);
  auto table = train_table(corpus, m);

  train::GradcheckReport report = train::gradcheck_model(m, items, cfg, table, 3);
  c.expect(report.max_rel_err < 1e-3, "max relative error < 1e-3");
  c.expect(report.seconds < 60.0, "runtime < 60 s on one core");
  c.expect(report.groups.size() == m.named_parameters().size(),
           "every parameter group checked");
  c.note("max_rel_err=", report.max_rel_err, ", ", report.entries_checked,
         " entries, ", report.seconds, "s");
}

TEST_CASE("criterion 2: zero-init identity") {
  Criterion c{"C2", "zero-init-identity"};
  data::Corpus corpus = benchmark_corpus();
  model::Model with_agg = model::init_model(toy_config(corpus.vocab.size()), 2024);
  model::Model no_agg = model::init_model(toy_config(corpus.vocab.size()), 2024);
  no_agg.cfg.use_aggregation = false;
  no_agg.cfg.use_caption = false;

  double worst = 0.0;
  for (int i = 0; i < 4; ++i) {
    const auto& clip = corpus.item(corpus.train_ids[static_cast<std::size_t>(i)]).clip;
    Tensor a = model::video_repr(with_agg, clip, 3, false, nullptr);
    Tensor b = model::video_repr(no_agg, clip, 3, false, nullptr);
    for (std::int64_t j = 0; j < a.size(); ++j)
      worst = std::max(worst, std::abs(a.data()[j] - b.data()[j]));
  }
  c.expect(worst < 1e-12, "untrained cube+aggregation representation equals the LN(CLS) mean-pool");
  c.note("max elementwise delta=", worst);
}

TEST_CASE("criterion 3: prompt switch mechanics") {
  Criterion c{"C3", "prompt-switch"};
  // involution and pure permutation, exact
  Rng rng(33);
  Tensor cube = Tensor::zeros({4, 4, 3});
  for (auto& v : cube.vec()) v = rng.normal();
  Tensor once = model::prompt_switch(cube);
  Tensor twice = model::prompt_switch(once);
  c.expect(twice.vec() == cube.vec(), "switch is an involution");
  auto sorted_a = cube.vec(), sorted_b = once.vec();
  std::sort(sorted_a.begin(), sorted_a.end());
  std::sort(sorted_b.begin(), sorted_b.end());
  c.expect(sorted_a == sorted_b, "switch preserves the multiset of values");

  // Nf=4 connectivity probe after 2 layers
  const std::int64_t nf = 4;
  model::EncoderWeights w = model::init_encoder(32, 8, 32, 4, 2, nf, Rng(404));
  data::GenParams gp;
  gp.seed = 11;
  gp.n_pairs = 4;
  gp.nf = nf;
  gp.n_val = 0;
  data::Corpus probe_corpus = data::generate_corpus(gp);
  const model::VideoClip& clip = probe_corpus.item(0).clip;

  for (model::EncoderMode mode :
       {model::EncoderMode::prompt_switch, model::EncoderMode::baseline}) {
    model::EncodeResult base = model::encode_video(clip, w, mode);
    bool dense = true, diagonal = true;
    for (std::int64_t i = 0; i < nf; ++i) {
      model::VideoClip bumped = clip;
      for (std::int64_t t = 0; t < clip.frame_bytes(); ++t) {
        auto& px = bumped.pixels[static_cast<std::size_t>(i * clip.frame_bytes() + t)];
        px = static_cast<std::uint8_t>((px + 64) % 256);
      }
      model::EncodeResult moved = model::encode_video(bumped, w, mode);
      for (std::int64_t j = 0; j < nf; ++j) {
        double delta = 0.0;
        for (std::int64_t dch = 0; dch < w.dim; ++dch)
          delta = std::max(delta, std::abs(base.cls.at({j, dch}) - moved.cls.at({j, dch})));
        if (delta <= 1e-10) dense = false;
        if (i != j && delta != 0.0) diagonal = false;
      }
    }
    if (mode == model::EncoderMode::prompt_switch) {
      c.expect(dense, "connectivity matrix dense after 2 prompt_switch layers");
    } else {
      c.expect(diagonal, "connectivity matrix diagonal in baseline mode");
    }
  }
}

TEST_CASE("criterion 4: overfit retrieval") {
  Criterion c{"C4", "overfit-retrieval"};
  const auto t0 = std::chrono::steady_clock::now();

  data::Corpus corpus = benchmark_corpus(7);
  model::Model m = model::init_model(toy_config(corpus.vocab.size()), 7);
  train::TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 16;
  cfg.base_lr = 2e-3;
  cfg.weight_decay = 0.01;
  cfg.k = 3;
  cfg.lambda = 0.5;
  cfg.seed = 7;
  cfg.eval_every = 25;
  cfg.early_stop_train_r1 = true;
  cfg.train_r1_every = 25;
  train::TrainResult res = vtr::train::train(m, corpus, cfg, "");

  BruteForceR1 train_r1 = brute_force_r1(m, corpus, corpus.train_ids);
  BruteForceR1 val_r1 = brute_force_r1(m, corpus, corpus.val_ids);
  const double minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;

  c.expect(train_r1.argmax_is_identity_t2v && train_r1.argmax_is_identity_v2t,
           "train R@1 = 100% both directions (64x64 argmax = identity)");
  c.expect(val_r1.t2v >= 75.0, "held-out t2v R@1 >= 75%");
  c.expect(val_r1.v2t >= 75.0, "held-out v2t R@1 >= 75%");
  c.expect(minutes <= 15.0, "total runtime <= 15 min single core");
  c.note("train=", train_r1.t2v, "/", train_r1.v2t, " val=", val_r1.t2v, "/",
         val_r1.v2t, " in ", minutes, " min, ", res.steps, " steps");
}

TEST_CASE("criterion 5: ablation trend") {
  Criterion c{"C5", "ablation-trend"};
  data::Corpus corpus = benchmark_corpus(11, 24);

  struct Stage {
    const char* name;
    bool cube, agg, cap;
  };
  const Stage stages[] = {{"baseline", false, false, false},
                          {"+switch", true, false, false},
                          {"+aggregation", true, true, false},
                          {"+caption", true, true, true}};

  auto run_stage = [&corpus](const Stage& st, std::uint64_t seed) {
    model::ModelConfig mc;
    mc.image_size = 24;
    mc.patch = 8;
    mc.dim = 48;
    mc.heads = 4;
    mc.layers = 3;
    mc.nf = 6;
    mc.text_layers = 2;
    mc.max_len = 12;
    mc.cap_layers = 3;
    mc.vocab_size = corpus.vocab.size();
    mc.use_cube = st.cube;
    mc.use_aggregation = st.agg;
    mc.use_caption = st.cap;
    model::Model m = model::init_model(mc, seed);
    train::TrainConfig cfg;
    cfg.epochs = 60;
    cfg.batch_size = 16;
    cfg.base_lr = 2e-3;
    cfg.k = 3;
    cfg.lambda = 0.5;
    cfg.seed = seed;
    cfg.eval_every = 1000000;  // final-epoch eval only
    train::TrainResult res = vtr::train::train(m, corpus, cfg, "");
    return res.log.back().r1_t2v;
  };

  double means[4] = {0, 0, 0, 0};
  for (int s = 0; s < 4; ++s) {
    std::vector<std::future<double>> futures;
    for (std::uint64_t seed = 0; seed < 5; ++seed)
      futures.push_back(std::async(std::launch::async, run_stage, stages[s],
                                   seed));
    for (auto& f : futures) means[s] += f.get() / 5.0;
  }
  for (int s = 0; s < 4; ++s) c.note(stages[s].name, "=", means[s]);
  for (int s = 1; s < 4; ++s)
    c.expect(means[s] >= means[s - 1] - 1.0,
             "mean val R@1 non-decreasing within 1 point");
}

TEST_CASE("criterion 6: complexity scaling") {
  Criterion c{"C6", "complexity-scaling"};
  const auto t0 = std::chrono::steady_clock::now();
  using bench::Strategy;

  // analytic closed forms, exact
  c.expect(bench::analytic_score_ops(Strategy::mean_pool, 16384, 512, 12, 10) ==
               8388608,
           "mean_pool count = 8,388,608");
  for (Strategy s : {Strategy::attention_pool, Strategy::topk_pool, Strategy::xpool_style})
    c.expect(bench::analytic_score_ops(s, 16384, 512, 12, 10) == 8388608ll * 12,
             "frame-level count = mean x Nf");
  c.expect(bench::analytic_score_ops(Strategy::xclip_style, 16384, 512, 12, 10) ==
               8388608ll * 12 * 10,
           "xclip count = mean x Nf x Nw");

  // mean_pool wall time independent of Nf
  std::vector<double> nf_values{6, 12, 24, 48};
  std::vector<double> times;
  for (double nf : nf_values) {
    bench::CostParams p;
    p.strategy = Strategy::mean_pool;
    p.nf = static_cast<std::int64_t>(nf);
    p.trials = 3;
    times.push_back(bench::cost_profile(p).time_ms);
  }
  double mean_nf = 0.0, mean_t = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    mean_nf += nf_values[i] / times.size();
    mean_t += times[i] / times.size();
  }
  double cov = 0.0, var = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    cov += (nf_values[i] - mean_nf) * (times[i] - mean_t);
    var += (nf_values[i] - mean_nf) * (nf_values[i] - mean_nf);
  }
  const double slope = cov / var;
  const double swing = std::abs(slope) * (48.0 - 6.0);
  c.expect(swing <= 0.5 * mean_t,
           "mean_pool time slope over Nf indistinguishable from zero");
  c.note("slope swing=", swing, "ms vs mean=", mean_t, "ms");

  // peak transient allocation ordering at the headline sizes
  std::int64_t peaks[5];
  int i = 0;
  for (Strategy s : {Strategy::mean_pool, Strategy::attention_pool,
                     Strategy::topk_pool, Strategy::xpool_style,
                     Strategy::xclip_style}) {
    bench::CostParams p;
    p.strategy = s;
    p.trials = 1;
    peaks[i++] = bench::cost_profile(p).peak_bytes;
  }
  c.expect(peaks[0] < peaks[1], "mean_pool < attention_pool");
  c.expect(peaks[1] <= peaks[2], "attention_pool <= topk_pool");
  c.expect(peaks[2] < peaks[3], "topk_pool < xpool_style");
  c.expect(peaks[3] < peaks[4], "xpool_style < xclip_style");
  c.note("peaks MB: ", peaks[0] / 1048576, " < ", peaks[1] / 1048576, " <= ",
         peaks[2] / 1048576, " < ", peaks[3] / 1048576, " < ", peaks[4] / 1048576);

  const double minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  c.expect(minutes < 5.0, "bench sweep completes in < 5 min");
  c.note(minutes, " min");
}

TEST_CASE("criterion 7: ranking correctness") {
  Criterion c{"C7", "ranking-correctness"};
  Rng seeds(20260811);
  int instances = 0;
  double worst = 0.0;
  bool rankings_match = true;
  for (int trial = 0; trial < 100; ++trial) {
    const std::int64_t nv = 2 + static_cast<std::int64_t>(seeds.below(7));
    const std::int64_t nt = 2 + static_cast<std::int64_t>(seeds.below(7));
    const std::int64_t nf = 2 + static_cast<std::int64_t>(seeds.below(5));
    const std::int64_t nw = 2 + static_cast<std::int64_t>(seeds.below(5));
    const int kprime = static_cast<int>(1 + seeds.below(static_cast<std::uint64_t>(nf)));
    for (bench::Strategy s :
         {bench::Strategy::mean_pool, bench::Strategy::attention_pool,
          bench::Strategy::topk_pool, bench::Strategy::xpool_style,
          bench::Strategy::xclip_style}) {
      bench::RetrievalIndex idx =
          bench::synthetic_index(s, nv, nt, nf, nw, 8, seeds.next_u64(), kprime);
      bench::RankParams rp;
      rp.block = 3;
      bench::RankResult got = bench::rank(idx, rp);
      std::vector<double> want = bench_oracle::oracle_sims(idx);
      for (std::size_t j = 0; j < want.size(); ++j)
        worst = std::max(worst, std::abs(got.sims[j] - want[j]));
      for (std::int64_t q = 0; q < nt; ++q)
        rankings_match = rankings_match &&
                         got.ranking[static_cast<std::size_t>(q)] ==
                             bench::order_candidates(want.data() + q * nv, nv);
    }
    ++instances;
  }
  c.expect(worst < 1e-9, "similarities match the oracle within 1e-9");
  c.expect(rankings_match, "rankings identical under the deterministic tie-break");
  c.note(instances, " instances x 5 strategies, max |delta|=", worst);
}

TEST_CASE("criterion 8: metric correctness") {
  Criterion c{"C8", "metric-correctness"};
  Rng rng(4242);
  // random instances vs a naive metric oracle
  for (int trial = 0; trial < 20; ++trial) {
    const std::int64_t n = 3 + static_cast<std::int64_t>(rng.below(6));
    std::vector<double> sims(static_cast<std::size_t>(n * n));
    for (auto& s : sims) s = rng.normal();
    std::vector<std::vector<int>> ranking(static_cast<std::size_t>(n));
    for (std::int64_t q = 0; q < n; ++q)
      ranking[static_cast<std::size_t>(q)] =
          bench::order_candidates(sims.data() + q * n, n);
    std::vector<int> gt(static_cast<std::size_t>(n));
    for (std::int64_t q = 0; q < n; ++q) gt[static_cast<std::size_t>(q)] = static_cast<int>(q);

    for (int k : {1, 3}) {
      std::int64_t hits = 0;
      double mnr = 0.0;
      for (std::int64_t q = 0; q < n; ++q) {
        int better = 0;
        const double own = sims[static_cast<std::size_t>(q * n + q)];
        for (std::int64_t v = 0; v < n; ++v) {
          const double s = sims[static_cast<std::size_t>(q * n + v)];
          if (s > own || (s == own && v < q)) ++better;
        }
        hits += better < k ? 1 : 0;
        mnr += static_cast<double>(better + 1) / static_cast<double>(n);
      }
      const double want_recall = 100.0 * static_cast<double>(hits) / static_cast<double>(n);
      c.expect(std::abs(bench::recall_at_k(ranking, gt, k) - want_recall) < 1e-12,
               "recall_at_k matches oracle");
      if (k == 1)
        c.expect(std::abs(bench::mean_rank(ranking, gt) - mnr) < 1e-12,
                 "mean_rank matches oracle");
    }
  }
  const double meta = bench::meta_sum(46.1, 72.8, 81.8, 44.8, 73.7, 82.4);
  c.expect(std::abs(meta - 401.6) < 1e-9, "meta_sum reproduces 401.6");
  c.note("meta_sum(46.1,72.8,81.8,44.8,73.7,82.4)=", meta);
}

TEST_CASE("criterion 9: causality suite") {
  Criterion c{"C9", "causality"};
  model::Vocabulary vocab = model::Vocabulary::from_words(
      {"a", "red", "green", "blue", "square", "circle", "moves", "left", "right"});

  // text tower: PAD after EOS has zero influence
  model::TextEncoderWeights tw = model::init_text_encoder(vocab.size(), 32, 4, 2, 12, Rng(91));
  model::TokenSequence seq = model::tokenize("a red square moves left", vocab, 12);
  model::TokenSequence padded = seq;
  padded.ids.push_back(model::Vocabulary::kPad);
  padded.ids.push_back(model::Vocabulary::kPad);
  Tensor y0 = model::encode_text(seq, tw);
  Tensor y1 = model::encode_text(padded, tw);
  double pad_delta = 0.0;
  for (std::int64_t j = 0; j < y0.size(); ++j)
    pad_delta = std::max(pad_delta, std::abs(y0.data()[j] - y1.data()[j]));
  c.expect(pad_delta < 1e-12, "text: PAD after EOS has no influence");

  // caption head: perturbing a later token leaves earlier logits unchanged
  std::vector<model::TokenSequence> corpus_seqs = {
      model::tokenize("a red square moves left", vocab, 12),
      model::tokenize("a green circle moves right", vocab, 12)};
  model::TokenWeightTable table = model::tfidf_weights(corpus_seqs, vocab);
  double cap_delta = 0.0;
  for (int layers : {1, 2, 3}) {
    model::CaptionHeadWeights head =
        model::init_caption_head(vocab.size(), 32, 4, layers, 12, Rng(92 + static_cast<std::uint64_t>(layers)));
    Rng prng(93);
    Tensor prompts = Tensor::zeros({6, 32});
    for (auto& v : prompts.vec()) v = prng.normal();
    model::TokenSequence base = corpus_seqs[0];
    model::TokenSequence bumped = base;
    bumped.ids[4] = vocab.id("circle");  // position 4 perturbed
    Tensor la, lb;
    model::caption_loss(base, prompts, head, table, model::TfidfMode::weight, &la);
    model::caption_loss(bumped, prompts, head, table, model::TfidfMode::weight, &lb);
    for (std::int64_t pos = 0; pos < 4; ++pos)
      for (std::int64_t j = 0; j < la.extent(1); ++j)
        cap_delta = std::max(cap_delta, std::abs(la.at({pos, j}) - lb.at({pos, j})));
  }
  c.expect(cap_delta < 1e-12, "caption: future tokens cannot move earlier logits (M=1,2,3)");
  c.note("pad_delta=", pad_delta, " cap_delta=", cap_delta);
}

TEST_CASE("criterion 10: determinism") {
  Criterion c{"C10", "determinism"};
  const fs::path base = fs::temp_directory_path() / "vtr_accept_determinism";
  fs::remove_all(base);

  auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)),
                       std::istreambuf_iterator<char>());
  };

  // corpus files byte-for-byte
  data::GenParams gp;
  gp.seed = 101;
  gp.n_pairs = 8;
  gp.n_val = 2;
  gp.nf = 2;
  data::write_corpus(data::generate_corpus(gp), (base / "corpus_a").string());
  data::write_corpus(data::generate_corpus(gp), (base / "corpus_b").string());
  c.expect(slurp(base / "corpus_a" / "manifest.json") ==
               slurp(base / "corpus_b" / "manifest.json"),
           "corpus manifests byte-identical");
  c.expect(slurp(base / "corpus_a" / "videos" / "0003.vid") ==
               slurp(base / "corpus_b" / "videos" / "0003.vid"),
           "video files byte-identical");

  // training outputs byte-for-byte
  auto run_train = [&](const char* tag) {
    data::GenParams p;
    p.seed = 102;
    p.n_pairs = 6;
    p.n_val = 2;
    p.nf = 2;
    data::Corpus corpus = data::generate_corpus(p);
    model::ModelConfig mc;
    mc.image_size = 32;
    mc.patch = 16;
    mc.dim = 16;
    mc.heads = 2;
    mc.layers = 2;
    mc.nf = 2;
    mc.text_layers = 1;
    mc.cap_layers = 1;
    mc.vocab_size = corpus.vocab.size();
    model::Model m = model::init_model(mc, 5);
    train::TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 2;
    cfg.k = 1;
    vtr::train::train(m, corpus, cfg, (base / tag).string());
  };
  run_train("train_a");
  run_train("train_b");
  c.expect(slurp(base / "train_a" / "metrics.jsonl") ==
               slurp(base / "train_b" / "metrics.jsonl"),
           "loss curves and metrics byte-identical");
  c.expect(slurp(base / "train_a" / "checkpoint_final.ckpt") ==
               slurp(base / "train_b" / "checkpoint_final.ckpt"),
           "checkpoints byte-identical");
  c.expect(!slurp(base / "train_a" / "metrics.jsonl").empty(), "metrics written");

  // bench reports: every deterministic field identical across runs (wall
  // time is physically nondeterministic and excluded)
  bench::CostParams p;
  p.strategy = bench::Strategy::attention_pool;
  p.nv = 128;
  p.nt = 32;
  p.nf = 4;
  p.d = 16;
  p.trials = 1;
  p.block = 8;
  bench::CostReport ra = bench::cost_profile(p);
  bench::CostReport rb = bench::cost_profile(p);
  ra.time_ms = rb.time_ms = 0.0;
  c.expect(ra.same_values(rb), "bench reports identical up to wall time");

  fs::remove_all(base);
}
