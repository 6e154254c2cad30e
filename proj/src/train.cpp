#include "vtr/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>

#include <json.hpp>

#include "vtr/retrieval.hpp"

namespace vtr::train {

using namespace vtr::core;
using model::Model;
using model::PoolingKind;

namespace {

struct ItemForward {
  Tensor feat;  // [D] pooled (mean) or [Nf,D] prompts (cross-modal)
  Tensor y;     // [D]
  Tensor cap;   // scalar, defined only when the caption loss is active
  std::unique_ptr<Tape> tape;
};

bool caption_active(const Model& m, const TrainConfig& cfg) {
  return m.cfg.use_caption && cfg.lambda != 0.0;
}

ItemForward forward_item(const Model& m, const BatchItem& item,
                         const TrainConfig& cfg, const model::TokenWeightTable& table,
                         bool with_tape) {
  ItemForward f;
  std::optional<Tape::Scope> scope;
  if (with_tape) {
    f.tape = std::make_unique<Tape>();
    scope.emplace(*f.tape);
  }
  VTR_CHECK(item.clip->nf == m.cfg.nf, "training clips must have ", m.cfg.nf,
            " frames");
  Tensor prompts = model::frame_prompts(m, *item.clip);
  if (m.cfg.pooling == PoolingKind::mean) {
    Rng pool_rng = Rng(cfg.seed).child("pool", item.pool_stream);
    f.feat = model::pool_video(prompts, cfg.k, true, pool_rng);
  } else {
    f.feat = prompts;
  }
  f.y = model::encode_text(item.tokens, m.text);
  if (caption_active(m, cfg))
    f.cap = model::caption_loss(item.tokens, prompts, m.caption, table,
                                m.cfg.tfidf_mode)
                .loss;
  return f;
}

struct JointResult {
  double l_con = 0.0;
  // per-item cotangents, filled only on the gradient path
  std::vector<std::vector<double>> feat_cot;
  std::vector<std::vector<double>> y_cot;
};

JointResult joint_contrastive(Model& m, const std::vector<ItemForward>& fwd,
                              bool with_grad) {
  const std::int64_t b = static_cast<std::int64_t>(fwd.size());
  const std::int64_t d = m.cfg.dim;
  const bool cross_modal = m.cfg.pooling != PoolingKind::mean;
  Shape fshape = cross_modal ? Shape{b, m.cfg.nf, d} : Shape{b, d};

  std::vector<double> fdata;
  fdata.reserve(static_cast<std::size_t>(numel(fshape)));
  std::vector<double> ydata;
  ydata.reserve(static_cast<std::size_t>(b * d));
  for (const auto& f : fwd) {
    fdata.insert(fdata.end(), f.feat.vec().begin(), f.feat.vec().end());
    ydata.insert(ydata.end(), f.y.vec().begin(), f.y.vec().end());
  }
  Tensor F = Tensor::from_data(fshape, std::move(fdata), with_grad);
  Tensor Y = Tensor::from_data({b, d}, std::move(ydata), with_grad);

  JointResult res;
  auto compute = [&]() {
    Tensor yn = l2_normalize_rows(Y);
    Tensor sims = fusion_similarity(F, yn, m.cfg.pooling, m.xpool, m.cfg.topk_kprime);
    return contrastive_from_similarity(sims, elem_exp(m.logit_scale));
  };
  if (!with_grad) {
    res.l_con = compute().item();
    return res;
  }
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor l_con = compute();
    res.l_con = l_con.item();
    tape.backward(l_con);  // logit_scale (and xpool weights) are leaves here
  }
  const auto fg = F.grad();
  const auto yg = Y.grad();
  const std::int64_t fstride = numel(fshape) / b;
  res.feat_cot.resize(static_cast<std::size_t>(b));
  res.y_cot.resize(static_cast<std::size_t>(b));
  for (std::int64_t i = 0; i < b; ++i) {
    res.feat_cot[static_cast<std::size_t>(i)] =
        std::vector<double>(fg.begin() + i * fstride, fg.begin() + (i + 1) * fstride);
    res.y_cot[static_cast<std::size_t>(i)] =
        std::vector<double>(yg.begin() + i * d, yg.begin() + (i + 1) * d);
  }
  return res;
}

void parallel_items(int threads, std::size_t n, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = std::min<int>(threads, static_cast<int>(n));
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mu;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (std::size_t i = static_cast<std::size_t>(w); i < n;
             i += static_cast<std::size_t>(workers))
          fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

BatchLoss run_batch(Model& m, const std::vector<BatchItem>& items,
                    const TrainConfig& cfg, const model::TokenWeightTable& table,
                    bool with_grad) {
  VTR_CHECK(!items.empty(), "empty batch");
  const std::size_t b = items.size();

  std::vector<ItemForward> fwd(b);
  parallel_items(cfg.threads, b, [&](std::size_t i) {
    fwd[i] = forward_item(m, items[i], cfg, table, with_grad);
  });

  JointResult joint = joint_contrastive(m, fwd, with_grad);

  BatchLoss loss;
  loss.con = joint.l_con;
  if (caption_active(m, cfg)) {
    for (const auto& f : fwd) loss.cap += f.cap.item();
    loss.cap /= static_cast<double>(b);
  }
  loss.total = loss.con + cfg.lambda * loss.cap;
  if (!with_grad) return loss;

  std::vector<LeafGradMap> sinks(b);
  const double cap_cot = cfg.lambda / static_cast<double>(b);
  parallel_items(cfg.threads, b, [&](std::size_t i) {
    std::vector<std::pair<Tensor, std::vector<double>>> roots;
    roots.push_back({fwd[i].feat, joint.feat_cot[i]});
    roots.push_back({fwd[i].y, joint.y_cot[i]});
    if (fwd[i].cap.defined() && fwd[i].cap.requires_grad())
      roots.push_back({fwd[i].cap, {cap_cot}});
    fwd[i].tape->backward_seeded(roots, &sinks[i]);
  });
  // fixed item-order reduction keeps results independent of thread count
  for (std::size_t i = 0; i < b; ++i) {
    for (auto& [node, buf] : sinks[i]) {
      node->ensure_grad();
      for (std::size_t j = 0; j < buf.size(); ++j) node->grad[j] += buf[j];
    }
  }
  return loss;
}

}  // namespace

BatchLoss batch_forward(const Model& m, const std::vector<BatchItem>& items,
                        const TrainConfig& cfg, const model::TokenWeightTable& table) {
  return run_batch(const_cast<Model&>(m), items, cfg, table, false);
}

BatchLoss batch_backward(Model& m, const std::vector<BatchItem>& items,
                         const TrainConfig& cfg, const model::TokenWeightTable& table) {
  return run_batch(m, items, cfg, table, true);
}

SplitMetrics eval_split_r1(const Model& m, const data::Corpus& corpus,
                           const std::vector<int>& ids) {
  VTR_CHECK(!ids.empty(), "empty split");
  std::vector<const model::VideoClip*> clips;
  std::vector<model::TokenSequence> seqs;
  for (int id : ids) {
    const auto& item = corpus.item(id);
    clips.push_back(&item.clip);
    seqs.push_back(model::tokenize(item.caption, corpus.vocab, m.cfg.max_len));
  }
  bench::Strategy strategy = bench::Strategy::mean_pool;
  switch (m.cfg.pooling) {
    case PoolingKind::mean: strategy = bench::Strategy::mean_pool; break;
    case PoolingKind::attention: strategy = bench::Strategy::attention_pool; break;
    case PoolingKind::topk: strategy = bench::Strategy::topk_pool; break;
    case PoolingKind::xpool: strategy = bench::Strategy::xpool_style; break;
  }
  bench::RetrievalIndex idx = bench::build_index(m, clips, seqs, strategy);
  bench::RankResult rr = bench::rank(idx);

  const std::int64_t n = static_cast<std::int64_t>(ids.size());
  std::vector<int> gt(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) gt[static_cast<std::size_t>(i)] = static_cast<int>(i);

  SplitMetrics sm;
  sm.r1_t2v = bench::recall_at_k(rr.ranking, gt, 1);
  std::vector<std::vector<int>> v2t(static_cast<std::size_t>(n));
  std::vector<double> column(static_cast<std::size_t>(n));
  for (std::int64_t v = 0; v < n; ++v) {
    for (std::int64_t t = 0; t < n; ++t)
      column[static_cast<std::size_t>(t)] = rr.sims[static_cast<std::size_t>(t * n + v)];
    v2t[static_cast<std::size_t>(v)] = bench::order_candidates(column.data(), n);
  }
  sm.r1_v2t = bench::recall_at_k(v2t, gt, 1);
  return sm;
}

TrainResult train(Model& m, const data::Corpus& corpus, const TrainConfig& cfg,
                  const std::string& out_dir) {
  VTR_CHECK(!corpus.train_ids.empty(), "corpus has no training items");
  VTR_CHECK(cfg.batch_size >= 1 && cfg.epochs >= 1, "degenerate train config");

  std::vector<model::TokenSequence> train_seqs;
  for (int id : corpus.train_ids)
    train_seqs.push_back(model::tokenize(corpus.item(id).caption, corpus.vocab,
                                         m.cfg.max_len));
  const model::TokenWeightTable table = model::tfidf_weights(train_seqs, corpus.vocab);

  std::vector<Tensor> params = m.parameters();
  AdamW opt(params, cfg.base_lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps);

  const int n = static_cast<int>(corpus.train_ids.size());
  const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::int64_t total_steps =
      static_cast<std::int64_t>(cfg.epochs) * steps_per_epoch;

  std::ofstream metrics;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    metrics.open(std::filesystem::path(out_dir) / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw IoError("cannot open metrics log in " + out_dir);
  }

  TrainResult result;
  Rng master(cfg.seed);
  std::int64_t step = 0;
  double last_r1_t2v = 0.0, last_r1_v2t = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = master.child("shuffle", static_cast<std::uint64_t>(epoch));
    std::vector<int> order = shuffle_rng.permutation(n);

    double epoch_con = 0.0, epoch_cap = 0.0, lr_t = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int bs = std::min(cfg.batch_size, n - start);
      std::vector<BatchItem> items;
      items.reserve(static_cast<std::size_t>(bs));
      for (int s = 0; s < bs; ++s) {
        const int pos = order[static_cast<std::size_t>(start + s)];
        const int id = corpus.train_ids[static_cast<std::size_t>(pos)];
        const auto& ci = corpus.item(id);
        BatchItem item;
        // rotate through the renders of this pair across epochs
        const std::uint64_t stream = static_cast<std::uint64_t>(epoch) * 1000003ull +
                                     static_cast<std::uint64_t>(id);
        const int pick = ci.render_count() == 1
                             ? 0
                             : master.child("render", stream).below_int(ci.render_count());
        item.clip = &ci.render(pick);
        item.tokens = train_seqs[static_cast<std::size_t>(pos)];
        item.pool_stream = stream;
        items.push_back(std::move(item));
      }

      opt.zero_grad();
      BatchLoss bl;
      try {
        bl = batch_backward(m, items, cfg, table);
      } catch (const NumericError& e) {
        throw NumericError(detail::format_msg("non-finite loss in batch ", step,
                                              " (epoch ", epoch, "): ", e.what()));
      }
      VTR_CHECK_NUMERIC(std::isfinite(bl.total), "non-finite loss in batch ", step);

      if (cfg.grad_clip > 0.0) clip_grad_global_norm(params, cfg.grad_clip);
      // linear warmup, then the cosine decay over the remaining steps
      const std::int64_t warmup =
          static_cast<std::int64_t>(cfg.warmup_frac * static_cast<double>(total_steps));
      if (step < warmup) {
        lr_t = cfg.base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
      } else {
        lr_t = cosine_lr(step - warmup, total_steps - warmup, cfg.base_lr);
      }
      opt.step(lr_t);
      model::clamp_logit_scale(m);
      ++step;
      ++batches;
      epoch_con += bl.con;
      epoch_cap += bl.cap;
    }

    EpochLog log;
    log.epoch = epoch;
    log.l_con = epoch_con / batches;
    log.l_cap = epoch_cap / batches;
    log.lr = lr_t;
    if (!corpus.val_ids.empty() &&
        (epoch % cfg.eval_every == 0 || epoch == cfg.epochs - 1)) {
      SplitMetrics sm = eval_split_r1(m, corpus, corpus.val_ids);
      last_r1_t2v = sm.r1_t2v;
      last_r1_v2t = sm.r1_v2t;
    }
    log.r1_t2v = last_r1_t2v;
    log.r1_v2t = last_r1_v2t;
    result.log.push_back(log);

    if (metrics.is_open()) {
      nlohmann::json j{{"epoch", log.epoch},   {"l_con", log.l_con},
                       {"l_cap", log.l_cap},   {"lr", log.lr},
                       {"r1_t2v", log.r1_t2v}, {"r1_v2t", log.r1_v2t}};
      metrics << j.dump() << "\n";
    }

    if (cfg.early_stop_train_r1 &&
        (epoch + 1) % cfg.train_r1_every == 0) {
      SplitMetrics tm = eval_split_r1(m, corpus, corpus.train_ids);
      if (tm.r1_t2v == 100.0 && tm.r1_v2t == 100.0) {
        result.early_stopped = true;
        break;
      }
    }
  }
  result.steps = static_cast<int>(step);

  if (!out_dir.empty()) {
    result.checkpoint_path =
        (std::filesystem::path(out_dir) / "checkpoint_final.ckpt").string();
    model::save_model(result.checkpoint_path, m);
  }
  return result;
}

}  // namespace vtr::train
