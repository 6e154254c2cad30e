#include "vtr/model.hpp"

#include <cmath>
#include <unordered_map>

namespace vtr::model {

using namespace vtr::core;

PoolingKind pooling_from_name(const std::string& name) {
  if (name == "mean") return PoolingKind::mean;
  if (name == "attention") return PoolingKind::attention;
  if (name == "topk") return PoolingKind::topk;
  if (name == "xpool") return PoolingKind::xpool;
  throw ConfigError("unknown pooling kind: " + name);
}

const char* pooling_name(PoolingKind kind) {
  switch (kind) {
    case PoolingKind::mean: return "mean";
    case PoolingKind::attention: return "attention";
    case PoolingKind::topk: return "topk";
    case PoolingKind::xpool: return "xpool";
  }
  return "?";
}

void ModelConfig::validate() const {
  VTR_CHECK(image_size % patch == 0, "image_size must be divisible by patch");
  VTR_CHECK(dim % heads == 0, "dim must be divisible by heads");
  VTR_CHECK(layers >= 2, "encoder needs >= 2 layers");
  VTR_CHECK(cap_layers >= 1, "caption head needs >= 1 decoder block");
  VTR_CHECK(vocab_size >= 4, "vocabulary not set");
  VTR_CHECK(!use_aggregation || use_cube, "aggregation requires the cube");
  VTR_CHECK(!use_caption || use_aggregation, "caption loss requires aggregation");
  VTR_CHECK(topk_kprime >= 1 && topk_kprime <= nf, "topk_kprime outside [1,Nf]");
}

Model init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Model m;
  m.cfg = cfg;
  m.video = init_encoder(cfg.image_size, cfg.patch, cfg.dim, cfg.heads,
                         cfg.layers, cfg.nf, rng.child("video"));
  m.agg = init_aggregation(cfg.dim, cfg.heads, rng.child("aggregation"));
  m.text = init_text_encoder(cfg.vocab_size, cfg.dim, cfg.heads, cfg.text_layers,
                             cfg.max_len, rng.child("text"));
  m.caption = init_caption_head(cfg.vocab_size, cfg.dim, cfg.heads, cfg.cap_layers,
                                cfg.max_len, rng.child("caption"));
  m.logit_scale = Tensor::from_data({1}, {std::log(1.0 / 0.07)}, true);
  Rng xr = rng.child("xpool");
  auto gaussian = [&xr, &cfg](Shape shape) {
    std::vector<double> d(static_cast<std::size_t>(numel(shape)));
    for (auto& v : d)
      v = xr.normal(0.0, 1.0 / std::sqrt(static_cast<double>(cfg.dim)));
    return Tensor::from_data(std::move(shape), std::move(d), true);
  };
  m.xpool.wq = gaussian({cfg.dim, cfg.dim});
  m.xpool.wk = gaussian({cfg.dim, cfg.dim});
  m.xpool.wv = gaussian({cfg.dim, cfg.dim});
  m.xpool.wo = gaussian({cfg.dim, cfg.dim});
  return m;
}

namespace {

void add_mha(std::vector<NamedTensor>& out, const std::string& prefix,
             core::MhaWeights& w) {
  out.push_back({prefix + ".wq", w.wq});
  out.push_back({prefix + ".bq", w.bq});
  out.push_back({prefix + ".wk", w.wk});
  out.push_back({prefix + ".bk", w.bk});
  out.push_back({prefix + ".wv", w.wv});
  out.push_back({prefix + ".bv", w.bv});
  out.push_back({prefix + ".wo", w.wo});
  out.push_back({prefix + ".bo", w.bo});
}

void add_layer(std::vector<NamedTensor>& out, const std::string& prefix,
               LayerWeights& lw) {
  out.push_back({prefix + ".ln1.g", lw.ln1_g});
  out.push_back({prefix + ".ln1.b", lw.ln1_b});
  add_mha(out, prefix + ".attn", lw.attn);
  out.push_back({prefix + ".ln2.g", lw.ln2_g});
  out.push_back({prefix + ".ln2.b", lw.ln2_b});
  out.push_back({prefix + ".ff1.w", lw.ff1_w});
  out.push_back({prefix + ".ff1.b", lw.ff1_b});
  out.push_back({prefix + ".ff2.w", lw.ff2_w});
  out.push_back({prefix + ".ff2.b", lw.ff2_b});
}

}  // namespace

std::vector<NamedTensor> Model::named_parameters() {
  std::vector<NamedTensor> out;
  out.push_back({"video.patch.w", video.patch_w});
  out.push_back({"video.patch.b", video.patch_b});
  out.push_back({"video.pos", video.pos});
  out.push_back({"video.cls", video.cls});
  out.push_back({"video.cube", video.cube0});
  for (std::size_t l = 0; l < video.layers.size(); ++l)
    add_layer(out, "video.l" + std::to_string(l), video.layers[l]);
  add_mha(out, "agg.attn", agg.attn);
  out.push_back({"agg.final_ln.g", agg.final_ln_g});
  out.push_back({"agg.final_ln.b", agg.final_ln_b});
  out.push_back({"text.tok_emb", text.tok_emb});
  out.push_back({"text.pos_emb", text.pos_emb});
  for (std::size_t l = 0; l < text.layers.size(); ++l)
    add_layer(out, "text.l" + std::to_string(l), text.layers[l]);
  out.push_back({"text.lnf.g", text.lnf_g});
  out.push_back({"text.lnf.b", text.lnf_b});
  out.push_back({"text.proj.w", text.proj_w});
  out.push_back({"text.proj.b", text.proj_b});
  out.push_back({"caption.tok_emb", caption.tok_emb});
  out.push_back({"caption.pos_emb", caption.pos_emb});
  for (std::size_t l = 0; l < caption.layers.size(); ++l) {
    const std::string p = "caption.l" + std::to_string(l);
    DecoderLayerWeights& dl = caption.layers[l];
    out.push_back({p + ".ln1.g", dl.ln1_g});
    out.push_back({p + ".ln1.b", dl.ln1_b});
    add_mha(out, p + ".self", dl.self_attn);
    out.push_back({p + ".ln2.g", dl.ln2_g});
    out.push_back({p + ".ln2.b", dl.ln2_b});
    add_mha(out, p + ".cross", dl.cross_attn);
    out.push_back({p + ".ln3.g", dl.ln3_g});
    out.push_back({p + ".ln3.b", dl.ln3_b});
    out.push_back({p + ".ff1.w", dl.ff1_w});
    out.push_back({p + ".ff1.b", dl.ff1_b});
    out.push_back({p + ".ff2.w", dl.ff2_w});
    out.push_back({p + ".ff2.b", dl.ff2_b});
  }
  out.push_back({"caption.lnf.g", caption.lnf_g});
  out.push_back({"caption.lnf.b", caption.lnf_b});
  out.push_back({"caption.out.w", caption.out_w});
  out.push_back({"caption.out.b", caption.out_b});
  out.push_back({"logit_scale", logit_scale});
  if (cfg.pooling == PoolingKind::xpool) {
    out.push_back({"xpool.wq", xpool.wq});
    out.push_back({"xpool.wk", xpool.wk});
    out.push_back({"xpool.wv", xpool.wv});
    out.push_back({"xpool.wo", xpool.wo});
  }
  return out;
}

std::vector<Tensor> Model::parameters() {
  std::vector<Tensor> out;
  for (auto& nt : named_parameters()) out.push_back(nt.tensor);
  return out;
}

namespace {

constexpr const char* kMetaName = "__meta.config";

Tensor config_meta(const ModelConfig& c) {
  return Tensor::from_data(
      {16},
      {static_cast<double>(c.image_size), static_cast<double>(c.patch),
       static_cast<double>(c.dim), static_cast<double>(c.heads),
       static_cast<double>(c.layers), static_cast<double>(c.nf),
       static_cast<double>(c.text_layers), static_cast<double>(c.max_len),
       static_cast<double>(c.cap_layers), static_cast<double>(c.vocab_size),
       c.use_cube ? 1.0 : 0.0, c.use_aggregation ? 1.0 : 0.0,
       c.use_caption ? 1.0 : 0.0,
       c.tfidf_mode == TfidfMode::mask ? 1.0 : 0.0,
       static_cast<double>(static_cast<int>(c.pooling)),
       static_cast<double>(c.topk_kprime)});
}

ModelConfig config_from_meta(const Tensor& t) {
  VTR_CHECK(t.size() == 16, "bad model meta entry");
  const double* v = t.data();
  ModelConfig c;
  c.image_size = static_cast<std::int64_t>(v[0]);
  c.patch = static_cast<std::int64_t>(v[1]);
  c.dim = static_cast<std::int64_t>(v[2]);
  c.heads = static_cast<int>(v[3]);
  c.layers = static_cast<int>(v[4]);
  c.nf = static_cast<std::int64_t>(v[5]);
  c.text_layers = static_cast<int>(v[6]);
  c.max_len = static_cast<std::int64_t>(v[7]);
  c.cap_layers = static_cast<int>(v[8]);
  c.vocab_size = static_cast<int>(v[9]);
  c.use_cube = v[10] != 0.0;
  c.use_aggregation = v[11] != 0.0;
  c.use_caption = v[12] != 0.0;
  c.tfidf_mode = v[13] != 0.0 ? TfidfMode::mask : TfidfMode::weight;
  c.pooling = static_cast<PoolingKind>(static_cast<int>(v[14]));
  c.topk_kprime = static_cast<int>(v[15]);
  return c;
}

}  // namespace

void save_model(const std::string& path, Model& model) {
  std::vector<NamedTensor> entries;
  entries.push_back({kMetaName, config_meta(model.cfg)});
  for (auto& nt : model.named_parameters()) entries.push_back(nt);
  save_checkpoint(path, entries);
}

Model load_model(const std::string& path) {
  auto entries = load_checkpoint(path);
  VTR_CHECK(!entries.empty() && entries[0].name == kMetaName,
            "checkpoint missing model meta: ", path);
  Model m = init_model(config_from_meta(entries[0].tensor), 0);
  std::unordered_map<std::string, Tensor> by_name;
  for (std::size_t i = 1; i < entries.size(); ++i)
    by_name.emplace(entries[i].name, entries[i].tensor);
  for (auto& nt : m.named_parameters()) {
    auto it = by_name.find(nt.name);
    VTR_CHECK(it != by_name.end(), "checkpoint missing parameter ", nt.name);
    VTR_CHECK_SHAPE(it->second.shape() == nt.tensor.shape(),
                    "checkpoint shape mismatch for ", nt.name);
    nt.tensor.vec() = it->second.vec();
  }
  return m;
}

Tensor frame_prompts(const Model& m, const VideoClip& clip) {
  const EncoderMode mode =
      m.cfg.use_cube ? EncoderMode::prompt_switch : EncoderMode::baseline;
  EncodeResult enc = encode_video(clip, m.video, mode);
  if (m.cfg.use_aggregation) return aggregate_frames(enc.cls, enc.cube, m.agg);
  return baseline_prompts(enc.cls, m.agg);
}

VideoClip interval_chunk(const VideoClip& clip, int parity) {
  VTR_CHECK(parity == 0 || parity == 1, "interval_chunk parity must be 0 or 1");
  VideoClip out;
  out.nf = (clip.nf - parity + 1) / 2;
  out.h = clip.h;
  out.w = clip.w;
  out.c = clip.c;
  out.id = clip.id;
  out.pixels.reserve(static_cast<std::size_t>(out.nf * clip.frame_bytes()));
  for (std::int64_t f = parity; f < clip.nf; f += 2) {
    const std::uint8_t* src = clip.frame(f);
    out.pixels.insert(out.pixels.end(), src, src + clip.frame_bytes());
  }
  return out;
}

Tensor chunked_inference(const Model& m, const VideoClip& clip) {
  VTR_CHECK(clip.nf == 2 * m.cfg.nf, "chunked inference expects exactly ",
            2 * m.cfg.nf, " frames, clip ", clip.id, " has ", clip.nf);
  // interval sampling: even indices form chunk A, odd indices chunk B
  Tensor pa = frame_prompts(m, interval_chunk(clip, 0));
  Tensor pb = frame_prompts(m, interval_chunk(clip, 1));
  Tensor all = concat({pa, pb}, 0);  // [2Nf, D]
  Rng unused(0);
  return pool_video(all, static_cast<int>(all.extent(0)), false, unused);
}

Tensor eval_frame_prompts(const Model& m, const VideoClip& clip) {
  if (clip.nf == m.cfg.nf) return frame_prompts(m, clip);
  if (clip.nf == 2 * m.cfg.nf) {
    Tensor pa = frame_prompts(m, interval_chunk(clip, 0));
    Tensor pb = frame_prompts(m, interval_chunk(clip, 1));
    return concat({pa, pb}, 0);
  }
  throw Error(detail::format_msg("clip ", clip.id, " has ", clip.nf,
                                 " frames; expected ", m.cfg.nf, " or ",
                                 2 * m.cfg.nf));
}

Tensor video_repr(const Model& m, const VideoClip& clip, int k, bool training,
                  Rng* rng) {
  if (training) {
    VTR_CHECK(clip.nf == m.cfg.nf, "training clips must have ", m.cfg.nf, " frames");
    VTR_CHECK(rng != nullptr, "training pooling needs an rng");
    return pool_video(frame_prompts(m, clip), k, true, *rng);
  }
  if (clip.nf == 2 * m.cfg.nf) return chunked_inference(m, clip);
  Rng unused(0);
  Tensor prompts = frame_prompts(m, clip);
  return pool_video(prompts, static_cast<int>(prompts.extent(0)), false, unused);
}

void clamp_logit_scale(Model& m) {
  const double cap = std::log(100.0);
  if (m.logit_scale.data()[0] > cap) m.logit_scale.data()[0] = cap;
}

}  // namespace vtr::model
