#include "vtr/encoder.hpp"

namespace vtr::model {

using namespace vtr::core;

namespace {

Tensor gaussian(Rng& rng, Shape shape, double stddev) {
  std::vector<double> d(static_cast<std::size_t>(numel(shape)));
  for (auto& v : d) v = rng.normal(0.0, stddev);
  return Tensor::from_data(std::move(shape), std::move(d), true);
}

// embeddings and the cube start small; linear maps scale with fan-in so
// signals survive the from-scratch stack at toy widths
constexpr double kInitStd = 0.02;

Tensor fan_in_linear(Rng& rng, std::int64_t in, std::int64_t out) {
  return gaussian(rng, {in, out}, 1.0 / std::sqrt(static_cast<double>(in)));
}

}  // namespace

LayerWeights init_layer(std::int64_t dim, Rng rng) {
  LayerWeights lw;
  lw.ln1_g = Tensor::full({dim}, 1.0).set_requires_grad(true);
  lw.ln1_b = Tensor::zeros({dim}, true);
  lw.attn.wq = fan_in_linear(rng, dim, dim);
  lw.attn.bq = Tensor::zeros({dim}, true);
  lw.attn.wk = fan_in_linear(rng, dim, dim);
  lw.attn.bk = Tensor::zeros({dim}, true);
  lw.attn.wv = fan_in_linear(rng, dim, dim);
  lw.attn.bv = Tensor::zeros({dim}, true);
  lw.attn.wo = fan_in_linear(rng, dim, dim);
  lw.attn.bo = Tensor::zeros({dim}, true);
  lw.ln2_g = Tensor::full({dim}, 1.0).set_requires_grad(true);
  lw.ln2_b = Tensor::zeros({dim}, true);
  lw.ff1_w = fan_in_linear(rng, dim, 4 * dim);
  lw.ff1_b = Tensor::zeros({4 * dim}, true);
  lw.ff2_w = fan_in_linear(rng, 4 * dim, dim);
  lw.ff2_b = Tensor::zeros({dim}, true);
  return lw;
}

EncoderWeights init_encoder(std::int64_t image_size, std::int64_t patch,
                            std::int64_t dim, int heads, int layers,
                            std::int64_t nf, Rng rng) {
  VTR_CHECK(layers >= 2, "encoder needs at least 2 layers for peer-to-peer paths");
  VTR_CHECK(image_size % patch == 0, "image size ", image_size,
            " not divisible by patch ", patch);
  EncoderWeights w;
  w.heads = heads;
  w.patch = patch;
  w.image_h = image_size;
  w.image_w = image_size;
  w.dim = dim;
  w.nf = nf;
  const std::int64_t pvec = patch * patch * 3;
  w.patch_w = fan_in_linear(rng, pvec, dim);
  w.patch_b = Tensor::zeros({dim}, true);
  w.pos = gaussian(rng, {w.seq_len(), dim}, kInitStd);
  w.cls = gaussian(rng, {1, dim}, kInitStd);
  for (int l = 0; l < layers; ++l) w.layers.push_back(init_layer(dim, rng.child("layer", static_cast<std::uint64_t>(l))));
  // cube entries start Gaussian with zero mean and 0.02 std
  Rng cube_rng = rng.child("cube");
  w.cube0 = gaussian(cube_rng, {nf, nf, dim}, kInitStd);
  return w;
}

Tensor patchify(const VideoClip& clip, const EncoderWeights& w) {
  VTR_CHECK(clip.nf > 0, "empty clip");
  VTR_CHECK_SHAPE(clip.h == w.image_h && clip.w == w.image_w && clip.c == 3,
                  "clip ", clip.id, " is ", clip.h, "x", clip.w, "x", clip.c,
                  ", encoder expects ", w.image_h, "x", w.image_w, "x3");
  VTR_CHECK_SHAPE(clip.h % w.patch == 0 && clip.w % w.patch == 0,
                  "frame extents not divisible by patch size ", w.patch);
  const std::int64_t p = w.patch;
  const std::int64_t gh = clip.h / p, gw = clip.w / p;
  const std::int64_t np = gh * gw;
  const std::int64_t pvec = p * p * clip.c;

  std::vector<Tensor> frames;
  frames.reserve(static_cast<std::size_t>(clip.nf));
  for (std::int64_t f = 0; f < clip.nf; ++f) {
    const std::uint8_t* px = clip.frame(f);
    std::vector<double> patches(static_cast<std::size_t>(np * pvec));
    for (std::int64_t gy = 0; gy < gh; ++gy) {
      for (std::int64_t gx = 0; gx < gw; ++gx) {
        double* dst = patches.data() + (gy * gw + gx) * pvec;
        for (std::int64_t r = 0; r < p; ++r) {
          for (std::int64_t cc = 0; cc < p * clip.c; ++cc) {
            const std::int64_t row = gy * p + r;
            const std::int64_t col0 = gx * p * clip.c;
            const double v = static_cast<double>(px[(row * clip.w) * clip.c + col0 + cc]) / 255.0;
            dst[r * p * clip.c + cc] = (v - 0.5) / 0.5;
          }
        }
      }
    }
    Tensor pt = Tensor::from_data({np, pvec}, std::move(patches));
    Tensor proj = linear(pt, w.patch_w, w.patch_b);            // [np, D]
    Tensor seq = concat({w.cls, proj}, 0);                     // [L, D]
    frames.push_back(reshape(add(seq, w.pos), {1, w.seq_len(), w.dim}));
  }
  return concat(frames, 0);  // [Nf, L, D]
}

Tensor prompt_switch(const Tensor& cube) {
  VTR_CHECK_SHAPE(cube.dim() == 3, "prompt_switch: cube must be 3D, got ",
                  shape_str(cube.shape()));
  VTR_CHECK_SHAPE(cube.extent(0) == cube.extent(1),
                  "prompt_switch: first two extents must agree, got ",
                  shape_str(cube.shape()));
  return permute(cube, {1, 0, 2});
}

Tensor prenorm_self_attention(const Tensor& x, const LayerWeights& lw, int heads,
                              const Tensor* mask) {
  Tensor n = layer_norm(x, lw.ln1_g, lw.ln1_b);
  return add(x, multi_head_attention(n, n, n, lw.attn, heads, mask));
}

Tensor prenorm_feed_forward(const Tensor& x, const LayerWeights& lw) {
  Tensor n = layer_norm(x, lw.ln2_g, lw.ln2_b);
  return add(x, linear(gelu(linear(n, lw.ff1_w, lw.ff1_b)), lw.ff2_w, lw.ff2_b));
}

namespace {

Tensor frame_of(const Tensor& t3, std::int64_t i) {
  Shape rest(t3.shape().begin() + 1, t3.shape().end());
  return reshape(slice(t3, 0, i, i + 1), std::move(rest));
}

}  // namespace

FrameBundle encoder_layer(const FrameBundle& in, const LayerWeights& lw,
                          int heads, EncoderMode mode) {
  const std::int64_t nf = in.v.extent(0);
  const std::int64_t l = in.v.extent(1);
  const std::int64_t d = in.v.extent(2);

  FrameBundle out;
  out.layer_index = in.layer_index + 1;

  if (mode == EncoderMode::baseline) {
    std::vector<Tensor> frames;
    frames.reserve(static_cast<std::size_t>(nf));
    for (std::int64_t i = 0; i < nf; ++i) {
      Tensor x = frame_of(in.v, i);
      x = prenorm_feed_forward(prenorm_self_attention(x, lw, heads), lw);
      frames.push_back(reshape(x, {1, l, d}));
    }
    out.v = concat(frames, 0);
    return out;
  }

  VTR_CHECK(in.cube.defined(), "prompt_switch mode requires a cube");
  // the switch happens at the top of every block, before its attention
  Tensor cube = prompt_switch(in.cube);
  std::vector<Tensor> frames, cube_rows;
  frames.reserve(static_cast<std::size_t>(nf));
  cube_rows.reserve(static_cast<std::size_t>(nf));
  for (std::int64_t i = 0; i < nf; ++i) {
    Tensor x = concat({frame_of(in.v, i), frame_of(cube, i)}, 0);  // [L+Nf, D]
    x = prenorm_feed_forward(prenorm_self_attention(x, lw, heads), lw);
    frames.push_back(reshape(slice(x, 0, 0, l), {1, l, d}));
    cube_rows.push_back(reshape(slice(x, 0, l, l + nf), {1, nf, d}));
  }
  out.v = concat(frames, 0);
  out.cube = concat(cube_rows, 0);
  return out;
}

EncodeResult encode_video(const VideoClip& clip, const EncoderWeights& w,
                          EncoderMode mode) {
  if (mode == EncoderMode::prompt_switch) {
    VTR_CHECK_SHAPE(clip.nf == w.nf, "clip ", clip.id, " has ", clip.nf,
                    " frames but the cube's temporal extent is ", w.nf);
  }
  FrameBundle bundle;
  bundle.v = patchify(clip, w);
  if (mode == EncoderMode::prompt_switch) bundle.cube = w.cube0;
  for (const LayerWeights& lw : w.layers)
    bundle = encoder_layer(bundle, lw, w.heads, mode);

  EncodeResult res;
  std::vector<Tensor> cls_rows;
  cls_rows.reserve(static_cast<std::size_t>(clip.nf));
  for (std::int64_t i = 0; i < clip.nf; ++i) {
    Tensor fi = reshape(slice(bundle.v, 0, i, i + 1), {w.seq_len(), w.dim});
    cls_rows.push_back(slice(fi, 0, 0, 1));
  }
  res.cls = concat(cls_rows, 0);  // [Nf, D]
  res.cube = bundle.cube;
  return res;
}

}  // namespace vtr::model
