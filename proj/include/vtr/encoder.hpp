#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vtr/ops.hpp"
#include "vtr/rng.hpp"

namespace vtr::model {

using core::Shape;
using core::Tensor;

// Raw clip: Nf frames of H x W x C unsigned 8-bit pixels, row-major.
struct VideoClip {
  std::int64_t nf = 0, h = 0, w = 0, c = 3;
  std::vector<std::uint8_t> pixels;
  std::string id;

  std::int64_t frame_bytes() const { return h * w * c; }
  const std::uint8_t* frame(std::int64_t f) const { return pixels.data() + f * frame_bytes(); }
};

// One pre-norm transformer block (shared by the video and text towers).
struct LayerWeights {
  Tensor ln1_g, ln1_b;
  core::MhaWeights attn;
  Tensor ln2_g, ln2_b;
  Tensor ff1_w, ff1_b, ff2_w, ff2_b;
};

struct EncoderWeights {
  Tensor patch_w, patch_b;  // [P*P*C, D], [D]
  Tensor pos;               // [L, D], spatial positions incl. CLS slot
  Tensor cls;               // [1, D]
  std::vector<LayerWeights> layers;
  Tensor cube0;             // [Nf, Nf, D] learnable initial prompt cube

  int heads = 4;
  std::int64_t patch = 8, image_h = 32, image_w = 32, dim = 64, nf = 6;

  std::int64_t patches_per_frame() const {
    return (image_h / patch) * (image_w / patch);
  }
  std::int64_t seq_len() const { return patches_per_frame() + 1; }  // +1 for CLS
};

enum class EncoderMode { baseline, prompt_switch };

struct FrameBundle {
  Tensor v;     // [Nf, L, D]
  Tensor cube;  // [Nf, Nf, D]; undefined in baseline mode
  int layer_index = 0;
};

struct EncodeResult {
  Tensor cls;   // [Nf, D] final per-frame CLS rows (before the final LN)
  Tensor cube;  // [Nf, Nf, D] final cube; undefined in baseline mode
};

EncoderWeights init_encoder(std::int64_t image_size, std::int64_t patch,
                            std::int64_t dim, int heads, int layers,
                            std::int64_t nf, Rng rng);

// Pixel -> token embedding: scale to [0,1], standardize with mean/std 0.5,
// flatten fixed-size patches, project, prepend CLS, add positions.
Tensor patchify(const VideoClip& clip, const EncoderWeights& w);

// Transposes the cube's first two (temporal, spatial) axes. Pure
// permutation; gradient flows through as the inverse permutation.
Tensor prompt_switch(const Tensor& cube);

FrameBundle encoder_layer(const FrameBundle& in, const LayerWeights& lw,
                          int heads, EncoderMode mode);

EncodeResult encode_video(const VideoClip& clip, const EncoderWeights& w,
                          EncoderMode mode);

// Shared transformer sublayers, reused by the text tower and caption head.
Tensor prenorm_self_attention(const Tensor& x, const LayerWeights& lw, int heads,
                              const Tensor* mask = nullptr);
Tensor prenorm_feed_forward(const Tensor& x, const LayerWeights& lw);
LayerWeights init_layer(std::int64_t dim, Rng rng);

}  // namespace vtr::model
