#pragma once

#include <string>
#include <vector>

#include "vtr/model.hpp"
#include "vtr/text.hpp"

namespace vtr::data {

using model::VideoClip;

// Synthetic paired data: one colored shape per video, moving in a straight
// line; the caption names color, shape, direction and speed. Motion is the
// only cue for direction and speed, so temporal modeling is required to
// tell apart clips sharing color+shape.
struct GenParams {
  std::uint64_t seed = 7;
  int n_pairs = 72;
  std::int64_t nf = 6;
  std::int64_t height = 32;
  std::int64_t width = 32;
  int n_val = 8;
  // extra renders of each pair (same caption, fresh start position);
  // training samples among them so pixel fingerprints cannot stand in for
  // the attributes the caption names
  int renders_per_pair = 1;
  bool allow_duplicate_captions = false;
  // group held-out items into (color,shape) minimal pairs that differ only
  // in direction/speed, so a per-frame model cannot separate them
  bool confusable_val = true;
};

struct CorpusItem {
  VideoClip clip;  // canonical render, used for evaluation
  std::vector<VideoClip> extra_renders;
  std::string caption;
  int id = 0;

  int render_count() const { return 1 + static_cast<int>(extra_renders.size()); }
  const VideoClip& render(int r) const {
    return r == 0 ? clip : extra_renders.at(static_cast<std::size_t>(r - 1));
  }
};

struct Corpus {
  std::vector<CorpusItem> items;
  std::vector<int> train_ids;
  std::vector<int> val_ids;
  model::Vocabulary vocab;
  GenParams params;

  const CorpusItem& item(int id) const { return items.at(static_cast<std::size_t>(id)); }
};

Corpus generate_corpus(const GenParams& p);

void write_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

// Raw frame container: magic "VVID", u32 LE nf/h/w/c, then u8 pixels.
void write_video(const std::string& path, const VideoClip& clip);
VideoClip read_video(const std::string& path);

// Mean (row, col) of lit pixels (any channel >= 128) of one frame.
struct Centroid {
  double row = 0.0, col = 0.0;
  std::int64_t pixels = 0;
};
Centroid shape_centroid(const VideoClip& clip, std::int64_t frame);

}  // namespace vtr::data
