#include "vtr/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vtr/rng.hpp"

namespace vtr::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kColors[] = {"red", "green", "blue"};
constexpr const char* kShapes[] = {"circle", "square", "triangle"};
constexpr const char* kDirections[] = {"left", "right", "up", "down"};
constexpr const char* kSpeeds[] = {"slowly", "quickly"};
constexpr int kSpeedPx[] = {1, 2};
constexpr std::int64_t kRadius = 4;

struct Combo {
  int color, shape, direction, speed;
};

std::vector<Combo> all_combos() {
  std::vector<Combo> v;
  for (int c = 0; c < 3; ++c)
    for (int s = 0; s < 3; ++s)
      for (int d = 0; d < 4; ++d)
        for (int sp = 0; sp < 2; ++sp) v.push_back({c, s, d, sp});
  return v;
}

std::string caption_of(const Combo& c) {
  return std::string("a ") + kColors[c.color] + " " + kShapes[c.shape] +
         " moves " + kDirections[c.direction] + " " + kSpeeds[c.speed];
}

void shade(std::uint8_t* px, int color) {
  px[0] = color == 0 ? 255 : 0;
  px[1] = color == 1 ? 255 : 0;
  px[2] = color == 2 ? 255 : 0;
}

bool inside_shape(int shape, std::int64_t dr, std::int64_t dc) {
  switch (shape) {
    case 0: return dr * dr + dc * dc <= kRadius * kRadius;           // circle
    case 1: return std::abs(dr) <= kRadius && std::abs(dc) <= kRadius;  // square
    default: return dr >= -kRadius && dr <= kRadius &&
                    2 * std::abs(dc) <= dr + kRadius;                // triangle
  }
}

VideoClip render_clip(const Combo& combo, const GenParams& p, Rng rng, int id) {
  const int s = kSpeedPx[combo.speed];
  std::int64_t drow = 0, dcol = 0;
  switch (combo.direction) {
    case 0: dcol = -s; break;
    case 1: dcol = s; break;
    case 2: drow = -s; break;
    case 3: drow = s; break;
  }
  const std::int64_t travel = s * (p.nf - 1);
  auto start_range = [&](std::int64_t extent, std::int64_t delta) {
    std::int64_t lo = kRadius, hi = extent - 1 - kRadius;
    if (delta < 0) lo += travel;
    if (delta > 0) hi -= travel;
    VTR_CHECK(lo <= hi, "canvas too small for the configured motion");
    return std::pair<std::int64_t, std::int64_t>{lo, hi};
  };
  auto [rlo, rhi] = start_range(p.height, drow);
  auto [clo, chi] = start_range(p.width, dcol);
  const std::int64_t r0 = rlo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(rhi - rlo + 1)));
  const std::int64_t c0 = clo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(chi - clo + 1)));

  VideoClip clip;
  clip.nf = p.nf;
  clip.h = p.height;
  clip.w = p.width;
  clip.c = 3;
  clip.id = std::to_string(id);
  clip.pixels.assign(static_cast<std::size_t>(p.nf * p.height * p.width * 3), 0);
  for (std::int64_t f = 0; f < p.nf; ++f) {
    const std::int64_t cr = r0 + drow * f;
    const std::int64_t cc = c0 + dcol * f;
    std::uint8_t* frame = clip.pixels.data() + f * clip.frame_bytes();
    for (std::int64_t dr = -kRadius; dr <= kRadius; ++dr) {
      for (std::int64_t dc = -kRadius; dc <= kRadius; ++dc) {
        if (!inside_shape(combo.shape, dr, dc)) continue;
        const std::int64_t row = cr + dr, col = cc + dc;
        if (row < 0 || row >= p.height || col < 0 || col >= p.width) continue;
        shade(frame + (row * p.width + col) * 3, combo.color);
      }
    }
  }
  return clip;
}

}  // namespace

Corpus generate_corpus(const GenParams& p) {
  VTR_CHECK(p.n_pairs >= 2, "need at least two pairs");
  VTR_CHECK(p.nf >= 2, "need at least two frames for motion");
  VTR_CHECK(p.height >= 24 && p.width >= 24, "canvas too small");
  VTR_CHECK(p.n_val >= 0 && p.n_val < p.n_pairs, "invalid validation size");

  Rng rng(p.seed);
  std::vector<Combo> combos = all_combos();
  {
    Rng shuffle_rng = rng.child("combos");
    std::vector<int> perm = shuffle_rng.permutation(static_cast<int>(combos.size()));
    std::vector<Combo> shuffled;
    shuffled.reserve(combos.size());
    for (int i : perm) shuffled.push_back(combos[static_cast<std::size_t>(i)]);
    combos = std::move(shuffled);
  }
  std::vector<Combo> chosen;
  if (p.n_pairs <= static_cast<int>(combos.size())) {
    chosen.assign(combos.begin(), combos.begin() + p.n_pairs);
  } else {
    VTR_CHECK(p.allow_duplicate_captions,
              "n_pairs=", p.n_pairs, " exceeds the ", combos.size(),
              " distinct captions; duplicates need the explicit flag");
    chosen = combos;
    Rng dup_rng = rng.child("dups");
    while (static_cast<int>(chosen.size()) < p.n_pairs)
      chosen.push_back(combos[dup_rng.below(combos.size())]);
  }

  VTR_CHECK(p.renders_per_pair >= 1, "need at least one render per pair");
  Corpus corpus;
  corpus.params = p;
  for (int id = 0; id < p.n_pairs; ++id) {
    CorpusItem item;
    item.id = id;
    item.caption = caption_of(chosen[static_cast<std::size_t>(id)]);
    for (int r = 0; r < p.renders_per_pair; ++r) {
      VideoClip clip = render_clip(
          chosen[static_cast<std::size_t>(id)], p,
          rng.child("render", static_cast<std::uint64_t>(id) * 1024 + static_cast<std::uint64_t>(r)),
          id);
      if (r == 0) {
        item.clip = std::move(clip);
      } else {
        item.extra_renders.push_back(std::move(clip));
      }
    }
    corpus.items.push_back(std::move(item));
  }

  // validation split
  std::vector<bool> in_val(static_cast<std::size_t>(p.n_pairs), false);
  int assigned = 0;
  if (p.confusable_val) {
    // pair up items sharing (color, shape): they differ only temporally
    std::map<std::pair<int, int>, std::vector<int>> groups;
    for (int id = 0; id < p.n_pairs; ++id) {
      const Combo& c = chosen[static_cast<std::size_t>(id)];
      groups[{c.color, c.shape}].push_back(id);
    }
    for (auto& [key, ids] : groups) {
      if (assigned + 2 > p.n_val) break;
      if (ids.size() < 2) continue;
      in_val[static_cast<std::size_t>(ids[0])] = true;
      in_val[static_cast<std::size_t>(ids[1])] = true;
      assigned += 2;
    }
  }
  Rng val_rng = rng.child("val");
  while (assigned < p.n_val) {
    const int id = val_rng.below_int(p.n_pairs);
    if (in_val[static_cast<std::size_t>(id)]) continue;
    in_val[static_cast<std::size_t>(id)] = true;
    ++assigned;
  }
  for (int id = 0; id < p.n_pairs; ++id)
    (in_val[static_cast<std::size_t>(id)] ? corpus.val_ids : corpus.train_ids).push_back(id);

  // vocabulary: reserved tokens plus the sorted corpus lexicon
  std::set<std::string> words;
  for (const auto& item : corpus.items) {
    std::istringstream ss(item.caption);
    std::string wtok;
    while (ss >> wtok) words.insert(wtok);
  }
  corpus.vocab = model::Vocabulary::from_words({words.begin(), words.end()});
  return corpus;
}

void write_video(const std::string& path, const VideoClip& clip) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write video: " + path);
  os.write("VVID", 4);
  auto put_u32 = [&os](std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
  };
  put_u32(static_cast<std::uint32_t>(clip.nf));
  put_u32(static_cast<std::uint32_t>(clip.h));
  put_u32(static_cast<std::uint32_t>(clip.w));
  put_u32(static_cast<std::uint32_t>(clip.c));
  os.write(reinterpret_cast<const char*>(clip.pixels.data()),
           static_cast<std::streamsize>(clip.pixels.size()));
  if (!os) throw IoError("short write for video: " + path);
}

VideoClip read_video(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read video: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "VVID", 4) != 0)
    throw IoError("bad video magic in " + path);
  auto get_u32 = [&is]() {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  };
  VideoClip clip;
  clip.nf = get_u32();
  clip.h = get_u32();
  clip.w = get_u32();
  clip.c = get_u32();
  clip.pixels.resize(static_cast<std::size_t>(clip.nf * clip.h * clip.w * clip.c));
  is.read(reinterpret_cast<char*>(clip.pixels.data()),
          static_cast<std::streamsize>(clip.pixels.size()));
  if (!is) throw IoError("truncated video: " + path);
  return clip;
}

void write_corpus(const Corpus& corpus, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "videos");
  json manifest;
  manifest["seed"] = corpus.params.seed;
  manifest["n_pairs"] = corpus.params.n_pairs;
  manifest["nf"] = corpus.params.nf;
  manifest["height"] = corpus.params.height;
  manifest["width"] = corpus.params.width;
  manifest["n_val"] = corpus.params.n_val;
  manifest["renders_per_pair"] = corpus.params.renders_per_pair;
  manifest["confusable_val"] = corpus.params.confusable_val;
  json items = json::array();
  std::set<int> val(corpus.val_ids.begin(), corpus.val_ids.end());
  for (const auto& item : corpus.items) {
    char name[40];
    std::snprintf(name, sizeof(name), "videos/%04d.vid", item.id);
    write_video((fs::path(dir) / name).string(), item.clip);
    json renders = json::array();
    renders.push_back(name);
    for (std::size_t r = 0; r < item.extra_renders.size(); ++r) {
      std::snprintf(name, sizeof(name), "videos/%04d_r%zu.vid", item.id, r + 1);
      write_video((fs::path(dir) / name).string(), item.extra_renders[r]);
      renders.push_back(name);
    }
    items.push_back({{"id", item.id},
                     {"caption", item.caption},
                     {"renders", renders},
                     {"split", val.count(item.id) ? "val" : "train"}});
  }
  manifest["items"] = std::move(items);
  std::ofstream os(fs::path(dir) / "manifest.json", std::ios::trunc);
  if (!os) throw IoError("cannot write manifest in " + dir);
  os << manifest.dump(2) << "\n";
  corpus.vocab.save((fs::path(dir) / "vocab.txt").string());
}

Corpus load_corpus(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "manifest.json");
  if (!is) throw IoError("cannot read manifest in " + dir);
  json manifest = json::parse(is);
  Corpus corpus;
  corpus.params.seed = manifest.at("seed").get<std::uint64_t>();
  corpus.params.n_pairs = manifest.at("n_pairs").get<int>();
  corpus.params.nf = manifest.at("nf").get<std::int64_t>();
  corpus.params.height = manifest.at("height").get<std::int64_t>();
  corpus.params.width = manifest.at("width").get<std::int64_t>();
  corpus.params.n_val = manifest.at("n_val").get<int>();
  corpus.params.renders_per_pair = manifest.at("renders_per_pair").get<int>();
  corpus.params.confusable_val = manifest.at("confusable_val").get<bool>();
  for (const auto& j : manifest.at("items")) {
    CorpusItem item;
    item.id = j.at("id").get<int>();
    item.caption = j.at("caption").get<std::string>();
    const auto renders = j.at("renders");
    VTR_CHECK(!renders.empty(), "item without renders in manifest");
    item.clip = read_video((fs::path(dir) / renders[0].get<std::string>()).string());
    item.clip.id = std::to_string(item.id);
    for (std::size_t r = 1; r < renders.size(); ++r) {
      VideoClip extra = read_video((fs::path(dir) / renders[r].get<std::string>()).string());
      extra.id = std::to_string(item.id);
      item.extra_renders.push_back(std::move(extra));
    }
    const bool is_val = j.at("split").get<std::string>() == "val";
    (is_val ? corpus.val_ids : corpus.train_ids).push_back(item.id);
    corpus.items.push_back(std::move(item));
  }
  std::sort(corpus.items.begin(), corpus.items.end(),
            [](const CorpusItem& a, const CorpusItem& b) { return a.id < b.id; });
  corpus.vocab = model::Vocabulary::load((fs::path(dir) / "vocab.txt").string());
  return corpus;
}

Centroid shape_centroid(const VideoClip& clip, std::int64_t frame) {
  Centroid c;
  const std::uint8_t* px = clip.frame(frame);
  for (std::int64_t r = 0; r < clip.h; ++r) {
    for (std::int64_t col = 0; col < clip.w; ++col) {
      const std::uint8_t* p = px + (r * clip.w + col) * clip.c;
      bool lit = false;
      for (std::int64_t ch = 0; ch < clip.c; ++ch) lit = lit || p[ch] >= 128;
      if (!lit) continue;
      c.row += static_cast<double>(r);
      c.col += static_cast<double>(col);
      c.pixels += 1;
    }
  }
  if (c.pixels > 0) {
    c.row /= static_cast<double>(c.pixels);
    c.col /= static_cast<double>(c.pixels);
  }
  return c;
}

}  // namespace vtr::data
