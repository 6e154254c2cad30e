#include "vtr/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace vtr::model {

using namespace vtr::core;

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
  Vocabulary v;
  v.tokens_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (const auto& w : words) {
    if (v.index_.count(w) || w.empty()) continue;
    v.index_[w] = static_cast<int>(v.tokens_.size());
    v.tokens_.push_back(w);
  }
  for (int i = 0; i < 4; ++i) v.index_[v.tokens_[static_cast<std::size_t>(i)]] = i;
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write vocabulary: " + path);
  for (const auto& t : tokens_) os << t << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read vocabulary: " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    v.index_[line] = static_cast<int>(v.tokens_.size());
    v.tokens_.push_back(line);
  }
  VTR_CHECK(v.size() >= 4 && v.tokens_[0] == "<pad>" && v.tokens_[1] == "<bos>" &&
                v.tokens_[2] == "<eos>" && v.tokens_[3] == "<unk>",
            "vocabulary file missing reserved tokens: ", path);
  return v;
}

TokenSequence tokenize(const std::string& caption, const Vocabulary& vocab,
                       std::int64_t max_len) {
  VTR_CHECK(max_len >= 2, "max_len must fit BOS and EOS");
  std::string lowered = caption;
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::istringstream ss(lowered);
  TokenSequence seq;
  seq.ids.push_back(Vocabulary::kBos);
  std::string word;
  while (ss >> word) {
    if (static_cast<std::int64_t>(seq.ids.size()) >= max_len - 1) break;  // keep room for EOS
    seq.ids.push_back(vocab.id(word));
  }
  seq.ids.push_back(Vocabulary::kEos);
  seq.length = static_cast<std::int64_t>(seq.ids.size());
  return seq;
}

TextEncoderWeights init_text_encoder(int vocab_size, std::int64_t dim, int heads,
                                     int layers, std::int64_t max_len, Rng rng) {
  TextEncoderWeights w;
  w.heads = heads;
  w.max_len = max_len;
  auto gaussian = [&rng](Shape shape) {
    std::vector<double> d(static_cast<std::size_t>(numel(shape)));
    for (auto& v : d) v = rng.normal(0.0, 0.02);
    return Tensor::from_data(std::move(shape), std::move(d), true);
  };
  w.tok_emb = gaussian({vocab_size, dim});
  w.pos_emb = gaussian({max_len, dim});
  for (int l = 0; l < layers; ++l)
    w.layers.push_back(init_layer(dim, rng.child("layer", static_cast<std::uint64_t>(l))));
  w.lnf_g = Tensor::full({dim}, 1.0).set_requires_grad(true);
  w.lnf_b = Tensor::zeros({dim}, true);
  {
    std::vector<double> d(static_cast<std::size_t>(dim * dim));
    for (auto& v : d) v = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
    w.proj_w = Tensor::from_data({dim, dim}, std::move(d), true);
  }
  w.proj_b = Tensor::zeros({dim}, true);
  return w;
}

namespace {

Tensor text_hidden_states(const TokenSequence& tokens, const TextEncoderWeights& w) {
  const std::int64_t s = static_cast<std::int64_t>(tokens.ids.size());
  VTR_CHECK(s >= 2 && tokens.length >= 2 && tokens.length <= s,
            "invalid token sequence");
  VTR_CHECK(s <= w.max_len, "sequence length ", s, " exceeds max_len ", w.max_len);
  VTR_CHECK(tokens.ids[0] == Vocabulary::kBos &&
                tokens.ids[static_cast<std::size_t>(tokens.eos_pos())] == Vocabulary::kEos,
            "token sequence must start with BOS and end with EOS");

  Tensor x = add(gather_rows(w.tok_emb, tokens.ids), slice(w.pos_emb, 0, 0, s));
  Tensor mask = causal_mask(s);
  for (const LayerWeights& lw : w.layers) {
    x = prenorm_self_attention(x, lw, w.heads, &mask);
    x = prenorm_feed_forward(x, lw);
  }
  return layer_norm(x, w.lnf_g, w.lnf_b);
}

}  // namespace

Tensor encode_text(const TokenSequence& tokens, const TextEncoderWeights& w) {
  Tensor h = text_hidden_states(tokens, w);
  Tensor eos_row = slice(h, 0, tokens.eos_pos(), tokens.eos_pos() + 1);  // [1, D]
  Tensor y = l2_normalize_rows(linear(eos_row, w.proj_w, w.proj_b));
  return reshape(y, {y.extent(1)});
}

Tensor encode_text_tokens(const TokenSequence& tokens, const TextEncoderWeights& w,
                          std::int64_t nw) {
  VTR_CHECK(nw >= 1, "need at least one token vector");
  Tensor h = text_hidden_states(tokens, w);
  const std::int64_t words = tokens.length - 2;  // between BOS and EOS
  std::vector<int> picks(static_cast<std::size_t>(nw));
  for (std::int64_t i = 0; i < nw; ++i) {
    const std::int64_t word_pos = words > 0 ? 1 + std::min(i, words - 1) : tokens.eos_pos();
    picks[static_cast<std::size_t>(i)] = static_cast<int>(word_pos);
  }
  return l2_normalize_rows(linear(gather_rows(h, picks), w.proj_w, w.proj_b));
}

}  // namespace vtr::model
