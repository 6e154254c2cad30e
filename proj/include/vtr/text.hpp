#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "vtr/encoder.hpp"

namespace vtr::model {

// Closed word-level vocabulary with fixed reserved ids.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  // Builds reserved tokens plus the given words (deduplicated, order kept).
  static Vocabulary from_words(const std::vector<std::string>& words);

  int id(const std::string& token) const;  // kUnk for unknown tokens
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }

  // Plain text, one token per line; line number = id.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// BOS ... EOS, PAD only after EOS; length counts through EOS.
struct TokenSequence {
  std::vector<int> ids;
  std::int64_t length = 0;

  std::int64_t eos_pos() const { return length - 1; }
};

// Lowercase, whitespace split, UNK mapping, BOS/EOS wrap, truncation to
// max_len keeping EOS.
TokenSequence tokenize(const std::string& caption, const Vocabulary& vocab,
                       std::int64_t max_len);

struct TextEncoderWeights {
  Tensor tok_emb;  // [V, D]
  Tensor pos_emb;  // [max_len, D]
  std::vector<LayerWeights> layers;
  Tensor lnf_g, lnf_b;
  Tensor proj_w, proj_b;  // [D, D], [D]
  int heads = 4;
  std::int64_t max_len = 12;
};

TextEncoderWeights init_text_encoder(int vocab_size, std::int64_t dim, int heads,
                                     int layers, std::int64_t max_len, Rng rng);

// Causal transformer, EOS-position readout, projection, L2 normalization.
Tensor encode_text(const TokenSequence& tokens, const TextEncoderWeights& w);

// Word-level readout for fine-grained fusion: projected unit-norm hidden
// states of the word positions (BOS/EOS excluded), clamped/repeated to
// exactly nw rows. Falls back to the EOS position for wordless captions.
Tensor encode_text_tokens(const TokenSequence& tokens, const TextEncoderWeights& w,
                          std::int64_t nw);

}  // namespace vtr::model
