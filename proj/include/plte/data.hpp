#pragma once

#include "plte/tensor.hpp"
#include "plte/types.hpp"

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace plte {

// ---- UTF-8 -----------------------------------------------------------
// Characters are Unicode scalar values; grapheme clustering is out of scope.

std::u32string utf8_decode(std::string_view s);
std::string utf8_encode(char32_t cp);
std::string utf8_encode(std::u32string_view s);

// ---- corpus ----------------------------------------------------------

struct TaggedSentence {
  std::u32string chars;
  std::vector<std::string> tags;  // parallel to chars
  bool operator==(const TaggedSentence&) const = default;
};

using Corpus = std::vector<TaggedSentence>;

// String-to-ID map with ID 0 reserved for unknowns. ID 0 never maps back to
// a surface form; real entries get IDs from 1 upward in insertion order.
class Vocab {
 public:
  static constexpr Index kUnknown = 0;

  Index add(const std::string& surface);
  Index lookup(const std::string& surface) const;  // kUnknown when absent
  bool contains(const std::string& surface) const;
  const std::string& surface(Index id) const;  // valid for id >= 1
  Index size() const { return static_cast<Index>(surfaces_.size()); }  // includes row 0
  // Surfaces for IDs 1..size()-1, in ID order.
  std::span<const std::string> entries() const;

 private:
  std::unordered_map<std::string, Index> ids_;
  std::vector<std::string> surfaces_ = {"<unk>"};
};

Vocab build_vocab(std::span<const std::string> items, int min_freq = 1);

// ---- tag schemes -----------------------------------------------------

enum class TagScheme { BIO, BIOES };

TagScheme tag_scheme_from_string(const std::string& name);
std::string to_string(TagScheme scheme);
bool tag_valid(const std::string& tag, TagScheme scheme);

struct Entity {
  int start = 0;  // 1-based, inclusive
  int end = 0;    // 1-based, inclusive
  std::string label;
  auto operator<=>(const Entity&) const = default;
};

// Decodes maximal well-formed spans. Ill-formed runs (a B- without its E-,
// a bare I-/E-) act as span boundaries: the broken candidate is dropped and
// scanning resumes at the offending tag. Never throws on odd input.
std::vector<Entity> extract_entities(std::span<const std::string> tags, TagScheme scheme);
std::vector<std::string> entities_to_tags(std::span<const Entity> entities, int length,
                                          TagScheme scheme);

// ---- file formats ----------------------------------------------------
// CoNLL-style: one "char<TAB or space>tag" per line, blank line between
// sentences, UTF-8. The char field must be a single Unicode scalar.

Corpus read_conll(const std::string& path);
// Same, but rejects tags outside the scheme (error names the line).
Corpus read_conll(const std::string& path, TagScheme scheme);
void write_conll(const std::string& path, const Corpus& corpus);

struct Embeddings {
  Vocab vocab;
  Tensor table;  // [vocab.size() x dim], row 0 = unknown (zeros)
  Index dim() const { return table.dim(1); }
};

// word2vec text format: optional "count dim" header, then "token v1 .. vd".
// Duplicate tokens keep the first occurrence (with a warning to stderr).
Embeddings load_embeddings(const std::string& path);
void write_embeddings(const std::string& path, const Vocab& vocab, const Tensor& table);

// One word per line; used both for lexicon files and as plain word lists.
std::vector<std::string> read_word_list(const std::string& path);
void write_word_list(const std::string& path, std::span<const std::string> words);

// Completes the final character's bigram (c_M, sentinel).
inline constexpr std::string_view kBigramSentinel = "</s>";
// Lookup keys for the M bigrams of a sentence.
std::vector<std::string> bigram_keys(const std::u32string& chars);

// ---- synthetic corpus ------------------------------------------------
// Desk-scale stand-in for the licensed benchmarks. Entity surfaces are drawn
// from the generated lexicon and filler characters reuse the lexicon's
// character distribution, so span boundaries cannot be read off single
// characters; the matched-word tokens carry the boundary evidence.

struct SyntheticSpec {
  int alphabet_size = 60;
  int lexicon_words = 40;
  int min_word_len = 2;
  int max_word_len = 4;
  int min_sentence_len = 8;
  int max_sentence_len = 16;
  double entity_density = 0.35;
  Index d_char = 50;
  Index d_bigram = 50;
  Index d_word = 50;
  std::vector<std::string> labels = {"PER", "LOC", "ORG"};
};

struct SyntheticSizes {
  int train = 20;
  int dev = 5;
  int test = 5;
};

struct SyntheticData {
  Corpus train, dev, test;
  std::vector<std::string> lexicon;
  Embeddings chars, bigrams, words;
};

SyntheticData generate_synthetic(std::uint64_t seed, SyntheticSizes sizes,
                                 const SyntheticSpec& spec = {});

}  // namespace plte
