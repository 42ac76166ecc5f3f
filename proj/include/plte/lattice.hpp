#pragma once

#include "plte/data.hpp"
#include "plte/types.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace plte {

// Lattice element e_{p:q}: 1-based inclusive character span. p == q iff the
// element is a single character.
struct Span {
  int p = 0;
  int q = 0;
  bool single() const { return p == q; }
  int length() const { return q - p + 1; }
  auto operator<=>(const Span&) const = default;
};

// Relative position relations between two spans a = e_{p:q}, b = e_{k:l}:
//   r1  b immediately follows a        (k == q+1)
//   r2  b immediately precedes a       (l == p-1)
//   r3  partial overlap, either side   (p < k <= q < l  or  k < p <= l < q)
//   r4  a properly contains b
//   r5  identical spans
//   r6  a properly contained in b
//   r7  disjoint and non-adjacent      (k > q+1  or  l < p-1)
// The eighth ID marks interaction with the shared pivot node and never
// appears between two real spans.
enum class RelationId : std::uint8_t {
  r1 = 1,
  r2 = 2,
  r3 = 3,
  r4 = 4,
  r5 = 5,
  r6 = 6,
  r7 = 7,
  pivot = 8,
};

RelationId relation(Span a, Span b);
// relation(a, b) == mirror(relation(b, a)): swaps r1/r2 and r4/r6.
RelationId mirror(RelationId r);
const char* relation_name(RelationId r);

// Trie over codepoints. Each stored word carries a stable word-vocabulary
// ID; insertion is idempotent and words shorter than 2 characters are
// rejected (single characters are already lattice tokens). A plain trie
// scan is enough at desk scale; Aho-Corasick would be the optimization seam
// if lexicons ever grow hot.
class Lexicon {
 public:
  struct Match {
    Span span;
    Index word_id;
  };

  void insert(const std::u32string& word, Index word_id);
  bool contains(const std::u32string& word) const;
  std::size_t size() const { return n_words_; }
  bool empty() const { return n_words_ == 0; }

  // All lexicon words matching a contiguous character subsequence, each
  // exactly once, sorted by (p, q).
  std::vector<Match> match(const std::u32string& sentence) const;

 private:
  struct Node {
    std::map<char32_t, int> next;
    Index word_id = -1;  // >= 0 marks a stored word
  };
  std::vector<Node> nodes_ = {Node{}};
  std::size_t n_words_ = 0;
};

// Words get IDs 1..n in sorted surface order (the canonical ordering makes
// the lattice independent of input order). Empty input is legal but warns:
// the model degrades to character-only.
Lexicon build_lexicon(std::span<const std::string> words);
// Lexicon over a word vocabulary (IDs = vocabulary IDs); entries shorter
// than two characters are skipped.
Lexicon lexicon_from_vocab(const Vocab& words);

struct WordToken {
  Span span;
  Index word_id;
};

// Linearized token sequence T: the M characters in sentence order followed
// by the matched words sorted by (p, q). A word's position is the position
// of its first character.
struct LatticeSequence {
  std::u32string chars;
  std::vector<Index> char_ids;    // M entries
  std::vector<Index> bigram_ids;  // M entries; the last pairs c_M with the sentinel
  std::vector<WordToken> words;
  std::vector<Index> positions;  // N entries, 1-based

  Index char_count() const { return static_cast<Index>(chars.size()); }
  Index token_count() const { return static_cast<Index>(positions.size()); }
  // Span of token i (0-based over t_1..t_N).
  Span token_span(Index i) const;
  std::string token_text(Index i) const;
};

std::vector<Lexicon::Match> match_words(const std::u32string& sentence, const Lexicon& lexicon);

LatticeSequence build_lattice(const std::u32string& sentence, const Lexicon& lexicon,
                              const Vocab& char_vocab, const Vocab& bigram_vocab);

using RelationGrid = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// L[i][j] = relation(span(t_i), span(t_j)); the neighbor mask is true where
// the relation is r1..r6 (every diagonal entry is r5, so each token sees at
// least itself).
struct RelationMatrix {
  RelationGrid ids;        // values 1..7
  BoolArr neighbor_mask;   // ids != r7

  Index size() const { return ids.rows(); }
  RelationId at(Index i, Index j) const { return static_cast<RelationId>(ids(i, j)); }
};

RelationMatrix build_relation_matrix(const LatticeSequence& lat);

}  // namespace plte
