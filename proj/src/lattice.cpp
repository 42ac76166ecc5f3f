#include "plte/lattice.hpp"

#include <algorithm>
#include <iostream>
#include <set>

namespace plte {

RelationId relation(Span a, Span b) {
  if (a == b) return RelationId::r5;
  if (b.p == a.q + 1) return RelationId::r1;
  if (b.q == a.p - 1) return RelationId::r2;
  if (b.p > a.q + 1 || b.q < a.p - 1) return RelationId::r7;
  if (a.p <= b.p && b.q <= a.q) return RelationId::r4;
  if (b.p <= a.p && a.q <= b.q) return RelationId::r6;
  return RelationId::r3;
}

RelationId mirror(RelationId r) {
  switch (r) {
    case RelationId::r1: return RelationId::r2;
    case RelationId::r2: return RelationId::r1;
    case RelationId::r4: return RelationId::r6;
    case RelationId::r6: return RelationId::r4;
    default: return r;
  }
}

const char* relation_name(RelationId r) {
  static const char* names[] = {"r1", "r2", "r3", "r4", "r5", "r6", "r7", "r8"};
  return names[static_cast<int>(r) - 1];
}

// ---- Lexicon ---------------------------------------------------------

void Lexicon::insert(const std::u32string& word, Index word_id) {
  require(word.size() >= 2, "Lexicon::insert: word '" + utf8_encode(word) +
                                "' is shorter than 2 characters");
  require(word_id >= 0, "Lexicon::insert: negative word id");
  int at = 0;
  for (char32_t c : word) {
    auto it = nodes_[static_cast<std::size_t>(at)].next.find(c);
    if (it == nodes_[static_cast<std::size_t>(at)].next.end()) {
      nodes_.push_back(Node{});
      int fresh = static_cast<int>(nodes_.size()) - 1;
      nodes_[static_cast<std::size_t>(at)].next.emplace(c, fresh);
      at = fresh;
    } else {
      at = it->second;
    }
  }
  Node& terminal = nodes_[static_cast<std::size_t>(at)];
  if (terminal.word_id < 0) {
    terminal.word_id = word_id;
    ++n_words_;
  }
}

bool Lexicon::contains(const std::u32string& word) const {
  int at = 0;
  for (char32_t c : word) {
    auto it = nodes_[static_cast<std::size_t>(at)].next.find(c);
    if (it == nodes_[static_cast<std::size_t>(at)].next.end()) return false;
    at = it->second;
  }
  return nodes_[static_cast<std::size_t>(at)].word_id >= 0;
}

std::vector<Lexicon::Match> Lexicon::match(const std::u32string& sentence) const {
  std::vector<Match> out;
  const int m = static_cast<int>(sentence.size());
  for (int p = 0; p < m; ++p) {
    int at = 0;
    for (int q = p; q < m; ++q) {
      auto it = nodes_[static_cast<std::size_t>(at)].next.find(sentence[static_cast<std::size_t>(q)]);
      if (it == nodes_[static_cast<std::size_t>(at)].next.end()) break;
      at = it->second;
      if (nodes_[static_cast<std::size_t>(at)].word_id >= 0 && q > p) {
        out.push_back({{p + 1, q + 1}, nodes_[static_cast<std::size_t>(at)].word_id});
      }
    }
  }
  return out;  // (p, q) order falls out of the scan
}

Lexicon build_lexicon(std::span<const std::string> words) {
  if (words.empty()) {
    std::cerr << "build_lexicon: empty word set, model degrades to character-only\n";
    return Lexicon{};
  }
  std::vector<std::u32string> decoded;
  decoded.reserve(words.size());
  for (const auto& w : words) {
    std::u32string u = utf8_decode(w);
    require(u.size() >= 2, "build_lexicon: word '" + w + "' is shorter than 2 characters");
    decoded.push_back(std::move(u));
  }
  std::sort(decoded.begin(), decoded.end());
  decoded.erase(std::unique(decoded.begin(), decoded.end()), decoded.end());
  Lexicon lex;
  for (std::size_t i = 0; i < decoded.size(); ++i)
    lex.insert(decoded[i], static_cast<Index>(i) + 1);
  return lex;
}

Lexicon lexicon_from_vocab(const Vocab& words) {
  Lexicon lex;
  for (Index id = 1; id < words.size(); ++id) {
    std::u32string u = utf8_decode(words.surface(id));
    if (u.size() >= 2) lex.insert(u, id);
  }
  return lex;
}

// ---- lattice ---------------------------------------------------------

Span LatticeSequence::token_span(Index i) const {
  const Index m = char_count();
  if (i < m) {
    int c = static_cast<int>(i) + 1;
    return {c, c};
  }
  return words[static_cast<std::size_t>(i - m)].span;
}

std::string LatticeSequence::token_text(Index i) const {
  Span s = token_span(i);
  return utf8_encode(std::u32string_view(chars).substr(static_cast<std::size_t>(s.p - 1),
                                                       static_cast<std::size_t>(s.length())));
}

std::vector<Lexicon::Match> match_words(const std::u32string& sentence, const Lexicon& lexicon) {
  require(!sentence.empty(), "match_words: empty sentence");
  return lexicon.match(sentence);
}

LatticeSequence build_lattice(const std::u32string& sentence, const Lexicon& lexicon,
                              const Vocab& char_vocab, const Vocab& bigram_vocab) {
  require(!sentence.empty(), "build_lattice: empty sentence");
  LatticeSequence lat;
  lat.chars = sentence;
  for (char32_t c : sentence) lat.char_ids.push_back(char_vocab.lookup(utf8_encode(c)));
  for (const auto& key : bigram_keys(sentence)) lat.bigram_ids.push_back(bigram_vocab.lookup(key));
  for (const auto& m : match_words(sentence, lexicon)) lat.words.push_back({m.span, m.word_id});
  const Index m = lat.char_count();
  for (Index i = 0; i < m; ++i) lat.positions.push_back(i + 1);
  for (const auto& w : lat.words) lat.positions.push_back(w.span.p);
  return lat;
}

RelationMatrix build_relation_matrix(const LatticeSequence& lat) {
  const Index n = lat.token_count();
  RelationMatrix rel;
  rel.ids.resize(n, n);
  rel.neighbor_mask.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    Span a = lat.token_span(i);
    for (Index j = 0; j < n; ++j) {
      RelationId r = relation(a, lat.token_span(j));
      rel.ids(i, j) = static_cast<std::uint8_t>(r);
      rel.neighbor_mask(i, j) = r != RelationId::r7;
    }
  }
  return rel;
}

}  // namespace plte
