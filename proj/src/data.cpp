#include "plte/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace plte {

// ---- UTF-8 -----------------------------------------------------------

std::u32string utf8_decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char b0 = static_cast<unsigned char>(s[i]);
    char32_t cp = 0;
    std::size_t len = 0;
    if (b0 < 0x80) {
      cp = b0;
      len = 1;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      len = 2;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      len = 3;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      len = 4;
    } else {
      throw std::runtime_error("utf8_decode: invalid lead byte at offset " + std::to_string(i));
    }
    require(i + len <= s.size(), "utf8_decode: truncated sequence at offset " + std::to_string(i));
    for (std::size_t k = 1; k < len; ++k) {
      unsigned char b = static_cast<unsigned char>(s[i + k]);
      require((b & 0xC0) == 0x80,
              "utf8_decode: invalid continuation byte at offset " + std::to_string(i + k));
      cp = (cp << 6) | (b & 0x3F);
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string utf8_encode(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return out;
}

std::string utf8_encode(std::u32string_view s) {
  std::string out;
  for (char32_t cp : s) out += utf8_encode(cp);
  return out;
}

// ---- Vocab -----------------------------------------------------------

Index Vocab::add(const std::string& surface) {
  auto it = ids_.find(surface);
  if (it != ids_.end()) return it->second;
  Index id = static_cast<Index>(surfaces_.size());
  surfaces_.push_back(surface);
  ids_.emplace(surface, id);
  return id;
}

Index Vocab::lookup(const std::string& surface) const {
  auto it = ids_.find(surface);
  return it == ids_.end() ? kUnknown : it->second;
}

bool Vocab::contains(const std::string& surface) const { return ids_.contains(surface); }

const std::string& Vocab::surface(Index id) const {
  require(id >= 1 && id < size(), "Vocab::surface: id " + std::to_string(id) + " out of range");
  return surfaces_[static_cast<std::size_t>(id)];
}

std::span<const std::string> Vocab::entries() const {
  return {surfaces_.data() + 1, surfaces_.size() - 1};
}

Vocab build_vocab(std::span<const std::string> items, int min_freq) {
  std::unordered_map<std::string, int> counts;
  for (const auto& s : items) ++counts[s];
  Vocab v;
  for (const auto& s : items) {
    if (counts[s] >= min_freq) v.add(s);
  }
  return v;
}

// ---- tag schemes -----------------------------------------------------

TagScheme tag_scheme_from_string(const std::string& name) {
  if (name == "bio" || name == "BIO") return TagScheme::BIO;
  if (name == "bioes" || name == "BIOES") return TagScheme::BIOES;
  throw std::runtime_error("unknown tag scheme '" + name + "' (expected bio or bioes)");
}

std::string to_string(TagScheme scheme) {
  return scheme == TagScheme::BIO ? "bio" : "bioes";
}

bool tag_valid(const std::string& tag, TagScheme scheme) {
  if (tag == "O") return true;
  if (tag.size() < 3 || tag[1] != '-') return false;
  char p = tag[0];
  if (scheme == TagScheme::BIO) return p == 'B' || p == 'I';
  return p == 'B' || p == 'I' || p == 'E' || p == 'S';
}

std::vector<Entity> extract_entities(std::span<const std::string> tags, TagScheme scheme) {
  std::vector<Entity> out;
  const int n = static_cast<int>(tags.size());
  auto prefix = [&](int i) { return tags[static_cast<std::size_t>(i)].empty() ? '?' : tags[static_cast<std::size_t>(i)][0]; };
  auto label = [&](int i) {
    const std::string& t = tags[static_cast<std::size_t>(i)];
    return t.size() >= 3 && t[1] == '-' ? t.substr(2) : std::string();
  };
  int i = 0;
  while (i < n) {
    if (scheme == TagScheme::BIOES && prefix(i) == 'S' && !label(i).empty()) {
      out.push_back({i + 1, i + 1, label(i)});
      ++i;
      continue;
    }
    if (prefix(i) == 'B' && !label(i).empty()) {
      const std::string lab = label(i);
      int j = i + 1;
      while (j < n && prefix(j) == 'I' && label(j) == lab) ++j;
      if (scheme == TagScheme::BIO) {
        out.push_back({i + 1, j, lab});
        i = j;
        continue;
      }
      if (j < n && prefix(j) == 'E' && label(j) == lab) {
        out.push_back({i + 1, j + 1, lab});
        i = j + 1;
        continue;
      }
      // broken run: drop the candidate, resume at the offending tag
      i = j;
      continue;
    }
    ++i;
  }
  return out;
}

std::vector<std::string> entities_to_tags(std::span<const Entity> entities, int length,
                                          TagScheme scheme) {
  std::vector<std::string> tags(static_cast<std::size_t>(length), "O");
  for (const Entity& e : entities) {
    require(e.start >= 1 && e.end <= length && e.start <= e.end,
            "entities_to_tags: span out of range");
    if (scheme == TagScheme::BIOES && e.start == e.end) {
      tags[static_cast<std::size_t>(e.start - 1)] = "S-" + e.label;
      continue;
    }
    for (int i = e.start; i <= e.end; ++i) {
      std::string p = "I-";
      if (i == e.start) p = "B-";
      else if (i == e.end && scheme == TagScheme::BIOES) p = "E-";
      tags[static_cast<std::size_t>(i - 1)] = p + e.label;
    }
  }
  return tags;
}

// ---- CoNLL -----------------------------------------------------------

namespace {

Corpus read_conll_impl(const std::string& path, const TagScheme* scheme) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "read_conll: cannot open '" + path + "'");
  Corpus corpus;
  TaggedSentence cur;
  std::string line;
  int lineno = 0;
  auto flush = [&] {
    if (!cur.chars.empty()) {
      corpus.push_back(std::move(cur));
      cur = {};
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    std::size_t sep = line.find_first_of(" \t");
    require(sep != std::string::npos,
            "read_conll: " + path + ":" + std::to_string(lineno) + ": missing tag field");
    std::string tok = line.substr(0, sep);
    std::size_t tag_at = line.find_first_not_of(" \t", sep);
    require(tag_at != std::string::npos,
            "read_conll: " + path + ":" + std::to_string(lineno) + ": missing tag field");
    std::string tag = line.substr(tag_at);
    std::u32string cps = utf8_decode(tok);
    require(cps.size() == 1, "read_conll: " + path + ":" + std::to_string(lineno) +
                                 ": token '" + tok + "' is not a single character");
    if (scheme != nullptr) {
      require(tag_valid(tag, *scheme), "read_conll: " + path + ":" + std::to_string(lineno) +
                                           ": tag '" + tag + "' not valid for scheme " +
                                           to_string(*scheme));
    }
    cur.chars.push_back(cps[0]);
    cur.tags.push_back(std::move(tag));
  }
  flush();
  return corpus;
}

}  // namespace

Corpus read_conll(const std::string& path) { return read_conll_impl(path, nullptr); }

Corpus read_conll(const std::string& path, TagScheme scheme) {
  return read_conll_impl(path, &scheme);
}

void write_conll(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "write_conll: cannot open '" + path + "'");
  for (const TaggedSentence& s : corpus) {
    for (std::size_t i = 0; i < s.chars.size(); ++i)
      out << utf8_encode(s.chars[i]) << '\t' << s.tags[i] << '\n';
    out << '\n';
  }
}

// ---- embeddings ------------------------------------------------------

Embeddings load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "load_embeddings: cannot open '" + path + "'");
  std::string line;
  int lineno = 0;
  Index dim = -1;
  std::vector<std::pair<std::string, std::vector<Scalar>>> rows;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    std::vector<Scalar> vals;
    Scalar v;
    while (ss >> v) vals.push_back(v);
    if (first) {
      first = false;
      // "count dim" header: the first field parses as an integer and exactly
      // one number follows
      char* endp = nullptr;
      long cnt = std::strtol(tok.c_str(), &endp, 10);
      if (endp != nullptr && *endp == '\0' && vals.size() == 1 && cnt >= 0) {
        dim = static_cast<Index>(vals[0]);
        require(dim >= 1, "load_embeddings: " + path + ":1: bad dimension in header");
        continue;
      }
    }
    require(!vals.empty(), "load_embeddings: " + path + ":" + std::to_string(lineno) +
                               ": no values for token '" + tok + "'");
    if (dim < 0) dim = static_cast<Index>(vals.size());
    require(static_cast<Index>(vals.size()) == dim,
            "load_embeddings: " + path + ":" + std::to_string(lineno) + ": expected " +
                std::to_string(dim) + " values, got " + std::to_string(vals.size()));
    rows.emplace_back(std::move(tok), std::move(vals));
  }
  require(dim >= 1, "load_embeddings: '" + path + "' holds no vectors");
  Embeddings emb;
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (emb.vocab.contains(rows[r].first)) {
      std::cerr << "load_embeddings: duplicate token '" << rows[r].first
                << "' in " << path << ", keeping first\n";
      continue;
    }
    emb.vocab.add(rows[r].first);
    keep.push_back(r);
  }
  Mat table = Mat::Zero(static_cast<Index>(keep.size()) + 1, dim);
  for (std::size_t k = 0; k < keep.size(); ++k)
    for (Index j = 0; j < dim; ++j)
      table(static_cast<Index>(k) + 1, j) = rows[keep[k]].second[static_cast<std::size_t>(j)];
  emb.table = Tensor::from_matrix(table);
  return emb;
}

void write_embeddings(const std::string& path, const Vocab& vocab, const Tensor& table) {
  require(table.rank() == 2 && table.dim(0) == vocab.size(),
          "write_embeddings: table rows must match vocab size");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "write_embeddings: cannot open '" + path + "'");
  out << vocab.size() - 1 << ' ' << table.dim(1) << '\n';
  auto tm = table.mat();
  char buf[64];
  for (Index id = 1; id < vocab.size(); ++id) {
    out << vocab.surface(id);
    for (Index j = 0; j < table.dim(1); ++j) {
      std::snprintf(buf, sizeof buf, " %.6f", tm(id, j));
      out << buf;
    }
    out << '\n';
  }
}

std::vector<std::string> read_word_list(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "read_word_list: cannot open '" + path + "'");
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t sep = line.find_first_of(" \t");
    words.push_back(sep == std::string::npos ? line : line.substr(0, sep));
  }
  return words;
}

void write_word_list(const std::string& path, std::span<const std::string> words) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "write_word_list: cannot open '" + path + "'");
  for (const auto& w : words) out << w << '\n';
}

std::vector<std::string> bigram_keys(const std::u32string& chars) {
  std::vector<std::string> keys;
  keys.reserve(chars.size());
  for (std::size_t i = 0; i < chars.size(); ++i) {
    std::string k = utf8_encode(chars[i]);
    if (i + 1 < chars.size()) {
      k += utf8_encode(chars[i + 1]);
    } else {
      k += kBigramSentinel;
    }
    keys.push_back(std::move(k));
  }
  return keys;
}

// ---- synthetic corpus ------------------------------------------------

namespace {

Embeddings random_embeddings(const std::vector<std::string>& surfaces, Index dim, Rng& rng) {
  Embeddings emb;
  for (const auto& s : surfaces) emb.vocab.add(s);
  std::uniform_real_distribution<Scalar> dist(-0.1, 0.1);
  Mat table = Mat::Zero(emb.vocab.size(), dim);
  for (Index i = 1; i < table.rows(); ++i)
    for (Index j = 0; j < dim; ++j) table(i, j) = dist(rng);
  emb.table = Tensor::from_matrix(table);
  return emb;
}

}  // namespace

SyntheticData generate_synthetic(std::uint64_t seed, SyntheticSizes sizes,
                                 const SyntheticSpec& spec) {
  require(sizes.train >= 1 && sizes.dev >= 0 && sizes.test >= 0,
          "generate_synthetic: sizes must be >= 1 train sentence");
  require(spec.min_word_len >= 2, "generate_synthetic: lexicon words need length >= 2");
  Rng rng(seed);

  std::vector<char32_t> alphabet;
  for (int i = 0; i < spec.alphabet_size; ++i)
    alphabet.push_back(static_cast<char32_t>(0x4E00 + i));
  std::uniform_int_distribution<std::size_t> pick_char(0, alphabet.size() - 1);

  // lexicon with a fixed label per word
  std::set<std::u32string> seen;
  std::vector<std::u32string> words;
  std::vector<std::string> word_labels;
  std::uniform_int_distribution<int> pick_len(spec.min_word_len, spec.max_word_len);
  std::uniform_int_distribution<std::size_t> pick_label(0, spec.labels.size() - 1);
  while (static_cast<int>(words.size()) < spec.lexicon_words) {
    int len = pick_len(rng);
    std::u32string w;
    for (int k = 0; k < len; ++k) w.push_back(alphabet[pick_char(rng)]);
    if (!seen.insert(w).second) continue;
    words.push_back(w);
    word_labels.push_back(spec.labels[pick_label(rng)]);
  }

  // filler characters reuse the lexicon's character distribution
  std::u32string lexicon_chars;
  for (const auto& w : words) lexicon_chars += w;
  std::uniform_int_distribution<std::size_t> pick_filler(0, lexicon_chars.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_word(0, words.size() - 1);
  std::uniform_int_distribution<int> pick_slen(spec.min_sentence_len, spec.max_sentence_len);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  auto gen_sentence = [&]() {
    TaggedSentence s;
    int target = pick_slen(rng);
    bool has_entity = false;
    while (static_cast<int>(s.chars.size()) < target) {
      int room = target - static_cast<int>(s.chars.size());
      if (room >= spec.min_word_len && coin(rng) < spec.entity_density) {
        std::size_t wi = pick_word(rng);
        if (static_cast<int>(words[wi].size()) <= room) {
          s.chars += words[wi];
          int len = static_cast<int>(words[wi].size());
          Entity e{1, len, word_labels[wi]};
          auto tags = entities_to_tags(std::span(&e, 1), len, TagScheme::BIOES);
          for (auto& t : tags) s.tags.push_back(std::move(t));
          has_entity = true;
          continue;
        }
      }
      s.chars.push_back(lexicon_chars[pick_filler(rng)]);
      s.tags.push_back("O");
    }
    return std::pair(std::move(s), has_entity);
  };

  auto gen_split = [&](int count) {
    Corpus c;
    while (static_cast<int>(c.size()) < count) {
      auto [s, has_entity] = gen_sentence();
      if (!has_entity) continue;  // keep every sentence informative
      c.push_back(std::move(s));
    }
    return c;
  };

  SyntheticData data;
  data.train = gen_split(sizes.train);
  data.dev = gen_split(sizes.dev);
  data.test = gen_split(sizes.test);
  for (const auto& w : words) data.lexicon.push_back(utf8_encode(w));
  std::sort(data.lexicon.begin(), data.lexicon.end());

  std::vector<std::string> char_surfaces;
  for (char32_t c : alphabet) char_surfaces.push_back(utf8_encode(c));
  data.chars = random_embeddings(char_surfaces, spec.d_char, rng);

  std::vector<std::string> bigram_surfaces;
  std::set<std::string> bigram_seen;
  for (const Corpus* c : {&data.train, &data.dev, &data.test}) {
    for (const TaggedSentence& s : *c) {
      for (auto& k : bigram_keys(s.chars)) {
        if (bigram_seen.insert(k).second) bigram_surfaces.push_back(k);
      }
    }
  }
  std::sort(bigram_surfaces.begin(), bigram_surfaces.end());
  data.bigrams = random_embeddings(bigram_surfaces, spec.d_bigram, rng);

  data.words = random_embeddings(data.lexicon, spec.d_word, rng);
  return data;
}

}  // namespace plte
