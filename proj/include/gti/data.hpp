#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gti/errors.hpp"
#include "gti/rng.hpp"
#include "gti/tensor.hpp"

namespace gti {

// ----- raw corpus -----

struct RawSentence {
  std::vector<std::string> tokens;
  std::vector<std::vector<std::string>> columns;  // columns[c][i], tag column c
};

// Whitespace-separated columns, blank line between sentences,
// -DOCSTART- lines skipped. Exactly n_columns fields per line
// (token + n_columns-1 tag columns).
inline std::vector<RawSentence> parse_conll(std::istream& in, std::size_t n_columns,
                                            const std::string& source = "<stream>") {
  if (n_columns == 0) throw ArgumentError("parse_conll: n_columns must be positive");
  std::vector<RawSentence> out;
  RawSentence cur;
  cur.columns.resize(n_columns - 1);
  auto flush = [&] {
    if (!cur.tokens.empty()) {
      out.push_back(std::move(cur));
      cur = RawSentence{};
      cur.columns.resize(n_columns - 1);
    }
  };
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::vector<std::string> f;
    std::string w;
    while (fields >> w) f.push_back(w);
    if (f.empty()) {
      flush();
      continue;
    }
    if (f[0] == "-DOCSTART-") continue;
    if (f.size() != n_columns)
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(n_columns) + " columns, got " +
                       std::to_string(f.size()));
    cur.tokens.push_back(f[0]);
    for (std::size_t c = 1; c < n_columns; ++c) cur.columns[c - 1].push_back(f[c]);
  }
  flush();
  return out;
}

inline std::vector<RawSentence> parse_conll_file(const std::string& path,
                                                 std::size_t n_columns) {
  std::ifstream in(path);
  if (!in) throw DataNotFoundError("cannot open data file '" + path + "'");
  return parse_conll(in, n_columns, path);
}

// Column layout per corpus format; first file column is the token.
inline std::vector<std::string> format_columns(const std::string& data_format) {
  if (data_format == "conll2000") return {"pos", "chunk"};
  if (data_format == "conll2003") return {"pos", "chunk", "ner"};
  throw ArgumentError("unknown data format '" + data_format +
                      "' (expected conll2000 or conll2003)");
}

inline bool column_is_span(const std::string& name) {
  return name == "chunk" || name == "ner";
}

// ----- IOB -> IOBES -----

struct TagSpan {
  std::string type;
  std::size_t begin = 0;  // inclusive
  std::size_t end = 0;    // inclusive

  friend bool operator==(const TagSpan& a, const TagSpan& b) {
    return a.type == b.type && a.begin == b.begin && a.end == b.end;
  }
  friend bool operator<(const TagSpan& a, const TagSpan& b) {
    if (a.begin != b.begin) return a.begin < b.begin;
    if (a.end != b.end) return a.end < b.end;
    return a.type < b.type;
  }
};

// Spans of an IOB1/IOB2 sequence. Orphan I-X (no live X span to
// continue) opens a fresh span; the repair is noted, never fatal.
inline std::vector<TagSpan> iob_spans(const std::vector<std::string>& tags,
                                      std::vector<std::string>* repair_log = nullptr) {
  std::vector<TagSpan> spans;
  bool open = false;
  TagSpan cur;
  auto close = [&](std::size_t end) {
    if (open) {
      cur.end = end;
      spans.push_back(cur);
      open = false;
    }
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    if (tag == "O") {
      close(i - 1);
      continue;
    }
    if (tag.size() < 3 || tag[1] != '-' || (tag[0] != 'B' && tag[0] != 'I'))
      throw ParseError("not an IOB tag: '" + tag + "' at position " + std::to_string(i));
    std::string type = tag.substr(2);
    if (tag[0] == 'B') {
      close(i - 1);
      cur = TagSpan{type, i, i};
      open = true;
    } else {  // I
      if (open && cur.type == type) continue;
      if (repair_log)
        repair_log->push_back("position " + std::to_string(i) + ": I-" + type +
                              " without opener, treated as B-" + type);
      close(i - 1);
      cur = TagSpan{type, i, i};
      open = true;
    }
  }
  close(tags.empty() ? 0 : tags.size() - 1);
  return spans;
}

inline std::vector<std::string> to_iobes(const std::vector<std::string>& tags,
                                         std::vector<std::string>* repair_log = nullptr) {
  std::vector<TagSpan> spans = iob_spans(tags, repair_log);
  std::vector<std::string> out(tags.size(), "O");
  for (const TagSpan& s : spans) {
    if (s.begin == s.end) {
      out[s.begin] = "S-" + s.type;
    } else {
      out[s.begin] = "B-" + s.type;
      for (std::size_t i = s.begin + 1; i < s.end; ++i) out[i] = "I-" + s.type;
      out[s.end] = "E-" + s.type;
    }
  }
  return out;
}

// ----- word format feature -----

// Fixed 7-way surface-shape classifier; one-hot embedded downstream.
enum class WordFormat : int {
  kNumeric = 0,
  kPunct = 1,
  kAllLower = 2,
  kAllUpper = 3,
  kInitUpper = 4,
  kAlnumMixed = 5,
  kOther = 6,
};
constexpr std::size_t kNumWordFormats = 7;

inline WordFormat classify_word_format(const std::string& token) {
  if (token.empty()) throw ArgumentError("classify_word_format: empty token");
  bool has_digit = false, has_alpha = false;
  bool numericish = true, all_punct = true, all_lower = true, all_upper = true;
  for (unsigned char c : token) {
    bool digit = std::isdigit(c) != 0;
    bool alpha = std::isalpha(c) != 0;
    has_digit = has_digit || digit;
    has_alpha = has_alpha || alpha;
    if (!(digit || c == '.' || c == ',' || c == '-')) numericish = false;
    if (!std::ispunct(c)) all_punct = false;
    if (!(alpha && std::islower(c))) all_lower = false;
    if (!(alpha && std::isupper(c))) all_upper = false;
  }
  if (numericish && has_digit) return WordFormat::kNumeric;
  if (all_punct) return WordFormat::kPunct;
  if (all_lower) return WordFormat::kAllLower;
  if (all_upper) return WordFormat::kAllUpper;
  if (has_alpha && std::isupper(static_cast<unsigned char>(token[0])) != 0) {
    bool rest_lower = true;
    for (std::size_t i = 1; i < token.size(); ++i) {
      unsigned char c = static_cast<unsigned char>(token[i]);
      if (!(std::isalpha(c) && std::islower(c))) rest_lower = false;
    }
    if (rest_lower) return WordFormat::kInitUpper;
  }
  if (has_alpha && has_digit) return WordFormat::kAlnumMixed;
  return WordFormat::kOther;
}

// ----- vocabularies -----

constexpr int kPadId = 0;
constexpr int kUnkId = 1;

// Open vocabularies reserve PAD/UNK; tag vocabularies are closed and
// dense (ids are CRF states).
struct Vocab {
  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> token_to_id;
  bool open = true;

  static Vocab open_vocab() {
    Vocab v;
    v.open = true;
    v.add("<PAD>");
    v.add("<UNK>");
    return v;
  }
  static Vocab closed_vocab() {
    Vocab v;
    v.open = false;
    return v;
  }

  int add(const std::string& token) {
    auto it = token_to_id.find(token);
    if (it != token_to_id.end()) return it->second;
    int id = static_cast<int>(id_to_token.size());
    id_to_token.push_back(token);
    token_to_id.emplace(token, id);
    return id;
  }

  int lookup(const std::string& token) const {
    auto it = token_to_id.find(token);
    if (it != token_to_id.end()) return it->second;
    if (open) return kUnkId;
    throw LookupError("tag '" + token + "' not in inventory");
  }

  bool contains(const std::string& token) const { return token_to_id.count(token) > 0; }
  std::size_t size() const { return id_to_token.size(); }
  const std::string& name(std::size_t id) const { return id_to_token[id]; }
};

inline std::string normalize_digits(const std::string& token) {
  std::string out = token;
  for (char& c : out)
    if (std::isdigit(static_cast<unsigned char>(c))) c = '0';
  return out;
}

// ----- pretrained embeddings -----

struct EmbeddingLoadStats {
  std::size_t dim = 0;
  std::size_t found_exact = 0;
  std::size_t found_folded = 0;
  std::size_t oov = 0;
};

inline std::string lower_ascii(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// One pass over "token v1 .. vd" lines. Exact surface match first,
// then case-folded; leftover rows are drawn from uniform(-0.25, 0.25).
// PAD stays zero. The resulting table is meant to be frozen.
inline Tensor load_pretrained_embeddings(std::istream& in, const Vocab& words,
                                         std::uint64_t seed,
                                         EmbeddingLoadStats* stats = nullptr,
                                         const std::string& source = "<stream>") {
  std::unordered_set<std::string> want_exact;
  std::unordered_set<std::string> want_folded;
  for (const std::string& t : words.id_to_token) {
    want_exact.insert(t);
    want_folded.insert(lower_ascii(t));
  }
  std::unordered_map<std::string, std::vector<double>> exact, folded;
  std::string line;
  std::size_t dim = 0, line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string token;
    fields >> token;
    std::vector<double> vec;
    std::string v;
    while (fields >> v) {
      try {
        vec.push_back(std::stod(v));
      } catch (const std::exception&) {
        throw FormatError(source + ":" + std::to_string(line_no) +
                          ": bad float '" + v + "'");
      }
    }
    if (vec.empty())
      throw FormatError(source + ":" + std::to_string(line_no) + ": no values");
    if (dim == 0) dim = vec.size();
    if (vec.size() != dim)
      throw FormatError(source + ":" + std::to_string(line_no) + ": dimension " +
                        std::to_string(vec.size()) + " != " + std::to_string(dim));
    if (want_exact.count(token) && !exact.count(token)) exact.emplace(token, vec);
    std::string lt = lower_ascii(token);
    if (want_folded.count(lt) && !folded.count(lt)) folded.emplace(lt, std::move(vec));
  }
  if (dim == 0) throw FormatError(source + ": no embedding rows");

  Tensor table(words.size(), dim);
  std::mt19937_64 rng(seed);
  EmbeddingLoadStats st;
  st.dim = dim;
  for (std::size_t id = 0; id < words.size(); ++id) {
    const std::string& token = words.id_to_token[id];
    if (id == static_cast<std::size_t>(kPadId)) continue;  // PAD row stays zero
    auto ex = exact.find(token);
    if (ex != exact.end()) {
      for (std::size_t j = 0; j < dim; ++j) table.at(id, j) = ex->second[j];
      ++st.found_exact;
      continue;
    }
    auto fo = folded.find(lower_ascii(token));
    if (fo != folded.end()) {
      for (std::size_t j = 0; j < dim; ++j) table.at(id, j) = fo->second[j];
      ++st.found_folded;
      continue;
    }
    for (std::size_t j = 0; j < dim; ++j) table.at(id, j) = uniform(rng, -0.25, 0.25);
    ++st.oov;
  }
  if (stats) *stats = st;
  return table;
}

inline Tensor load_pretrained_embeddings_file(const std::string& path, const Vocab& words,
                                              std::uint64_t seed,
                                              EmbeddingLoadStats* stats = nullptr) {
  std::ifstream in(path);
  if (!in) throw DataNotFoundError("cannot open embeddings file '" + path + "'");
  return load_pretrained_embeddings(in, words, seed, stats, path);
}

// ----- encoded sentences and batches -----

struct EncodedSentence {
  std::vector<int> word_ids;
  std::vector<std::vector<int>> char_ids;  // per token
  std::vector<int> format_ids;
  std::vector<std::vector<int>> tags;  // [task][token]; aux tasks first, main last

  std::size_t size() const { return word_ids.size(); }
};

// Deterministic Fisher-Yates; std::shuffle is not pinned by the standard.
template <typename T>
inline void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

// Seeded, disjoint, order-stable split: picks n sentences for the dev
// sample and keeps original relative order on both sides.
template <typename S>
inline std::pair<std::vector<S>, std::vector<S>> split_validation(
    const std::vector<S>& all, std::size_t n, std::uint64_t seed) {
  if (all.size() <= n)
    throw ArgumentError("split_validation: need more than " + std::to_string(n) +
                        " sentences, have " + std::to_string(all.size()));
  std::vector<std::size_t> idx(all.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  seeded_shuffle(idx, rng);
  std::vector<bool> is_dev(all.size(), false);
  for (std::size_t i = 0; i < n; ++i) is_dev[idx[i]] = true;
  std::pair<std::vector<S>, std::vector<S>> out;
  for (std::size_t i = 0; i < all.size(); ++i)
    (is_dev[i] ? out.second : out.first).push_back(all[i]);
  return out;
}

struct Batch {
  std::vector<std::size_t> indices;  // into the source dataset
  std::size_t max_len = 0;
  std::vector<std::vector<int>> word_ids;                // [b][max_len], PAD-filled
  std::vector<std::vector<std::vector<int>>> char_ids;   // padded tokens get {PAD}
  std::vector<std::vector<int>> format_ids;              // padded positions get 0
  std::vector<std::vector<std::vector<int>>> tags;       // [task][b][max_len], pad 0
  std::vector<std::vector<std::uint8_t>> mask;           // 1 marks a real token

  std::size_t rows() const { return word_ids.size(); }
  std::size_t length(std::size_t b) const {
    std::size_t n = 0;
    while (n < mask[b].size() && mask[b][n]) ++n;
    return n;
  }
};

// Seeded shuffle, then consecutive groups padded to the batch max.
// Padded positions are masked off and contribute nothing downstream.
inline std::vector<Batch> make_batches(const std::vector<EncodedSentence>& data,
                                       std::size_t batch_size, std::mt19937_64& rng) {
  if (batch_size == 0) throw ArgumentError("make_batches: batch_size must be positive");
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  seeded_shuffle(order, rng);

  std::size_t n_tasks = data.empty() ? 0 : data[0].tags.size();
  std::vector<Batch> batches;
  for (std::size_t at = 0; at < order.size(); at += batch_size) {
    Batch b;
    std::size_t end = std::min(order.size(), at + batch_size);
    for (std::size_t i = at; i < end; ++i) b.indices.push_back(order[i]);
    for (std::size_t i : b.indices) b.max_len = std::max(b.max_len, data[i].size());
    b.tags.resize(n_tasks);
    for (std::size_t r = 0; r < b.indices.size(); ++r) {
      const EncodedSentence& s = data[b.indices[r]];
      std::vector<int> w(b.max_len, kPadId), f(b.max_len, 0);
      std::vector<std::vector<int>> c(b.max_len, std::vector<int>{kPadId});
      std::vector<std::uint8_t> m(b.max_len, 0);
      for (std::size_t i = 0; i < s.size(); ++i) {
        w[i] = s.word_ids[i];
        c[i] = s.char_ids[i];
        f[i] = s.format_ids[i];
        m[i] = 1;
      }
      b.word_ids.push_back(std::move(w));
      b.char_ids.push_back(std::move(c));
      b.format_ids.push_back(std::move(f));
      b.mask.push_back(std::move(m));
      for (std::size_t task = 0; task < n_tasks; ++task) {
        std::vector<int> tg(b.max_len, 0);
        for (std::size_t i = 0; i < s.tags[task].size(); ++i) tg[i] = s.tags[task][i];
        b.tags[task].push_back(std::move(tg));
      }
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

// Unpadded view of one batch row, reconstructed through the mask.
inline EncodedSentence batch_row(const Batch& b, std::size_t r) {
  EncodedSentence s;
  std::size_t n = b.length(r);
  s.word_ids.assign(b.word_ids[r].begin(), b.word_ids[r].begin() + n);
  s.char_ids.assign(b.char_ids[r].begin(), b.char_ids[r].begin() + n);
  s.format_ids.assign(b.format_ids[r].begin(), b.format_ids[r].begin() + n);
  s.tags.resize(b.tags.size());
  for (std::size_t task = 0; task < b.tags.size(); ++task)
    s.tags[task].assign(b.tags[task][r].begin(), b.tags[task][r].begin() + n);
  return s;
}

}  // namespace gti
