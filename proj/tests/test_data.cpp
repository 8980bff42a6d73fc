#include <algorithm>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "catch2/catch_amalgamated.hpp"

#include "gti/data.hpp"
#include "gti/rng.hpp"
#include "support/synth.hpp"

using namespace gti;

namespace {

std::vector<RawSentence> parse_text(const std::string& text, std::size_t n_columns,
                                    const std::string& source = "<test>") {
  std::istringstream in(text);
  return parse_conll(in, n_columns, source);
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

EncodedSentence make_sentence(std::size_t len, int base) {
  EncodedSentence s;
  for (std::size_t i = 0; i < len; ++i) {
    int v = base + static_cast<int>(i);
    s.word_ids.push_back(v);
    s.char_ids.push_back({v, v + 1});
    s.format_ids.push_back(static_cast<int>(i % kNumWordFormats));
    }
  s.tags.resize(2);
  for (std::size_t i = 0; i < len; ++i) {
    s.tags[0].push_back(base + static_cast<int>(i) + 100);
    s.tags[1].push_back(base + static_cast<int>(i) + 200);
  }
  return s;
}

}  // namespace

TEST_CASE("conll parsing splits sentences and columns") {
  std::string text =
      "The DT B-NP\r\n"
      "cat NN I-NP\n"
      "sat VBD B-VP\n"
      "\n"
      "-DOCSTART- -X- O\n"
      "\n"
      "\n"
      "Dogs NNS B-NP\n"
      "bark VBP B-VP\n";
  auto sents = parse_text(text, 3);
  REQUIRE(sents.size() == 2);
  REQUIRE(sents[0].tokens == std::vector<std::string>{"The", "cat", "sat"});
  REQUIRE(sents[0].columns.size() == 2);
  REQUIRE(sents[0].columns[0] == std::vector<std::string>{"DT", "NN", "VBD"});
  REQUIRE(sents[0].columns[1] == std::vector<std::string>{"B-NP", "I-NP", "B-VP"});
  REQUIRE(sents[1].tokens == std::vector<std::string>{"Dogs", "bark"});
  REQUIRE(sents[1].columns[1] == std::vector<std::string>{"B-NP", "B-VP"});

  // Token-only corpora have zero tag columns.
  auto bare = parse_text("hello\nworld\n\nbye\n", 1);
  REQUIRE(bare.size() == 2);
  REQUIRE(bare[0].tokens == std::vector<std::string>{"hello", "world"});
  REQUIRE(bare[0].columns.empty());

  REQUIRE(parse_text("", 3).empty());
  REQUIRE(parse_text("\n\n\n", 3).empty());
}

TEST_CASE("conll parsing reports the offending line") {
  std::string text = "a X B-NP\nb Y\n";
  REQUIRE_THROWS_AS(parse_text(text, 3, "data.txt"), ParseError);
  std::string msg = message_of([&] { parse_text(text, 3, "data.txt"); });
  REQUIRE(msg == "data.txt:2: expected 3 columns, got 2");
  REQUIRE_THROWS_AS(parse_text("", 0), ArgumentError);
}

TEST_CASE("conll file loading round-trips and flags missing paths") {
  std::string dir = synth::temp_dir("data_parse");
  std::string path = dir + "/train.txt";
  synth::write_conll(path, synth::corpus(), true);
  auto sents = parse_conll_file(path, 4);
  REQUIRE(sents.size() == 30);
  REQUIRE(sents[0].columns.size() == 3);
  REQUIRE_THROWS_AS(parse_conll_file(dir + "/absent.txt", 4), DataNotFoundError);
}

TEST_CASE("data formats fix the column layout") {
  REQUIRE(format_columns("conll2000") == std::vector<std::string>{"pos", "chunk"});
  REQUIRE(format_columns("conll2003") ==
          std::vector<std::string>{"pos", "chunk", "ner"});
  REQUIRE_THROWS_AS(format_columns("conll9999"), ArgumentError);
  REQUIRE(column_is_span("chunk"));
  REQUIRE(column_is_span("ner"));
  REQUIRE_FALSE(column_is_span("pos"));
}

TEST_CASE("iob span extraction handles both iob variants") {
  auto spans = iob_spans({"B-PER", "I-PER", "O", "B-LOC"});
  REQUIRE(spans == std::vector<TagSpan>{{"PER", 0, 1}, {"LOC", 3, 3}});

  // IOB1 marks continuation only; orphan I-X opens a span.
  std::vector<std::string> repairs;
  spans = iob_spans({"I-PER", "I-PER", "O", "I-LOC"}, &repairs);
  REQUIRE(spans == std::vector<TagSpan>{{"PER", 0, 1}, {"LOC", 3, 3}});
  REQUIRE(repairs == std::vector<std::string>{
                         "position 0: I-PER without opener, treated as B-PER",
                         "position 3: I-LOC without opener, treated as B-LOC"});

  // Type switch closes the running span and logs the repair.
  repairs.clear();
  spans = iob_spans({"B-PER", "I-LOC"}, &repairs);
  REQUIRE(spans == std::vector<TagSpan>{{"PER", 0, 0}, {"LOC", 1, 1}});
  REQUIRE(repairs.size() == 1);

  REQUIRE(iob_spans({"B-PER", "B-PER"}) ==
          std::vector<TagSpan>{{"PER", 0, 0}, {"PER", 1, 1}});
  REQUIRE(iob_spans({"O", "B-PER", "I-PER"}) == std::vector<TagSpan>{{"PER", 1, 2}});
  REQUIRE(iob_spans({"O", "O"}).empty());
  REQUIRE(iob_spans({}).empty());

  REQUIRE_THROWS_AS(iob_spans({"B_PER"}), ParseError);
  REQUIRE_THROWS_AS(iob_spans({"I"}), ParseError);
  REQUIRE_THROWS_AS(iob_spans({"Q-X"}), ParseError);
}

TEST_CASE("iob to iobes conversion") {
  REQUIRE(to_iobes({"B-PER", "I-PER", "I-PER", "O", "B-LOC"}) ==
          std::vector<std::string>{"B-PER", "I-PER", "E-PER", "O", "S-LOC"});
  REQUIRE(to_iobes({"B-NP", "B-NP", "I-NP"}) ==
          std::vector<std::string>{"S-NP", "B-NP", "E-NP"});
  std::vector<std::string> repairs;
  REQUIRE(to_iobes({"I-ORG", "I-ORG"}, &repairs) ==
          std::vector<std::string>{"B-ORG", "E-ORG"});
  REQUIRE(repairs.size() == 1);
  REQUIRE(to_iobes({"O"}) == std::vector<std::string>{"O"});
  REQUIRE(to_iobes({}).empty());
}

TEST_CASE("word format classification") {
  REQUIRE(classify_word_format("1234") == WordFormat::kNumeric);
  REQUIRE(classify_word_format("3.14") == WordFormat::kNumeric);
  REQUIRE(classify_word_format("1,000") == WordFormat::kNumeric);
  REQUIRE(classify_word_format("-7") == WordFormat::kNumeric);
  REQUIRE(classify_word_format("127.0.0.1") == WordFormat::kNumeric);

  REQUIRE(classify_word_format("...") == WordFormat::kPunct);
  REQUIRE(classify_word_format("-") == WordFormat::kPunct);
  REQUIRE(classify_word_format("!?") == WordFormat::kPunct);

  REQUIRE(classify_word_format("hello") == WordFormat::kAllLower);
  REQUIRE(classify_word_format("WORLD") == WordFormat::kAllUpper);
  REQUIRE(classify_word_format("A") == WordFormat::kAllUpper);
  REQUIRE(classify_word_format("Hello") == WordFormat::kInitUpper);

  REQUIRE(classify_word_format("X9") == WordFormat::kAlnumMixed);
  REQUIRE(classify_word_format("v2") == WordFormat::kAlnumMixed);
  REQUIRE(classify_word_format("1a") == WordFormat::kAlnumMixed);

  REQUIRE(classify_word_format("HeLLo") == WordFormat::kOther);
  REQUIRE(classify_word_format("don't") == WordFormat::kOther);
  REQUIRE(classify_word_format("Mr.") == WordFormat::kOther);

  REQUIRE_THROWS_AS(classify_word_format(""), ArgumentError);
}

TEST_CASE("open and closed vocabularies") {
  Vocab words = Vocab::open_vocab();
  REQUIRE(words.size() == 2);
  REQUIRE(words.lookup("<PAD>") == kPadId);
  REQUIRE(words.lookup("<UNK>") == kUnkId);
  REQUIRE(words.add("cat") == 2);
  REQUIRE(words.add("dog") == 3);
  REQUIRE(words.add("cat") == 2);
  REQUIRE(words.size() == 4);
  REQUIRE(words.lookup("cat") == 2);
  REQUIRE(words.lookup("zebra") == kUnkId);
  REQUIRE(words.contains("dog"));
  REQUIRE_FALSE(words.contains("zebra"));
  REQUIRE(words.name(3) == "dog");

  Vocab tags = Vocab::closed_vocab();
  REQUIRE(tags.size() == 0);
  REQUIRE(tags.add("O") == 0);
  REQUIRE(tags.add("B-PER") == 1);
  REQUIRE(tags.lookup("B-PER") == 1);
  REQUIRE_THROWS_AS(tags.lookup("B-LOC"), LookupError);
  std::string msg = message_of([&] { tags.lookup("B-LOC"); });
  REQUIRE(msg == "tag 'B-LOC' not in inventory");
}

TEST_CASE("digit normalization") {
  REQUIRE(normalize_digits("abc123") == "abc000");
  REQUIRE(normalize_digits("3.14") == "0.00");
  REQUIRE(normalize_digits("hello") == "hello");
  REQUIRE(normalize_digits("") == "");
}

TEST_CASE("pretrained embeddings prefer exact over folded matches") {
  Vocab words = Vocab::open_vocab();
  words.add("Paris");
  words.add("cat");
  words.add("Dog");
  words.add("zzz");

  std::string text =
      "PARIS 1.0 2.0\n"
      "Paris2 -1.0 -2.0\n"
      "cat 3.0 4.0\n"
      "dog 7.0 8.0\n"
      "Dog 5.0 6.0\n"
      "zebra 9.0 10.0\n";
  std::istringstream in(text);
  EmbeddingLoadStats stats;
  Tensor table = load_pretrained_embeddings(in, words, 99, &stats);

  REQUIRE(stats.dim == 2);
  REQUIRE(table.rows == words.size());
  REQUIRE(table.cols == 2);

  // PAD row stays zero.
  REQUIRE(table.at(0, 0) == 0.0);
  REQUIRE(table.at(0, 1) == 0.0);

  // "Paris" has no exact row; the first case-folded row wins.
  REQUIRE(table.at(2, 0) == 1.0);
  REQUIRE(table.at(2, 1) == 2.0);
  // "cat" matches exactly.
  REQUIRE(table.at(3, 0) == 3.0);
  REQUIRE(table.at(3, 1) == 4.0);
  // "Dog" has both; the exact row beats the earlier folded one.
  REQUIRE(table.at(4, 0) == 5.0);
  REQUIRE(table.at(4, 1) == 6.0);

  // <UNK> and "zzz" fall back to seeded uniform(-0.25, 0.25).
  for (std::size_t id : {std::size_t{1}, std::size_t{5}}) {
    REQUIRE(std::abs(table.at(id, 0)) <= 0.25);
    REQUIRE(std::abs(table.at(id, 1)) <= 0.25);
  }
  REQUIRE(stats.found_exact == 2);
  REQUIRE(stats.found_folded == 1);
  REQUIRE(stats.oov == 2);

  // Same seed reproduces the fallback rows; a different seed moves
  // only them.
  std::istringstream again(text);
  Tensor same = load_pretrained_embeddings(again, words, 99);
  REQUIRE(same.data == table.data);
  std::istringstream reseeded(text);
  Tensor other = load_pretrained_embeddings(reseeded, words, 100);
  REQUIRE(other.at(2, 0) == table.at(2, 0));
  REQUIRE(other.at(5, 0) != table.at(5, 0));
}

TEST_CASE("pretrained embeddings reject malformed input") {
  Vocab words = Vocab::open_vocab();
  words.add("cat");

  auto load = [&](const std::string& text) {
    std::istringstream in(text);
    return load_pretrained_embeddings(in, words, 1, nullptr, "emb.txt");
  };
  REQUIRE_THROWS_AS(load("cat notanumber 2.0\n"), FormatError);
  REQUIRE_THROWS_AS(load("cat 1.0 2.0\ndog 1.0 2.0 3.0\n"), FormatError);
  std::string msg = message_of([&] { load("cat 1.0 2.0\ndog 1.0 2.0 3.0\n"); });
  REQUIRE(msg == "emb.txt:2: dimension 3 != 2");
  REQUIRE_THROWS_AS(load("cat\n"), FormatError);
  REQUIRE_THROWS_AS(load(""), FormatError);
  REQUIRE_THROWS_AS(
      load_pretrained_embeddings_file("/nonexistent/emb.txt", words, 1),
      DataNotFoundError);
}

TEST_CASE("seeded shuffle is deterministic and a permutation") {
  std::vector<int> a(40);
  for (int i = 0; i < 40; ++i) a[i] = i;
  std::vector<int> b = a, sorted = a;
  std::mt19937_64 r1(7), r2(7);
  seeded_shuffle(a, r1);
  seeded_shuffle(b, r2);
  REQUIRE(a == b);
  REQUIRE(a != sorted);
  std::sort(a.begin(), a.end());
  REQUIRE(a == sorted);
}

TEST_CASE("validation split is seeded, disjoint, and order-stable") {
  std::vector<int> all(20);
  for (int i = 0; i < 20; ++i) all[i] = i;
  auto [train, dev] = split_validation(all, 5, 42);
  REQUIRE(train.size() == 15);
  REQUIRE(dev.size() == 5);
  REQUIRE(std::is_sorted(train.begin(), train.end()));
  REQUIRE(std::is_sorted(dev.begin(), dev.end()));
  std::set<int> seen(train.begin(), train.end());
  for (int v : dev) REQUIRE(seen.insert(v).second);
  REQUIRE(seen.size() == 20);

  auto [train2, dev2] = split_validation(all, 5, 42);
  REQUIRE(train2 == train);
  REQUIRE(dev2 == dev);
  auto [train3, dev3] = split_validation(all, 5, 43);
  REQUIRE(dev3 != dev);

  REQUIRE_THROWS_AS(split_validation(all, 20, 1), ArgumentError);
  REQUIRE_THROWS_AS(split_validation(all, 25, 1), ArgumentError);
}

TEST_CASE("batches pad, mask, and cover every sentence once") {
  std::vector<EncodedSentence> data;
  for (std::size_t len = 1; len <= 5; ++len)
    data.push_back(make_sentence(len, static_cast<int>(len) * 10));

  std::mt19937_64 rng(5);
  auto batches = make_batches(data, 2, rng);
  REQUIRE(batches.size() == 3);
  REQUIRE(batches[0].rows() == 2);
  REQUIRE(batches[1].rows() == 2);
  REQUIRE(batches[2].rows() == 1);

  std::set<std::size_t> covered;
  for (const Batch& b : batches) {
    std::size_t expect_max = 0;
    for (std::size_t i : b.indices) expect_max = std::max(expect_max, data[i].size());
    REQUIRE(b.max_len == expect_max);
    for (std::size_t r = 0; r < b.rows(); ++r) {
      REQUIRE(covered.insert(b.indices[r]).second);
      const EncodedSentence& src = data[b.indices[r]];
      REQUIRE(b.length(r) == src.size());
      for (std::size_t i = src.size(); i < b.max_len; ++i) {
        REQUIRE(b.word_ids[r][i] == kPadId);
        REQUIRE(b.char_ids[r][i] == std::vector<int>{kPadId});
        REQUIRE(b.format_ids[r][i] == 0);
        REQUIRE(b.mask[r][i] == 0);
        REQUIRE(b.tags[0][r][i] == 0);
        REQUIRE(b.tags[1][r][i] == 0);
      }
      EncodedSentence back = batch_row(b, r);
      REQUIRE(back.word_ids == src.word_ids);
      REQUIRE(back.char_ids == src.char_ids);
      REQUIRE(back.format_ids == src.format_ids);
      REQUIRE(back.tags == src.tags);
    }
  }
  REQUIRE(covered.size() == data.size());

  std::mt19937_64 replay(5);
  auto again = make_batches(data, 2, replay);
  for (std::size_t i = 0; i < batches.size(); ++i)
    REQUIRE(again[i].indices == batches[i].indices);

  REQUIRE_THROWS_AS(make_batches(data, 0, rng), ArgumentError);
  REQUIRE(make_batches({}, 4, rng).empty());
}
