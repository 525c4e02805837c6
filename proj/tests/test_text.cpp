#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "doctest.h"
#include "lavender/text.hpp"

using namespace lavender;

TEST_CASE("build_vocab keeps reserved set and corpus words") {
  Vocabulary v = build_vocab({"red square moves left"}, 1, 0);
  CHECK(v.size() == Vocabulary::kReservedCount + 4);
  for (const char* w : {"red", "square", "moves", "left"}) {
    CHECK(v.find(w) >= Vocabulary::kReservedCount);
  }
  CHECK(v.find("[MASK]") == Vocabulary::kMask);
  CHECK(v.find("true") == Vocabulary::kTrue);
  CHECK(v.find("false") == Vocabulary::kFalse);
  for (int n = 0; n <= 9; ++n) CHECK(v.digit_id(n) == Vocabulary::kDigit0 + n);

  // all reserved ids distinct and dense
  std::vector<std::string> seen;
  for (size_t i = 0; i < v.size(); ++i) seen.push_back(v.token(int(i)));
  std::sort(seen.begin(), seen.end());
  CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
}

TEST_CASE("build_vocab min_freq and max_size") {
  Vocabulary v = build_vocab({"red red red rare"}, 2, 0);
  CHECK(v.find("red") >= 0);
  CHECK(v.find("rare") == -1);
  TokenSeq seq = tokenize(v, "rare");
  CHECK(seq.ids[1] == Vocabulary::kUnk);

  CHECK_THROWS_AS(build_vocab({"a"}, 1, 3), ConfigError);
}

TEST_CASE("frequency ties break lexicographically, checked against a sort oracle") {
  const std::vector<std::string> corpus{"zebra apple", "zebra apple",
                                        "mango mango banana banana"};
  // capacity for exactly two corpus words beyond the reserved block
  Vocabulary v = build_vocab(corpus, 1, Vocabulary::kReservedCount + 2);

  // oracle: (freq desc, word asc) over {zebra:2, apple:2, mango:2, banana:2}
  std::vector<std::string> words{"zebra", "apple", "mango", "banana"};
  std::sort(words.begin(), words.end());
  CHECK(v.find(words[0]) == Vocabulary::kReservedCount);
  CHECK(v.find(words[1]) == Vocabulary::kReservedCount + 1);
  CHECK(v.find(words[2]) == -1);
  CHECK(v.find(words[3]) == -1);
}

TEST_CASE("tokenize wraps, folds case, strips punctuation") {
  Vocabulary v = build_vocab({"red square moves left"}, 1, 0);

  TokenSeq empty = tokenize(v, "");
  CHECK(empty.ids == std::vector<int>{Vocabulary::kCls, Vocabulary::kSep});
  CHECK(empty.real_count == 2);

  TokenSeq a = tokenize(v, "Red SQUARE");
  TokenSeq b = tokenize(v, "red square");
  CHECK(a.ids == b.ids);

  TokenSeq c = tokenize(v, "red, square.");
  CHECK(c.ids == b.ids);

  // control tokens pass through regardless of case
  TokenSeq d = tokenize(v, "red [sep] square");
  CHECK(d.ids[2] == Vocabulary::kSep);

  // digits map to the reserved single tokens
  TokenSeq e = tokenize(v, "3");
  CHECK(e.ids[1] == v.digit_id(3));
}

TEST_CASE("tokenize round trip over closed-vocabulary sentences") {
  const std::vector<std::string> corpus{
      "the red square moves left",
      "the blue circle moves up and the green triangle stays still",
      "what color is the square",
      "how many objects are in the video"};
  Vocabulary v = build_vocab(corpus, 1, 0);
  for (const auto& s : corpus) {
    TokenSeq seq = tokenize(v, s);
    CHECK(detokenize(v, seq.ids) == s);
    // output satisfies TokenSeq invariants
    CHECK(seq.ids.front() == Vocabulary::kCls);
    CHECK(seq.ids.back() == Vocabulary::kSep);
    CHECK(seq.real_count == seq.ids.size());
  }
}

TEST_CASE("detokenize cases") {
  Vocabulary v = build_vocab({"red"}, 1, 0);
  const int red = v.find("red");
  CHECK(detokenize(v, {Vocabulary::kCls, red, Vocabulary::kSep}) == "red");
  CHECK(detokenize(v, {Vocabulary::kCls, Vocabulary::kSep}) == "");
  CHECK(detokenize(v, {Vocabulary::kCls, red, Vocabulary::kSep,
                       Vocabulary::kPad, Vocabulary::kPad}) == "red");
  CHECK_THROWS_AS(detokenize(v, {int(v.size())}), InputError);
}

TEST_CASE("vocabulary survives a save/load round trip") {
  Vocabulary v = build_vocab({"red square moves left zebra apple"}, 1, 0,
                             {"paired", "description"});
  const std::string path = "vocab_roundtrip_test.txt";
  v.save(path);
  Vocabulary loaded = Vocabulary::load(path);
  REQUIRE(loaded.size() == v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    CHECK(loaded.token(int(i)) == v.token(int(i)));
    CHECK(loaded.find(v.token(int(i))) == int(i));
  }
  std::remove(path.c_str());
}

TEST_CASE("padding flags") {
  Vocabulary v = build_vocab({"red"}, 1, 0);
  TokenSeq seq = tokenize(v, "red");
  seq.pad_to(6);
  CHECK(seq.ids.size() == 6);
  CHECK(seq.real_count == 3);
  CHECK_FALSE(seq.is_pad(2));
  CHECK(seq.is_pad(3));
  CHECK(seq.ids[5] == Vocabulary::kPad);
  CHECK_THROWS_AS(seq.pad_to(2), DimensionError);
}
