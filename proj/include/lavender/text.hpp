#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "lavender/errors.hpp"

namespace lavender {

// Token ids with a fixed reserved prefix. Bracketed control tokens come
// first, then single-token digits and the matching words "true"/"false" that
// video-text matching and multiple-choice answers predict through the MLM
// head. Everything after the reserved block is corpus vocabulary in
// descending frequency order (ties lexicographic).
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static constexpr int kVtm = 5;  // task tokens, learnable when used
  static constexpr int kMc = 6;
  static constexpr int kOe = 7;
  static constexpr int kCap = 8;
  static constexpr int kDigit0 = 9;  // "0".."9" occupy 9..18
  static constexpr int kTrue = 19;
  static constexpr int kFalse = 20;
  static constexpr int kReservedCount = 21;

  Vocabulary();  // reserved tokens only

  size_t size() const { return id_to_token_.size(); }
  // -1 when absent.
  int find(const std::string& token) const;
  int id_or_unk(const std::string& token) const;
  const std::string& token(int id) const;  // InputError outside [0, size)
  int digit_id(int n) const;               // n in [0, 9]
  // Bracketed control tokens ([PAD]..[CAP]); digits and true/false are
  // ordinary words.
  static bool is_special(int id) { return id >= 0 && id < kDigit0; }

  void add(const std::string& token);  // no-op when already present

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

// [CLS] ... [SEP] [PAD]*; real_count counts ids up to and including the
// terminal [SEP].
struct TokenSeq {
  std::vector<int> ids;
  size_t real_count = 0;

  size_t padded_len() const { return ids.size(); }
  bool is_pad(size_t pos) const { return pos >= real_count; }
  void pad_to(size_t len);
};

// Lowercases, splits on whitespace, strips edge punctuation (.,?!;:"),
// maps out-of-vocabulary words to [UNK] and wraps the result in
// [CLS] ... [SEP]. Words matching a control-token spelling (any case) map to
// that control token, so composed inputs like "question [SEP] answer" work.
TokenSeq tokenize(const Vocabulary& vocab, const std::string& text);

// Words of a sentence after tokenize's normalization, without specials.
std::vector<std::string> normalize_words(const std::string& text);

// Joins non-special tokens with single spaces, stopping at the first [SEP].
std::string detokenize(const Vocabulary& vocab, const std::vector<int>& ids);

// Counts normalized words over the corpus; includes every reserved token and
// every extra token unconditionally, then fills remaining capacity with
// words of frequency >= min_freq by descending frequency (ties
// lexicographic). max_size == 0 means unlimited.
Vocabulary build_vocab(const std::vector<std::string>& corpus, size_t min_freq,
                       size_t max_size,
                       const std::vector<std::string>& extra_tokens = {});

}  // namespace lavender
