#include "lavender/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace lavender {

namespace {

const char* kReservedTokens[Vocabulary::kReservedCount] = {
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[VTM]", "[MC]",
    "[OE]",  "[CAP]", "0",     "1",     "2",      "3",     "4",
    "5",     "6",     "7",     "8",     "9",      "true",  "false"};

std::string lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool is_edge_punct(char c) {
  return c == '.' || c == ',' || c == '?' || c == '!' || c == ';' ||
         c == ':' || c == '"';
}

std::string strip_punct(const std::string& word) {
  size_t b = 0, e = word.size();
  while (b < e && is_edge_punct(word[b])) ++b;
  while (e > b && is_edge_punct(word[e - 1])) --e;
  return word.substr(b, e - b);
}

// Control-token spelling like "[SEP]", matched case-insensitively so composed
// inputs such as "question [SEP] answer" tokenize to control ids.
int control_token_id(const Vocabulary& vocab, const std::string& word) {
  if (word.size() < 3 || word.front() != '[' || word.back() != ']') return -1;
  std::string inner = word.substr(1, word.size() - 2);
  std::transform(inner.begin(), inner.end(), inner.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  const int id = vocab.find("[" + inner + "]");
  return (id >= 0 && Vocabulary::is_special(id)) ? id : -1;
}

}  // namespace

Vocabulary::Vocabulary() {
  for (const char* t : kReservedTokens) add(t);
}

int Vocabulary::find(const std::string& token) const {
  const auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? -1 : it->second;
}

int Vocabulary::id_or_unk(const std::string& token) const {
  const int id = find(token);
  return id < 0 ? kUnk : id;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<size_t>(id) >= id_to_token_.size()) {
    throw InputError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return id_to_token_[static_cast<size_t>(id)];
}

int Vocabulary::digit_id(int n) const {
  if (n < 0 || n > 9) throw InputError("digit index outside [0, 9]");
  return kDigit0 + n;
}

void Vocabulary::add(const std::string& token) {
  if (token_to_id_.count(token)) return;
  token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
  id_to_token_.push_back(token);
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write vocabulary file: " + path);
  out << "#vocab v1 " << id_to_token_.size() << "\n";
  for (const auto& t : id_to_token_) out << t << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read vocabulary file: " + path);
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic, version;
  size_t count = 0;
  hs >> magic >> version >> count;
  if (magic != "#vocab" || version != "v1") {
    throw InputError("bad vocabulary header: " + header);
  }
  Vocabulary vocab;
  std::string line;
  size_t at = 0;
  while (std::getline(in, line)) {
    if (at < kReservedCount) {
      if (line != kReservedTokens[at]) {
        throw InputError("vocabulary reserved block corrupted at id " +
                         std::to_string(at));
      }
    } else {
      vocab.add(line);
    }
    ++at;
  }
  if (at != count || vocab.size() != count) {
    throw InputError("vocabulary size mismatch in " + path);
  }
  return vocab;
}

void TokenSeq::pad_to(size_t len) {
  if (len < ids.size()) throw DimensionError("pad_to cannot shrink a sequence");
  ids.resize(len, Vocabulary::kPad);
}

std::vector<std::string> normalize_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream ss(text);
  std::string word;
  while (ss >> word) {
    const std::string clean = strip_punct(word);
    if (!clean.empty()) words.push_back(lower(clean));
  }
  return words;
}

TokenSeq tokenize(const Vocabulary& vocab, const std::string& text) {
  TokenSeq seq;
  seq.ids.push_back(Vocabulary::kCls);
  std::istringstream ss(text);
  std::string word;
  while (ss >> word) {
    const std::string clean = strip_punct(word);
    if (clean.empty()) continue;
    const int control = control_token_id(vocab, clean);
    if (control >= 0) {
      seq.ids.push_back(control);
    } else {
      seq.ids.push_back(vocab.id_or_unk(lower(clean)));
    }
  }
  seq.ids.push_back(Vocabulary::kSep);
  seq.real_count = seq.ids.size();
  return seq;
}

std::string detokenize(const Vocabulary& vocab, const std::vector<int>& ids) {
  std::string out;
  for (const int id : ids) {
    const std::string& tok = vocab.token(id);  // validates range
    if (id == Vocabulary::kSep) break;
    if (Vocabulary::is_special(id)) continue;
    if (!out.empty()) out += ' ';
    out += tok;
  }
  return out;
}

Vocabulary build_vocab(const std::vector<std::string>& corpus, size_t min_freq,
                       size_t max_size,
                       const std::vector<std::string>& extra_tokens) {
  if (corpus.empty()) throw ConfigError("build_vocab needs a nonempty corpus");
  Vocabulary vocab;
  for (const auto& t : extra_tokens) vocab.add(lower(t));
  if (max_size != 0 && vocab.size() > max_size) {
    throw ConfigError("vocab max_size " + std::to_string(max_size) +
                      " smaller than the always-included set of " +
                      std::to_string(vocab.size()));
  }

  std::map<std::string, size_t> freq;  // ordered map: lexicographic tie-break
  for (const auto& line : corpus) {
    for (const auto& w : normalize_words(line)) ++freq[w];
  }
  std::vector<std::pair<std::string, size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(
      ranked.begin(), ranked.end(),
      [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [word, count] : ranked) {
    if (count < min_freq) continue;
    if (max_size != 0 && vocab.size() >= max_size) break;
    vocab.add(word);
  }
  return vocab;
}

}  // namespace lavender
