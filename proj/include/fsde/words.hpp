#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsde {

/// A word over the alphabet {1,...,d}. The empty word is allowed and acts
/// as the identity for concatenation.
class Word {
 public:
  Word() = default;
  explicit Word(std::vector<int> letters) : letters_(std::move(letters)) {
    for (int c : letters_) {
      if (c < 1) throw std::invalid_argument("Word: letters must be >= 1");
    }
  }
  Word(std::initializer_list<int> letters) : Word(std::vector<int>(letters)) {}

  std::size_t length() const { return letters_.size(); }
  bool empty() const { return letters_.empty(); }
  const std::vector<int>& letters() const { return letters_; }
  int letter(std::size_t i) const { return letters_.at(i); }

  /// Appends a single letter on the right.
  Word append(int j) const {
    std::vector<int> out = letters_;
    out.push_back(j);
    return Word(std::move(out));
  }

  /// True if `this` is a prefix of w.
  bool is_prefix_of(const Word& w) const {
    if (length() > w.length()) return false;
    for (std::size_t i = 0; i < length(); ++i)
      if (letters_[i] != w.letters_[i]) return false;
    return true;
  }

  /// The suffix of w obtained by removing `this` prefix; caller must check
  /// is_prefix_of first.
  Word suffix_after(const Word& prefix) const {
    std::vector<int> out(letters_.begin() + static_cast<std::ptrdiff_t>(prefix.length()),
                         letters_.end());
    return Word(std::move(out));
  }

  bool operator==(const Word& o) const { return letters_ == o.letters_; }
  bool operator!=(const Word& o) const { return !(*this == o); }

  /// Length-then-lexicographic order; this order fixes matrix row/column
  /// indexing everywhere downstream.
  bool operator<(const Word& o) const {
    if (length() != o.length()) return length() < o.length();
    return letters_ < o.letters_;
  }

 private:
  std::vector<int> letters_;
};

inline Word concat(const Word& a, const Word& b) {
  std::vector<int> out = a.letters();
  out.insert(out.end(), b.letters().begin(), b.letters().end());
  return Word(std::move(out));
}

/// All words of length <= m over {1,...,d}, in length-then-lexicographic
/// order, optionally with the empty word first.
inline std::vector<Word> enumerate_words(int d, int m, bool include_empty) {
  if (d < 1) throw std::invalid_argument("enumerate_words: d must be >= 1");
  if (m < 0) throw std::invalid_argument("enumerate_words: m must be >= 0");
  std::vector<Word> out;
  if (include_empty) out.emplace_back();
  std::vector<Word> layer{Word{}};
  for (int len = 1; len <= m; ++len) {
    std::vector<Word> next;
    next.reserve(layer.size() * static_cast<std::size_t>(d));
    for (const Word& w : layer)
      for (int j = 1; j <= d; ++j) next.push_back(w.append(j));
    out.insert(out.end(), next.begin(), next.end());
    layer = std::move(next);
  }
  return out;
}

/// Serializes as a parenthesized comma list: "(1,2,1)"; the empty word is "()".
inline std::string to_string(const Word& w) {
  std::string s = "(";
  for (std::size_t i = 0; i < w.length(); ++i) {
    if (i) s += ',';
    s += std::to_string(w.letter(i));
  }
  s += ')';
  return s;
}

inline Word parse_word(const std::string& s) {
  std::size_t a = s.find('(');
  std::size_t b = s.rfind(')');
  if (a == std::string::npos || b == std::string::npos || b < a)
    throw std::invalid_argument("parse_word: expected \"(i,j,...)\", got " + s);
  std::vector<int> letters;
  std::string body = s.substr(a + 1, b - a - 1);
  std::size_t pos = 0;
  while (pos < body.size()) {
    std::size_t next = body.find(',', pos);
    std::string tok = body.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    if (!tok.empty()) letters.push_back(std::stoi(tok));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return Word(std::move(letters));
}

/// Dense index for a fixed word list (the enumerate_words order).
class WordIndex {
 public:
  WordIndex() = default;
  explicit WordIndex(std::vector<Word> words) : words_(std::move(words)) {
    for (std::size_t i = 0; i < words_.size(); ++i) index_[words_[i]] = i;
  }

  /// Index over the nonempty words of length <= l ("A1(l)").
  static WordIndex a1(int d, int l) { return WordIndex(enumerate_words(d, l, false)); }

  std::size_t size() const { return words_.size(); }
  const Word& word(std::size_t i) const { return words_.at(i); }
  const std::vector<Word>& words() const { return words_; }

  bool contains(const Word& w) const { return index_.count(w) > 0; }
  std::size_t index(const Word& w) const {
    auto it = index_.find(w);
    if (it == index_.end()) throw std::out_of_range("WordIndex: unknown word " + to_string(w));
    return it->second;
  }

 private:
  std::vector<Word> words_;
  std::map<Word, std::size_t> index_;
};

}  // namespace fsde
