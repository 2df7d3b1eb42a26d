#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace navstate {

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Token table with two reserved ids: PAD=0 and UNK=1.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& words);

  int add(const std::string& word);  // idempotent, returns id
  int id(const std::string& word) const;  // UNK when absent
  const std::string& word(int id) const;
  int size() const { return static_cast<int>(words_.size()); }

  /// One token per line; id = 2 + line number.
  static Vocabulary from_file(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

struct Instruction {
  std::string raw;
  std::vector<int> tokens;
  std::vector<std::string> token_texts;
  int length() const { return static_cast<int>(tokens.size()); }
};

/// Lowercases, splits the punctuation marks . , ; into their own tokens, then
/// splits on whitespace. Unknown words map to UNK. Empty or whitespace-only
/// text is an input error.
Instruction tokenize(const std::string& raw, const Vocabulary& vocab);

}  // namespace navstate
