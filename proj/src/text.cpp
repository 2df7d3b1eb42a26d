#include "navstate/text.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace navstate {

Vocabulary::Vocabulary() {
  words_ = {"<pad>", "<unk>"};
  index_ = {{"<pad>", kPad}, {"<unk>", kUnk}};
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) : Vocabulary() {
  for (const auto& w : words) add(w);
}

int Vocabulary::add(const std::string& word) {
  auto it = index_.find(word);
  if (it != index_.end()) return it->second;
  int id = static_cast<int>(words_.size());
  words_.push_back(word);
  index_[word] = id;
  return id;
}

int Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("vocabulary id " + std::to_string(id));
  return words_[id];
}

Vocabulary Vocabulary::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open vocabulary file: " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) v.add(line);
  }
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open vocabulary file for writing: " + path);
  for (int i = 2; i < size(); ++i) out << words_[i] << "\n";
}

Instruction tokenize(const std::string& raw, const Vocabulary& vocab) {
  std::string spaced;
  spaced.reserve(raw.size() + 8);
  for (char c : raw) {
    if (c == '.' || c == ',' || c == ';') {
      spaced += ' ';
      spaced += c;
      spaced += ' ';
    } else {
      spaced += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  Instruction inst;
  inst.raw = raw;
  std::istringstream ss(spaced);
  std::string word;
  while (ss >> word) {
    inst.token_texts.push_back(word);
    inst.tokens.push_back(vocab.id(word));
  }
  if (inst.tokens.empty()) throw InputError("tokenize: empty instruction");
  return inst;
}

}  // namespace navstate
