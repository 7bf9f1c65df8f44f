// SPDX-License-Identifier: Apache-2.0
#include "scenafuse/vocab.hpp"

#include <fstream>
#include <stdexcept>

namespace scenafuse {

namespace {
const char* kReserved[4] = {"[PAD]", "[CLS]", "[SEP]", "[UNK]"};
}

Vocabulary Vocabulary::with_reserved() {
  Vocabulary v;
  for (const char* token : kReserved) v.add(token);
  return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("vocab: cannot open: " + path);
  Vocabulary v;
  std::string line;
  int id = 0;
  while (std::getline(is, line)) {
    if (id < 4 && line != kReserved[id]) {
      throw std::runtime_error("vocab: line " + std::to_string(id) + " must be " +
                               kReserved[id] + ", got '" + line + "'");
    }
    v.add(line);
    ++id;
  }
  if (id < 4) throw std::runtime_error("vocab: file has fewer than 4 reserved entries");
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("vocab: cannot open for write: " + path);
  for (const std::string& token : tokens_) os << token << "\n";
}

int Vocabulary::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_[token] = id;
  return id;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("vocab: id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

}  // namespace scenafuse
