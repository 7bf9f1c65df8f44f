// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace scenafuse {

/// Token table with fixed reserved ids. File format is UTF-8 text, one token
/// per line, line number = id, first four lines [PAD],[CLS],[SEP],[UNK].
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kSep = 2;
  static constexpr int kUnk = 3;

  static Vocabulary with_reserved();
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  int add(const std::string& token);          // returns existing id if present
  int id_of(const std::string& token) const;  // kUnk when unknown
  const std::string& token_of(int id) const;
  std::size_t size() const { return tokens_.size(); }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace scenafuse
