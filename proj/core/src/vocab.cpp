#include "bertplm/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "bertplm/errors.hpp"

namespace bertplm::corpus {

PhonemeVocab::PhonemeVocab(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
  if (symbols_.size() < 2) throw DataError("vocabulary needs at least 2 symbols");
  std::set<std::string_view> seen;
  for (const auto& s : symbols_) {
    if (s.empty()) throw DataError("vocabulary contains an empty symbol");
    if (!seen.insert(s).second) throw DataError("duplicate vocabulary symbol '" + s + "'");
  }
  const auto it = std::find(symbols_.begin(), symbols_.end(), kSilSymbol);
  if (it == symbols_.end()) throw DataError("vocabulary has no SIL symbol");
  sil_index_ = static_cast<std::size_t>(it - symbols_.begin());
}

std::optional<std::size_t> PhonemeVocab::index_of(std::string_view symbol) const {
  const auto it = std::find(symbols_.begin(), symbols_.end(), symbol);
  if (it == symbols_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - symbols_.begin());
}

PhonemeVocab read_vocab(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocabulary file " + path.string());
  std::vector<std::string> symbols;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    symbols.push_back(line);
  }
  return PhonemeVocab(std::move(symbols));
}

void write_vocab(const std::filesystem::path& path, const PhonemeVocab& vocab) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write vocabulary file " + path.string());
  for (const auto& s : vocab.symbols()) out << s << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace bertplm::corpus
