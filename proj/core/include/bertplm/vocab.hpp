#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bertplm::corpus {

inline constexpr std::string_view kSilSymbol = "SIL";

/// Ordered phoneme inventory. Exactly one symbol must be "SIL".
class PhonemeVocab {
 public:
  explicit PhonemeVocab(std::vector<std::string> symbols);

  std::size_t size() const { return symbols_.size(); }
  std::size_t sil_index() const { return sil_index_; }
  const std::string& symbol(std::size_t i) const { return symbols_.at(i); }
  const std::vector<std::string>& symbols() const { return symbols_; }
  std::optional<std::size_t> index_of(std::string_view symbol) const;

  bool operator==(const PhonemeVocab&) const = default;

 private:
  std::vector<std::string> symbols_;
  std::size_t sil_index_ = 0;
};

/// One phoneme per line; line number is the phoneme id.
PhonemeVocab read_vocab(const std::filesystem::path& path);
void write_vocab(const std::filesystem::path& path, const PhonemeVocab& vocab);

}  // namespace bertplm::corpus
