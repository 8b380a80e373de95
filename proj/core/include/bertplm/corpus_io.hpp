#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bertplm/posterior.hpp"

// Corpus file (.pps), all integers little-endian:
//
//   0   4   magic "PPSQ"
//   4   2   u16 version = 1
//   6   2   u16 reserved = 0
//   8   4   u32 V
//   12  4   u32 N (utterances)
//   then N times:
//       u16 id length, id bytes (UTF-8), u32 T, T*V f32 row-major frames
//
// Labels live in a TSV manifest: utterance_id<TAB>class_id<TAB>class_name.
namespace bertplm::corpus {

inline constexpr char kCorpusMagic[4] = {'P', 'P', 'S', 'Q'};
inline constexpr std::uint16_t kCorpusVersion = 1;

struct CorpusFile {
  std::uint32_t vocab_size = 0;
  std::vector<PhonemePosteriorSequence> sequences;
};

/// Every sequence must pass validate_sequence (with the given max length) and
/// have `vocab_size` columns. Frames are stored as f32.
void write_corpus(const std::filesystem::path& path, std::span<const PhonemePosteriorSequence> sequences,
                  std::uint32_t vocab_size, std::size_t max_seq_len = kDefaultMaxSeqLen);
void write_corpus(const std::filesystem::path& path, std::span<const LabeledUtterance> utterances,
                  std::uint32_t vocab_size, std::size_t max_seq_len = kDefaultMaxSeqLen);

/// Throws FormatError (with byte offset) on bad magic, truncation, or a vocab
/// size different from `expected_vocab`.
CorpusFile read_corpus(const std::filesystem::path& path, std::optional<std::uint32_t> expected_vocab = {});

/// In-memory variants of the above; the file functions delegate to these.
std::vector<std::uint8_t> encode_corpus(std::span<const PhonemePosteriorSequence> sequences, std::uint32_t vocab_size);
CorpusFile decode_corpus(std::span<const std::uint8_t> bytes, std::optional<std::uint32_t> expected_vocab = {});

struct ManifestEntry {
  std::string utterance_id;
  std::size_t class_id = 0;
  std::string class_name;
};

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

/// Joins sequences with manifest labels by utterance id. Throws DataError on
/// ids missing from the manifest.
std::vector<LabeledUtterance> attach_labels(std::vector<PhonemePosteriorSequence> sequences,
                                            std::span<const ManifestEntry> manifest);

/// Class names indexed by class id; DataError when ids are not 0..C-1 or a
/// class id maps to two names.
std::vector<std::string> class_names(std::span<const ManifestEntry> manifest);

}  // namespace bertplm::corpus
