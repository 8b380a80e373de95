#include "bertplm/corpus_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <unordered_map>

#include "binary_io.hpp"
#include "bertplm/errors.hpp"

namespace bertplm::corpus {

using detail::Reader;
using detail::slurp;
using detail::spit;
using detail::Writer;

std::vector<std::uint8_t> encode_corpus(std::span<const PhonemePosteriorSequence> sequences, std::uint32_t vocab_size) {
  Writer w;
  w.bytes(kCorpusMagic, 4);
  w.u16(kCorpusVersion);
  w.u16(0);
  w.u32(vocab_size);
  w.u32(static_cast<std::uint32_t>(sequences.size()));
  for (const auto& s : sequences) {
    if (s.utterance_id.size() > 0xffff) throw ContractError("utterance id longer than 65535 bytes");
    if (s.vocab_size() != vocab_size) {
      throw ContractError("sequence " + s.utterance_id + " has " + std::to_string(s.vocab_size()) +
                          " columns, corpus V=" + std::to_string(vocab_size));
    }
    w.u16(static_cast<std::uint16_t>(s.utterance_id.size()));
    w.bytes(s.utterance_id.data(), s.utterance_id.size());
    w.u32(static_cast<std::uint32_t>(s.length()));
    for (double v : s.frames.data()) w.f32(static_cast<float>(v));
  }
  return w.take();
}

CorpusFile decode_corpus(std::span<const std::uint8_t> bytes, std::optional<std::uint32_t> expected_vocab) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kCorpusMagic, 4) != 0) throw FormatError("bad corpus magic, expected PPSQ", 0);
  r.str(4, "magic");
  const std::size_t version_at = r.offset();
  if (r.u16("version") != kCorpusVersion) throw FormatError("unsupported corpus version", version_at);
  r.u16("reserved");
  const std::size_t vocab_at = r.offset();
  CorpusFile out;
  out.vocab_size = r.u32("vocabulary size");
  if (out.vocab_size < 2) throw FormatError("vocabulary size below 2", vocab_at);
  if (expected_vocab && *expected_vocab != out.vocab_size) {
    throw FormatError("vocabulary size mismatch: file has " + std::to_string(out.vocab_size) + ", expected " +
                          std::to_string(*expected_vocab),
                      vocab_at);
  }
  const std::uint32_t n = r.u32("utterance count");
  out.sequences.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    PhonemePosteriorSequence s;
    const std::uint16_t id_len = r.u16("id length");
    s.utterance_id = r.str(id_len, "utterance id");
    const std::size_t t_at = r.offset();
    const std::uint32_t T = r.u32("frame count");
    if (T == 0) throw FormatError("utterance " + s.utterance_id + " has zero frames", t_at);
    const std::size_t count = static_cast<std::size_t>(T) * out.vocab_size;
    r.need(count * 4, "frames");
    std::vector<double> frames(count);
    for (auto& v : frames) v = r.f32("frames");
    s.frames = ad::Tensor::unchecked({T, out.vocab_size}, std::move(frames));
    out.sequences.push_back(std::move(s));
  }
  if (r.offset() != bytes.size()) throw FormatError("trailing bytes after last utterance", r.offset());
  return out;
}

void write_corpus(const std::filesystem::path& path, std::span<const PhonemePosteriorSequence> sequences,
                  std::uint32_t vocab_size, std::size_t max_seq_len) {
  for (const auto& s : sequences) {
    const auto issues = validate_sequence(s, max_seq_len);
    if (!issues.empty()) {
      throw ContractError("write_corpus: " + s.utterance_id + " frame " + std::to_string(issues[0].frame) + ": " +
                          issues[0].rule + " (" + issues[0].detail + ")");
    }
  }
  spit(path, encode_corpus(sequences, vocab_size));
}

void write_corpus(const std::filesystem::path& path, std::span<const LabeledUtterance> utterances,
                  std::uint32_t vocab_size, std::size_t max_seq_len) {
  std::vector<PhonemePosteriorSequence> seqs;
  seqs.reserve(utterances.size());
  for (const auto& u : utterances) seqs.push_back(u.sequence);
  write_corpus(path, seqs, vocab_size, max_seq_len);
}

CorpusFile read_corpus(const std::filesystem::path& path, std::optional<std::uint32_t> expected_vocab) {
  const auto bytes = slurp(path);
  return decode_corpus(bytes, expected_vocab);
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  for (const auto& e : entries) out << e.utterance_id << '\t' << e.class_id << '\t' << e.class_name << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1) {
      fields.push_back(line.substr(start, tab - start));
    }
    fields.push_back(line.substr(start));
    if (fields.size() != 3) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields");
    }
    ManifestEntry e;
    e.utterance_id = fields[0];
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(fields[1], &used);
      if (used != fields[1].size()) throw std::invalid_argument("junk");
      e.class_id = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": class id '" + fields[1] +
                      "' is not a non-negative integer");
    }
    e.class_name = fields[2];
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<LabeledUtterance> attach_labels(std::vector<PhonemePosteriorSequence> sequences,
                                            std::span<const ManifestEntry> manifest) {
  std::unordered_map<std::string, std::size_t> label_of;
  for (const auto& e : manifest) label_of[e.utterance_id] = e.class_id;
  std::vector<LabeledUtterance> out;
  out.reserve(sequences.size());
  for (auto& s : sequences) {
    const auto it = label_of.find(s.utterance_id);
    if (it == label_of.end()) throw DataError("utterance " + s.utterance_id + " missing from manifest");
    out.push_back({std::move(s), it->second});
  }
  return out;
}

std::vector<std::string> class_names(std::span<const ManifestEntry> manifest) {
  std::map<std::size_t, std::string> names;
  for (const auto& e : manifest) {
    const auto [it, inserted] = names.emplace(e.class_id, e.class_name);
    if (!inserted && it->second != e.class_name) {
      throw DataError("class id " + std::to_string(e.class_id) + " has two names: " + it->second + ", " +
                      e.class_name);
    }
  }
  std::vector<std::string> out;
  for (const auto& [id, name] : names) {
    if (id != out.size()) throw DataError("class ids are not contiguous from 0 (missing " + std::to_string(out.size()) + ")");
    out.push_back(name);
  }
  return out;
}

}  // namespace bertplm::corpus
