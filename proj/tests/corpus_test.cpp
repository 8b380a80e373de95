#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "bertplm/corpus_io.hpp"
#include "bertplm/posterior.hpp"
#include "bertplm/rng.hpp"
#include "bertplm/synth.hpp"
#include "bertplm/vocab.hpp"

using namespace bertplm;
using namespace bertplm::corpus;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("bertplm_corpus_" + name);
}

PhonemePosteriorSequence make_seq(std::string id, std::initializer_list<std::initializer_list<double>> rows) {
  return {std::move(id), ad::Tensor::from_rows(rows)};
}

}  // namespace

TEST(Rng, SplitStreamsAreReproducibleAndDistinct) {
  const Rng root(42);
  Rng a1 = root.split("a"), a2 = root.split("a"), b = root.split("b");
  EXPECT_EQ(a1(), a2());
  EXPECT_NE(a1(), b());
  EXPECT_NE(root.split(1).key(), root.split(2).key());
  Rng u(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
}

TEST(Vocab, SilIndexAndLookup) {
  const PhonemeVocab v({"AA", "SIL", "B"});
  EXPECT_EQ(v.size(), 3u);
  EXPECT_EQ(v.sil_index(), 1u);
  EXPECT_EQ(v.index_of("B"), 2u);
  EXPECT_FALSE(v.index_of("Z").has_value());
  EXPECT_ANY_THROW(PhonemeVocab({"A", "B"}));
  EXPECT_ANY_THROW(PhonemeVocab({"SIL", "A", "A"}));
}

TEST(Vocab, FileRoundTrip) {
  const auto path = temp_path("vocab.txt");
  const PhonemeVocab v({"SIL", "AA", "EH"});
  write_vocab(path, v);
  EXPECT_EQ(read_vocab(path), v);
  std::filesystem::remove(path);
}

TEST(IsMajorSil, ThresholdIsStrict) {
  const std::vector<double> one_hot = {1.0, 0.0};
  const std::vector<double> half = {0.5, 0.5};
  const std::vector<double> just_over = {0.51, 0.49};
  EXPECT_TRUE(is_major_sil(one_hot, 0, 0.5));
  EXPECT_FALSE(is_major_sil(half, 0, 0.5));
  EXPECT_TRUE(is_major_sil(just_over, 0, 0.5));
  EXPECT_THROW(is_major_sil(half, 0, 1.0), ContractError);
}

TEST(ValidateSequence, CleanGeneratedSequence) {
  Rng rng(1);
  const auto u = generate_utterance(default_grammar(), 0, rng, "x");
  EXPECT_TRUE(validate_sequence(u.sequence).empty());
}

TEST(ValidateSequence, RowSumViolation) {
  const auto s = make_seq("x", {{0.5, 0.5}, {0.6, 0.3}});
  const auto v = validate_sequence(s);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].rule, "row-sum");
  EXPECT_EQ(v[0].frame, 1u);
}

TEST(ValidateSequence, NegativityViolation) {
  const auto s = make_seq("x", {{1.2, -0.2}, {0.5, 0.5}});
  const auto v = validate_sequence(s);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].rule, "negativity");
  EXPECT_EQ(v[0].frame, 0u);
}

TEST(ValidateSequence, LengthAboveMaximum) {
  const auto s = make_seq("x", {{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}});
  const auto v = validate_sequence(s, 2);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].rule, "length");
}

TEST(Synth, InfiniteSharpnessIdentityConfusionIsOneHot) {
  auto g = default_grammar();
  g.confusion = identity_confusion(g.vocab.size());
  g.sharpness = std::numeric_limits<double>::infinity();
  Rng rng(2);
  std::vector<std::size_t> truth;
  const auto u = generate_utterance(g, 3, rng, "x", &truth);
  ASSERT_EQ(truth.size(), u.sequence.length());
  for (std::size_t t = 0; t < truth.size(); ++t) {
    for (std::size_t v = 0; v < g.vocab.size(); ++v) {
      EXPECT_EQ(u.sequence.frames.at(t, v), v == truth[t] ? 1.0 : 0.0);
    }
  }
}

TEST(Synth, FixedDurationsWithoutSilGiveTemplateLength) {
  SynthGrammar g;
  g.vocab = PhonemeVocab({"SIL", "A", "B"});
  g.class_names = {"ab"};
  g.templates = {{0, {1, 2}}};
  g.min_frames = g.max_frames = 1;
  g.sil_min = g.sil_max = 0;
  g.boundary_sil_min = g.boundary_sil_max = 0;
  g.confusion = identity_confusion(3);
  g.validate();
  Rng rng(3);
  EXPECT_EQ(generate_utterance(g, 0, rng).sequence.length(), 2u);
}

// Dirichlet(s * c) has mean c, so averaged over many frames the mass at the
// true phoneme approaches the confusion diagonal.
TEST(Synth, ChannelMatchesConfusionDiagonal) {
  const auto g = default_grammar();
  const std::size_t sil = g.vocab.sil_index();
  const Rng root(42);
  double row_sum_total = 0.0, phone_mass = 0.0, phone_diag = 0.0, sil_mass = 0.0;
  std::size_t frames = 0, phone_frames = 0, sil_frames = 0;
  for (std::size_t i = 0; frames < 10000; ++i) {
    Rng rng = root.split(i);
    std::vector<std::size_t> truth;
    const auto u = generate_utterance(g, i % g.num_classes(), rng, "mc", &truth);
    for (std::size_t t = 0; t < truth.size(); ++t, ++frames) {
      const auto row = u.sequence.frame(t);
      double s = 0.0;
      for (double x : row) s += x;
      row_sum_total += s;
      if (truth[t] == sil) {
        sil_mass += row[sil];
        ++sil_frames;
      } else {
        phone_mass += row[truth[t]];
        phone_diag += g.confusion.at(truth[t], truth[t]);
        ++phone_frames;
      }
    }
  }
  EXPECT_NEAR(row_sum_total / static_cast<double>(frames), 1.0, 1e-9);
  EXPECT_NEAR(phone_mass / phone_frames, phone_diag / phone_frames, 0.02);
  EXPECT_NEAR(sil_mass / sil_frames, g.confusion.at(sil, sil), 0.02);
}

TEST(Synth, CorpusIsBalancedAndDeterministic) {
  const auto g = default_grammar();
  const auto a = generate_corpus(g, 20, 9);
  const auto b = generate_corpus(g, 20, 9);
  ASSERT_EQ(a.size(), 20u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].label, i % 5);
    EXPECT_EQ(ad::max_abs_diff(a[i].sequence.frames, b[i].sequence.frames), 0.0);
    EXPECT_GT(count_eligible(a[i].sequence, g.vocab.sil_index()), 0u);
  }
}

TEST(CorpusFile, EmptyCorpusIsHeaderOnly) {
  const auto bytes = encode_corpus({}, 4);
  EXPECT_EQ(bytes.size(), 16u);
  const auto back = decode_corpus(bytes);
  EXPECT_EQ(back.vocab_size, 4u);
  EXPECT_TRUE(back.sequences.empty());
  EXPECT_EQ(encode_corpus(back.sequences, 4), bytes);
}

TEST(CorpusFile, RoundTripIsBitwise) {
  const auto g = default_grammar();
  const auto corpus = generate_corpus(g, 3, 5);
  std::vector<PhonemePosteriorSequence> seqs;
  for (const auto& u : corpus) seqs.push_back(u.sequence);
  const auto path = temp_path("rt.pps");
  write_corpus(path, seqs, static_cast<std::uint32_t>(g.vocab.size()));
  const auto back = read_corpus(path, static_cast<std::uint32_t>(g.vocab.size()));
  ASSERT_EQ(back.sequences.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.sequences[i].utterance_id, seqs[i].utterance_id);
    ASSERT_EQ(back.sequences[i].frames.dims(), seqs[i].frames.dims());
    for (std::size_t k = 0; k < seqs[i].frames.size(); ++k) {
      EXPECT_EQ(static_cast<float>(back.sequences[i].frames[k]), static_cast<float>(seqs[i].frames[k]));
    }
  }
  EXPECT_EQ(encode_corpus(back.sequences, back.vocab_size),
            encode_corpus(seqs, static_cast<std::uint32_t>(g.vocab.size())));
  std::filesystem::remove(path);
}

TEST(CorpusFile, CorruptMagicNamesOffsetZero) {
  auto bytes = encode_corpus({}, 4);
  bytes[0] = 'X';
  try {
    decode_corpus(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST(CorpusFile, TruncationAndVocabMismatch) {
  const std::vector<PhonemePosteriorSequence> seqs = {make_seq("a", {{0.25, 0.75}, {1.0, 0.0}})};
  auto bytes = encode_corpus(seqs, 2);
  try {
    decode_corpus(bytes, 3);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 8u);
  }
  bytes.pop_back();
  EXPECT_THROW(decode_corpus(bytes), FormatError);
  bytes.resize(20);
  EXPECT_THROW(decode_corpus(bytes), FormatError);
}

TEST(CorpusFile, WriteRejectsInvalidSequences) {
  const std::vector<PhonemePosteriorSequence> seqs = {make_seq("bad", {{0.4, 0.4}})};
  EXPECT_ANY_THROW(write_corpus(temp_path("bad.pps"), seqs, 2));
}

TEST(Manifest, RoundTripAndJoin) {
  const auto path = temp_path("labels.tsv");
  const std::vector<ManifestEntry> entries = {{"u1", 1, "off"}, {"u0", 0, "on"}};
  write_manifest(path, entries);
  const auto back = read_manifest(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].utterance_id, "u1");
  EXPECT_EQ(back[0].class_id, 1u);
  EXPECT_EQ(back[0].class_name, "off");
  const auto names = class_names(back);
  EXPECT_EQ(names, (std::vector<std::string>{"on", "off"}));

  std::vector<PhonemePosteriorSequence> seqs = {make_seq("u0", {{1.0, 0.0}}), make_seq("u1", {{0.0, 1.0}})};
  const auto labeled = attach_labels(seqs, back);
  EXPECT_EQ(labeled[0].label, 0u);
  EXPECT_EQ(labeled[1].label, 1u);
  seqs.push_back(make_seq("missing", {{1.0, 0.0}}));
  EXPECT_THROW(attach_labels(seqs, back), DataError);
  std::filesystem::remove(path);
}

TEST(Manifest, MalformedLineIsDataError) {
  const auto path = temp_path("bad.tsv");
  {
    std::ofstream f(path);
    f << "u0\t0\ton\nu1\tnot-a-number\toff\n";
  }
  EXPECT_THROW(read_manifest(path), DataError);
  std::filesystem::remove(path);
}
