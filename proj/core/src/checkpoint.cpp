#include "bertplm/checkpoint.hpp"

#include <charconv>
#include <cstring>

#include "binary_io.hpp"

namespace bertplm::train {

namespace {

constexpr std::string_view kStepKey = "checkpoint.step";
const std::string kMomentM = "adam.m/";
const std::string kMomentV = "adam.v/";

std::string metadata_text(const Checkpoint& ckpt) {
  return config::to_text(ckpt.config) + std::string(kStepKey) + " = " + std::to_string(ckpt.step) + "\n";
}

struct Metadata {
  std::string config_text;
  std::uint64_t step = 0;
};

// Peels the checkpoint.* lines off the stored text; the rest is config.
Metadata split_metadata(std::string_view text, std::size_t offset) {
  Metadata m;
  bool have_step = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    auto read_value = [&](std::string_view key) -> std::optional<std::uint64_t> {
      if (line.substr(0, key.size()) != key) return std::nullopt;
      auto eq = line.find('=');
      if (eq == std::string_view::npos) throw FormatError("malformed checkpoint metadata line", offset);
      auto v = line.substr(eq + 1);
      while (!v.empty() && v.front() == ' ') v.remove_prefix(1);
      std::uint64_t out = 0;
      const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
      if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw FormatError("malformed checkpoint metadata value", offset);
      }
      return out;
    };
    if (auto s = read_value(kStepKey)) {
      m.step = *s;
      have_step = true;
    } else {
      m.config_text.append(line);
      m.config_text += '\n';
    }
  }
  if (!have_step) throw FormatError("checkpoint metadata lacks the training step", offset);
  return m;
}

}  // namespace

model::EncoderParams Checkpoint::encoder() const {
  const auto emb = arrays.find("phoneme_embedding");
  if (!emb) throw ShapeError("checkpoint has no phoneme_embedding array");
  return model::EncoderParams::from_named(config.encoder(arrays[*emb].rows()), arrays);
}

std::optional<OptimState> Checkpoint::optim(const model::EncoderParams& params) const {
  const auto& ps = params.params();
  std::vector<ad::Tensor> m, v;
  bool any = false;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto mi = arrays.find(kMomentM + ps.name(i));
    const auto vi = arrays.find(kMomentV + ps.name(i));
    if (mi.has_value() != vi.has_value()) throw ShapeError("checkpoint has half of the moments for " + ps.name(i));
    if (!mi) {
      m.emplace_back(ps[i].dims());
      v.emplace_back(ps[i].dims());
      continue;
    }
    any = true;
    m.push_back(arrays[*mi]);
    v.push_back(arrays[*vi]);
  }
  if (!any) return std::nullopt;
  const auto step_at = arrays.find("adam.step");
  std::uint64_t step = 0;
  if (step_at) step = static_cast<std::uint64_t>(arrays[*step_at].item());
  return OptimState(ps, config.adam(), std::move(m), std::move(v), step);
}

Checkpoint make_checkpoint(const model::EncoderParams& params, const OptimState* optim, const config::Config& config,
                           std::uint64_t step) {
  Checkpoint c;
  c.config = config;
  c.step = step;
  const auto& ps = params.params();
  for (std::size_t i = 0; i < ps.size(); ++i) c.arrays.add(ps.name(i), ps[i]);
  if (optim) {
    if (optim->size() != ps.size()) throw ShapeError("optimizer state does not match the parameter list");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      c.arrays.add(kMomentM + ps.name(i), optim->m(i));
      c.arrays.add(kMomentV + ps.name(i), optim->v(i));
    }
    c.arrays.add("adam.step", ad::Tensor::scalar(static_cast<double>(optim->step())));
  }
  return c;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  detail::Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (std::size_t i = 0; i < ckpt.arrays.size(); ++i) {
    const auto& name = ckpt.arrays.name(i);
    const auto& t = ckpt.arrays[i];
    if (name.size() > 0xffff) throw ContractError("array name longer than 65535 bytes");
    if (t.rank() > 0xff) throw ContractError("array rank above 255");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.dims()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.data()) w.f32(static_cast<float>(v));
  }
  const std::string text = metadata_text(ckpt);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text.data(), text.size());
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw FormatError("bad checkpoint magic, expected CKP1", 0);
  r.str(4, "magic");
  Checkpoint c;
  const std::uint32_t count = r.u32("entry count");
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::size_t entry_at = r.offset();
    std::string name = r.str(r.u16("name length"), "array name");
    const std::uint8_t rank = r.u8("rank");
    ad::Dims dims(rank);
    std::size_t n = 1;
    for (auto& d : dims) {
      d = r.u32("dims");
      n *= d;
    }
    r.need(n * 4, "array payload");
    std::vector<double> values(n);
    for (auto& v : values) v = r.f32("array payload");
    if (c.arrays.find(name)) throw FormatError("duplicate array name " + name, entry_at);
    c.arrays.add(std::move(name), ad::Tensor::unchecked(std::move(dims), std::move(values)));
  }
  const std::size_t text_at = r.offset();
  const std::string text = r.str(r.u32("config length"), "config text");
  if (r.offset() != bytes.size()) throw FormatError("trailing bytes after config text", r.offset());
  const Metadata meta = split_metadata(text, text_at);
  c.step = meta.step;
  try {
    c.config = config::parse_config_text(meta.config_text);
  } catch (const config::ConfigError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what(), text_at);
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  detail::spit_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(detail::slurp(path)); }

}  // namespace bertplm::train
