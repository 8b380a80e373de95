#include "bertplm/config.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <sstream>
#include <variant>

namespace bertplm::config {

namespace {

using Field = std::variant<std::size_t Config::*, double Config::*, objective::PlmWeighting Config::*>;

struct Key {
  std::string_view name;
  Field field;
};

const std::array kKeys{
    Key{"layers", &Config::layers},
    Key{"d", &Config::d_model},
    Key{"d_ff", &Config::d_ff},
    Key{"heads", &Config::heads},
    Key{"max_seq_len", &Config::max_seq_len},
    Key{"dropout", &Config::dropout},
    Key{"init_std", &Config::init_std},
    Key{"layer_norm_eps", &Config::layer_norm_eps},
    Key{"mask_ratio_max", &Config::mask_ratio_max},
    Key{"sil_threshold", &Config::sil_threshold},
    Key{"plm_weighting", &Config::plm_weighting},
    Key{"finetune_lambda", &Config::finetune_lambda},
    Key{"lr", &Config::lr},
    Key{"beta1", &Config::beta1},
    Key{"beta2", &Config::beta2},
    Key{"adam_eps", &Config::adam_eps},
    Key{"batch_size", &Config::batch_size},
    Key{"epochs", &Config::epochs},
    Key{"finetune_epochs", &Config::finetune_epochs},
    Key{"patience", &Config::patience},
    Key{"eval_every", &Config::eval_every},
    Key{"holdout_fraction", &Config::holdout_fraction},
    Key{"valid_fraction", &Config::valid_fraction},
    Key{"test_fraction", &Config::test_fraction},
    Key{"train_fraction", &Config::train_fraction},
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string where(std::size_t line) { return line == 0 ? "override" : "line " + std::to_string(line); }

std::string key_list() {
  std::string out;
  for (const auto& k : kKeys) {
    if (!out.empty()) out += ", ";
    out += k.name;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

void assign(Config& c, std::string_view key, std::string_view value, std::size_t line) {
  const auto it = std::find_if(kKeys.begin(), kKeys.end(), [&](const Key& k) { return k.name == key; });
  if (it == kKeys.end()) {
    throw ConfigError("unknown config key '" + std::string(key) + "' at " + where(line) + "; valid keys: " + key_list(),
                      std::string(key), line);
  }
  auto fail = [&](std::string_view expected) {
    throw ConfigError("config key '" + std::string(key) + "' at " + where(line) + ": expected " +
                          std::string(expected) + ", got '" + std::string(value) + "'",
                      std::string(key), line);
  };
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(c.*member)>;
        if constexpr (std::is_same_v<T, std::size_t>) {
          if (!parse_number(value, c.*member)) fail("a non-negative integer");
        } else if constexpr (std::is_same_v<T, double>) {
          if (!parse_number(value, c.*member)) fail("a number");
        } else {
          if (value == "mean") {
            c.*member = objective::PlmWeighting::Mean;
          } else if (value == "sum") {
            c.*member = objective::PlmWeighting::Sum;
          } else {
            fail("'mean' or 'sum'");
          }
        }
      },
      it->field);
}

std::string format_value(const Config& c, const Field& field) {
  return std::visit(
      [&](auto member) -> std::string {
        using T = std::remove_cvref_t<decltype(c.*member)>;
        if constexpr (std::is_same_v<T, objective::PlmWeighting>) {
          return std::string(objective::to_string(c.*member));
        } else {
          // Shortest representation that parses back to the same value.
          std::array<char, 64> buf{};
          const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), c.*member);
          return std::string(buf.data(), r.ptr);
        }
      },
      field);
}

void check(bool ok, const char* key, const std::string& why) {
  if (!ok) throw ConfigError("config key '" + std::string(key) + "': " + why, key, 0);
}

}  // namespace

model::EncoderConfig Config::encoder(std::size_t vocab_size) const {
  model::EncoderConfig e;
  e.layers = layers;
  e.d_model = d_model;
  e.d_ff = d_ff;
  e.heads = heads;
  e.vocab_size = vocab_size;
  e.max_seq_len = max_seq_len;
  e.dropout = dropout;
  e.layer_norm_eps = layer_norm_eps;
  e.init_std = init_std;
  return e;
}

train::AdamHyper Config::adam() const { return {lr, beta1, beta2, adam_eps}; }

void Config::validate() const {
  check(layers > 0, "layers", "must be positive");
  check(d_model > 0, "d", "must be positive");
  check(d_ff > 0, "d_ff", "must be positive");
  check(heads > 0 && d_model % heads == 0, "heads", "must be positive and divide d");
  check(max_seq_len > 0, "max_seq_len", "must be positive");
  check(dropout >= 0.0 && dropout < 1.0, "dropout", "must lie in [0, 1)");
  check(init_std > 0.0, "init_std", "must be positive");
  check(layer_norm_eps > 0.0, "layer_norm_eps", "must be positive");
  check(mask_ratio_max > 0.0 && mask_ratio_max <= 1.0, "mask_ratio_max", "must lie in (0, 1]");
  check(sil_threshold > 0.0 && sil_threshold < 1.0, "sil_threshold", "must lie in (0, 1)");
  check(lr > 0.0, "lr", "must be positive");
  check(beta1 >= 0.0 && beta1 < 1.0, "beta1", "must lie in [0, 1)");
  check(beta2 >= 0.0 && beta2 < 1.0, "beta2", "must lie in [0, 1)");
  check(adam_eps > 0.0, "adam_eps", "must be positive");
  check(batch_size > 0, "batch_size", "must be positive");
  check(patience > 0, "patience", "must be positive");
  check(holdout_fraction >= 0.0 && holdout_fraction < 1.0, "holdout_fraction", "must lie in [0, 1)");
  check(valid_fraction >= 0.0 && valid_fraction < 1.0, "valid_fraction", "must lie in [0, 1)");
  check(test_fraction >= 0.0 && test_fraction < 1.0, "test_fraction", "must lie in [0, 1)");
  check(train_fraction > 0.0 && train_fraction <= 1.0, "train_fraction", "must lie in (0, 1]");
}

Config parse_config_text(std::string_view text, std::span<const Override> overrides) {
  Config c;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("expected 'key = value' at line " + std::to_string(line_no), std::string(line), line_no);
    }
    assign(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no);
  }
  for (const auto& [key, value] : overrides) assign(c, trim(key), trim(value), 0);
  c.validate();
  return c;
}

Config parse_config(const std::filesystem::path& path, std::span<const Override> overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), overrides);
}

Override parse_override(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(text) + "' is not KEY=VALUE", std::string(text), 0);
  }
  return {std::string(trim(text.substr(0, eq))), std::string(trim(text.substr(eq + 1)))};
}

std::string to_text(const Config& c) {
  std::string out;
  for (const auto& k : kKeys) {
    out += k.name;
    out += " = ";
    out += format_value(c, k.field);
    out += '\n';
  }
  return out;
}

std::vector<std::string> valid_keys() {
  std::vector<std::string> out;
  for (const auto& k : kKeys) out.emplace_back(k.name);
  return out;
}

}  // namespace bertplm::config
