#include "fqkl/config.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include "fqkl/errors.hpp"

namespace fqkl {

namespace {

struct SchemaEntry {
  const char* key;
  const char* def;
};

// Every configurable knob, with its default. README documents each one.
constexpr std::array<SchemaEntry, 48> kSchema = {{
    {"seed", "42"},
    {"data.source", "synthetic"},  // synthetic | rwhar | cache
    {"synth.classes", "4"},
    {"synth.windows_per_class", "100"},
    {"synth.window", "64"},
    {"synth.channels", "3"},
    {"synth.noise_sd", "0.3"},
    {"rwhar.dir", ""},
    {"rwhar.sensor", "acc"},
    {"rwhar.position", "chest"},
    {"rwhar.timestamp_col", "attr_time"},
    {"rwhar.axis_cols", "attr_x,attr_y,attr_z"},
    {"rwhar.rate_hz", "50"},
    {"rwhar.gap_periods", "3"},
    {"rwhar.window", "100"},
    {"rwhar.stride", "50"},
    {"rwhar.labels", ""},  // name:index pairs, comma separated
    {"cache.path", ""},
    {"split.test_fraction", "0.2"},
    {"split.by_subject", "false"},
    {"model.conv_layers", "1"},
    {"model.conv_filters", "64"},
    {"model.conv_width", "11"},
    {"model.rnn_layers", "2"},
    {"model.hidden", "64"},
    {"model.landmarks", "16"},
    {"model.dropout", "0.5"},
    {"model.gate_bias", "false"},
    {"model.baseline", "false"},
    {"model.mean_pool", "false"},
    {"kernel.block", "4"},
    {"kernel.depth", "0"},
    {"opt.lr", "1e-4"},
    {"opt.beta1", "0.9"},
    {"opt.beta2", "0.999"},
    {"opt.eps", "1e-8"},
    {"opt.weight_decay", "1e-4"},
    {"train.batch", "32"},
    {"train.rounds", "1"},
    {"train.epochs", "1"},
    {"fed.clients", "3"},
    {"fed.local_epochs", "4"},
    {"fed.rounds", "30"},
    {"fed.partition", "iid"},
    {"fed.eval_every", "1"},
    {"fed.max_message_mb", "1024"},
    {"grid.clients", "2,4,8"},
    {"grid.epochs", "1,2"},
}};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

KvConfig KvConfig::defaults() {
  KvConfig c;
  for (const auto& e : kSchema) c.values_[e.key] = e.def;
  return c;
}

KvConfig KvConfig::from_text(std::string_view text, const std::string& origin) {
  KvConfig c = defaults();
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": expected key=value, got '" + stripped + "'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (!c.has(key)) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown config key '" + key + "'");
    }
    c.values_[key] = value;
  }
  return c;
}

KvConfig KvConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str(), path.string());
}

bool KvConfig::has(std::string_view key) const { return values_.find(std::string(key)) != values_.end(); }

const std::string& KvConfig::raw(std::string_view key) const {
  auto it = values_.find(std::string(key));
  if (it == values_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return it->second;
}

void KvConfig::set(std::string_view key, std::string value) {
  auto it = values_.find(std::string(key));
  if (it == values_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second = std::move(value);
}

std::string KvConfig::get_str(std::string_view key) const { return raw(key); }

std::int64_t KvConfig::get_int(std::string_view key) const {
  const std::string& v = raw(key);
  try {
    std::size_t used = 0;
    const long long r = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + std::string(key) + "' must be an integer, got '" + v + "'");
  }
}

std::uint64_t KvConfig::get_u64(std::string_view key) const {
  const std::int64_t v = get_int(key);
  if (v < 0) throw ConfigError("config key '" + std::string(key) + "' must be >= 0");
  return static_cast<std::uint64_t>(v);
}

double KvConfig::get_double(std::string_view key) const {
  const std::string& v = raw(key);
  try {
    std::size_t used = 0;
    const double r = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + std::string(key) + "' must be a number, got '" + v + "'");
  }
}

bool KvConfig::get_bool(std::string_view key) const {
  const std::string& v = raw(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + std::string(key) + "' must be a boolean, got '" + v + "'");
}

std::vector<std::string> KvConfig::get_str_list(std::string_view key) const {
  std::vector<std::string> out;
  std::istringstream in(raw(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    const std::string t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::vector<std::size_t> KvConfig::get_size_list(std::string_view key) const {
  std::vector<std::size_t> out;
  for (const auto& item : get_str_list(key)) {
    try {
      const long long v = std::stoll(item);
      if (v < 0) throw std::invalid_argument("negative");
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("config key '" + std::string(key) + "' must be a list of integers, got '" +
                        raw(key) + "'");
    }
  }
  return out;
}

std::string KvConfig::require(std::string_view key, const std::string& why) const {
  const std::string& v = raw(key);
  if (v.empty()) {
    throw ConfigError("missing config key '" + std::string(key) + "' (" + why + ")");
  }
  return v;
}

std::string KvConfig::resolved_text() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

}  // namespace fqkl
