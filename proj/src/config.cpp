#include "csnn/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace csnn {

using nlohmann::json;

namespace {

struct TomlParser {
  const std::string& text;
  std::size_t pos = 0;
  std::size_t line = 1;

  explicit TomlParser(const std::string& t) : text(t) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("config line " + std::to_string(line) + ": " + msg);
  }

  bool eof() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }
  char take() {
    const char c = text[pos++];
    if (c == '\n') ++line;
    return c;
  }

  void skip_ws(bool newlines) {
    while (!eof()) {
      const char c = peek();
      if (c == '#') {
        while (!eof() && peek() != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' ||
                 (newlines && c == '\n')) {
        take();
      } else {
        break;
      }
    }
  }

  std::string bare_key() {
    std::string key;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) ||
                      peek() == '_' || peek() == '-'))
      key.push_back(take());
    if (key.empty()) fail("expected a key");
    return key;
  }

  std::vector<std::string> dotted_key() {
    std::vector<std::string> parts{bare_key()};
    skip_ws(false);
    while (!eof() && peek() == '.') {
      take();
      skip_ws(false);
      parts.push_back(bare_key());
      skip_ws(false);
    }
    return parts;
  }

  std::string string_value() {
    take();  // opening quote
    std::string out;
    while (!eof()) {
      char c = take();
      if (c == '"') return out;
      if (c == '\\') {
        if (eof()) fail("dangling escape");
        const char e = take();
        switch (e) {
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          case '"': out.push_back('"'); break;
          case '\\': out.push_back('\\'); break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      } else if (c == '\n') {
        fail("unterminated string");
      } else {
        out.push_back(c);
      }
    }
    fail("unterminated string");
  }

  json scalar_value() {
    const char c = peek();
    if (c == '"') return string_value();
    if (c == '[') return array_value();
    std::string tok;
    while (!eof() && peek() != ',' && peek() != ']' && peek() != '\n' &&
           peek() != '#' && peek() != ' ' && peek() != '\t' && peek() != '\r')
      tok.push_back(take());
    if (tok == "true") return true;
    if (tok == "false") return false;
    if (tok.empty()) fail("expected a value");
    std::string digits = tok;
    digits.erase(std::remove(digits.begin(), digits.end(), '_'),
                 digits.end());
    const bool is_float = digits.find_first_of(".eE") != std::string::npos &&
                          digits != "e";
    try {
      std::size_t used = 0;
      if (is_float) {
        const double v = std::stod(digits, &used);
        if (used != digits.size()) fail("malformed number '" + tok + "'");
        return v;
      }
      const long long v = std::stoll(digits, &used);
      if (used != digits.size()) fail("malformed number '" + tok + "'");
      return v;
    } catch (const std::exception&) {
      fail("malformed value '" + tok + "'");
    }
  }

  json array_value() {
    take();  // '['
    json arr = json::array();
    skip_ws(true);
    if (!eof() && peek() == ']') {
      take();
      return arr;
    }
    for (;;) {
      skip_ws(true);
      arr.push_back(scalar_value());
      skip_ws(true);
      if (eof()) fail("unterminated array");
      const char c = take();
      if (c == ']') return arr;
      if (c != ',') fail("expected ',' or ']' in array");
      skip_ws(true);
      if (!eof() && peek() == ']') {  // trailing comma
        take();
        return arr;
      }
    }
  }

  json* navigate(json& root, const std::vector<std::string>& path,
                 bool array_of_tables) {
    json* node = &root;
    for (std::size_t i = 0; i < path.size(); ++i) {
      const bool last = i + 1 == path.size();
      json& slot = (*node)[path[i]];
      if (last && array_of_tables) {
        if (slot.is_null()) slot = json::array();
        if (!slot.is_array()) fail("'" + path[i] + "' is not a table array");
        slot.push_back(json::object());
        node = &slot.back();
      } else {
        if (slot.is_null()) slot = json::object();
        if (slot.is_array()) {
          if (slot.empty()) fail("empty table array '" + path[i] + "'");
          node = &slot.back();
        } else if (slot.is_object()) {
          node = &slot;
        } else {
          fail("'" + path[i] + "' is not a table");
        }
      }
    }
    return node;
  }

  json parse() {
    json root = json::object();
    json* current = &root;
    for (;;) {
      skip_ws(true);
      if (eof()) return root;
      if (peek() == '[') {
        take();
        const bool array_of_tables = !eof() && peek() == '[';
        if (array_of_tables) take();
        skip_ws(false);
        const auto path = dotted_key();
        skip_ws(false);
        if (eof() || take() != ']') fail("expected ']' after table name");
        if (array_of_tables && (eof() || take() != ']'))
          fail("expected ']]' after table-array name");
        current = navigate(root, path, array_of_tables);
        continue;
      }
      const auto keypath = dotted_key();
      skip_ws(false);
      if (eof() || take() != '=') fail("expected '=' after key");
      skip_ws(false);
      json value = scalar_value();
      json* node = current;
      for (std::size_t i = 0; i + 1 < keypath.size(); ++i) {
        json& slot = (*node)[keypath[i]];
        if (slot.is_null()) slot = json::object();
        node = &slot;
      }
      if (node->contains(keypath.back()))
        fail("duplicate key '" + keypath.back() + "'");
      (*node)[keypath.back()] = std::move(value);
      skip_ws(false);
      if (!eof() && peek() != '\n' && peek() != '#')
        fail("unexpected trailing characters after value");
    }
  }
};

template <typename T>
T get_or(const json& obj, const std::string& key, const T& fallback,
         const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

template <typename T>
T require(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key))
    throw ConfigError(where + ": missing required key '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

MaskRuleConfig parse_rule(const json& layer, const std::string& where) {
  const std::string rule = get_or<std::string>(layer, "rule", "hebb_all", where);
  MaskRuleConfig cfg;
  if (rule == "hebb_all") {
    cfg = MaskRuleConfig::hebb_all();
  } else if (rule == "oja_prefix") {
    cfg = MaskRuleConfig::oja_prefix();
  } else {
    throw ConfigError(where + ".rule: unknown rule '" + rule +
                      "' (hebb_all|oja_prefix)");
  }
  if (layer.contains("gamma")) cfg.gamma = layer.at("gamma").get<float>();
  const std::string avg =
      get_or<std::string>(layer, "mask_avg", "all_patches", where);
  if (avg == "all_patches")
    cfg.avg = MaskAvg::all_patches;
  else if (avg == "gated_patches")
    cfg.avg = MaskAvg::gated_patches;
  else
    throw ConfigError(where + ".mask_avg: unknown value '" + avg + "'");
  return cfg;
}

LayerSpec parse_layer(const json& layer, std::size_t index) {
  const std::string where = "network.layer[" + std::to_string(index) + "]";
  LayerSpec ls;
  ls.heads = require<std::size_t>(layer, "heads", where);
  const auto grid = require<std::vector<std::size_t>>(layer, "grid", where);
  if (grid.size() != 2) throw ConfigError(where + ".grid: expected [h, w]");
  ls.grid_h = grid[0];
  ls.grid_w = grid[1];
  const auto kernel =
      get_or<std::vector<std::size_t>>(layer, "kernel", {3, 3}, where);
  if (kernel.size() != 2) throw ConfigError(where + ".kernel: expected [h, w]");
  ls.kernel = {kernel[0], kernel[1]};
  const auto stride =
      get_or<std::vector<std::size_t>>(layer, "stride", {1, 1}, where);
  if (stride.size() != 2) throw ConfigError(where + ".stride: expected [h, w]");
  ls.stride = {stride[0], stride[1]};
  const std::string pad = get_or<std::string>(layer, "padding", "same", where);
  if (pad == "same")
    ls.padding = Padding::same;
  else if (pad == "valid")
    ls.padding = Padding::valid;
  else
    throw ConfigError(where + ".padding: unknown value '" + pad + "'");
  const std::string mask = get_or<std::string>(layer, "mask", "input", where);
  if (mask == "input")
    ls.mask_kind = MaskKind::input;
  else if (mask == "channel")
    ls.mask_kind = MaskKind::channel;
  else
    throw ConfigError(where + ".mask: unknown value '" + mask + "'");
  ls.rule = parse_rule(layer, where);
  ls.delta = get_or<float>(layer, "delta", 1.0f, where);
  ls.som_lr = get_or<float>(layer, "som_lr", 0.1f, where);
  ls.mask_lr = get_or<float>(layer, "mask_lr", 0.005f, where);
  ls.batch_norm = get_or<bool>(layer, "batch_norm", true, where);
  ls.max_pool = get_or<bool>(layer, "max_pool", true, where);
  return ls;
}

}  // namespace

json parse_toml(const std::string& text) {
  TomlParser parser(text);
  return parser.parse();
}

std::uint64_t ExperimentConfig::total_steps() const {
  std::uint64_t total = 0;
  for (const auto& l : network.layers) total = std::max(total, l.train_end);
  return total;
}

ExperimentConfig ExperimentConfig::from_toml_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  // Relative paths resolve against the config file's directory.
  return from_toml(buf.str(),
                   std::filesystem::absolute(path).parent_path());
}

ExperimentConfig ExperimentConfig::from_toml(
    const std::string& text, const std::filesystem::path& base_dir) {
  const json root = parse_toml(text);
  ExperimentConfig cfg;

  const json exp = root.value("experiment", json::object());
  cfg.name = get_or<std::string>(exp, "name", "run", "experiment");
  if (!exp.contains("seed"))
    throw ConfigError("experiment.seed is mandatory");
  cfg.seed = exp.at("seed").get<std::uint64_t>();
  const std::string out =
      require<std::string>(exp, "output_dir", "experiment");
  cfg.output_dir = std::filesystem::path(out).is_absolute()
                       ? std::filesystem::path(out)
                       : base_dir / out;

  const json ds = root.value("dataset", json::object());
  cfg.dataset_kind = require<std::string>(ds, "kind", "dataset");
  if (cfg.dataset_kind != "cifar10" && cfg.dataset_kind != "cifar100" &&
      cfg.dataset_kind != "mnist")
    throw ConfigError("dataset.kind: unknown kind '" + cfg.dataset_kind +
                      "' (cifar10|cifar100|mnist)");
  const std::string dpath = require<std::string>(ds, "path", "dataset");
  cfg.dataset_path = std::filesystem::path(dpath).is_absolute()
                         ? std::filesystem::path(dpath)
                         : base_dir / dpath;
  cfg.eval_count = get_or<std::size_t>(ds, "eval_count", 5000, "dataset");
  cfg.train_limit = get_or<std::size_t>(ds, "train_limit", 0, "dataset");

  const json net = root.value("network", json::object());
  const std::string preset =
      get_or<std::string>(net, "preset", "custom", "network");
  if (preset == "s-csnn") {
    cfg.network = NetworkSpec::s_csnn();
  } else if (preset == "d-csnn") {
    cfg.network = NetworkSpec::d_csnn();
  } else if (preset == "custom") {
    if (!net.contains("layer") || !net.at("layer").is_array() ||
        net.at("layer").empty())
      throw ConfigError(
          "network: custom preset requires [[network.layer]] blocks");
    cfg.network.preset = "custom";
    std::size_t i = 0;
    for (const auto& layer : net.at("layer"))
      cfg.network.layers.push_back(parse_layer(layer, i++));
  } else {
    throw ConfigError("network.preset: unknown preset '" + preset +
                      "' (s-csnn|d-csnn|custom)");
  }

  const auto intervals =
      require<std::vector<std::vector<std::uint64_t>>>(net, "intervals",
                                                       "network");
  if (intervals.size() != cfg.network.layers.size())
    throw ConfigError("network.intervals: expected " +
                      std::to_string(cfg.network.layers.size()) +
                      " [begin, end) pairs, got " +
                      std::to_string(intervals.size()));
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    if (intervals[i].size() != 2)
      throw ConfigError("network.intervals[" + std::to_string(i) +
                        "]: expected [begin, end]");
    cfg.network.layers[i].train_begin = intervals[i][0];
    cfg.network.layers[i].train_end = intervals[i][1];
  }
  cfg.network.validate();

  cfg.batch = get_or<std::size_t>(net, "batch", 1, "network");
  if (cfg.batch == 0) throw ConfigError("network.batch must be >= 1");
  cfg.ablation = ablation_from_string(
      get_or<std::string>(net, "ablation", "none", "network"));
  cfg.encode_batch = get_or<std::size_t>(net, "encode_batch", 64, "network");
  if (cfg.encode_batch == 0)
    throw ConfigError("network.encode_batch must be >= 1");

  if (net.contains("checkpoints")) {
    cfg.checkpoints = net.at("checkpoints").get<std::vector<std::uint64_t>>();
    std::sort(cfg.checkpoints.begin(), cfg.checkpoints.end());
    cfg.checkpoints.erase(
        std::unique(cfg.checkpoints.begin(), cfg.checkpoints.end()),
        cfg.checkpoints.end());
  } else {
    // Dense early, sparse late; mirrors the early-peak observation window.
    const std::uint64_t total = cfg.total_steps();
    for (std::uint64_t s : {0ull, 10ull, 50ull, 100ull, 500ull, 1000ull, 2000ull})
      if (s <= total) cfg.checkpoints.push_back(s);
    for (std::uint64_t s = 4000; s <= total; s += 2000)
      cfg.checkpoints.push_back(s);
    if (cfg.checkpoints.empty() || cfg.checkpoints.back() != total)
      cfg.checkpoints.push_back(total);
  }
  for (std::uint64_t c : cfg.checkpoints)
    if (c > cfg.total_steps())
      throw ConfigError("network.checkpoints: step " + std::to_string(c) +
                        " beyond the last training interval (" +
                        std::to_string(cfg.total_steps()) + ")");

  const json probe = root.value("probe", json::object());
  cfg.probe =
      ProbeSpec::by_name(get_or<std::string>(probe, "spec", "fc", "probe"));
  cfg.probe.epochs = get_or<std::size_t>(probe, "epochs", 100, "probe");
  cfg.probe.batch_size = get_or<std::size_t>(probe, "batch", 512, "probe");
  cfg.probe.adam.lr = get_or<float>(probe, "lr", 1e-3f, "probe");
  if (probe.contains("activation")) {
    const std::string act = probe.at("activation").get<std::string>();
    if (act == "elu")
      cfg.probe.activation = ProbeActivation::elu;
    else if (act == "relu")
      cfg.probe.activation = ProbeActivation::relu;
    else
      throw ConfigError("probe.activation: unknown value '" + act + "'");
  }
  return cfg;
}

std::string ExperimentConfig::to_toml() const {
  std::ostringstream out;
  out << "[experiment]\n";
  out << "name = \"" << name << "\"\n";
  out << "seed = " << seed << "\n";
  out << "output_dir = \"" << output_dir.string() << "\"\n\n";
  out << "[dataset]\n";
  out << "kind = \"" << dataset_kind << "\"\n";
  out << "path = \"" << dataset_path.string() << "\"\n";
  out << "eval_count = " << eval_count << "\n";
  out << "train_limit = " << train_limit << "\n\n";
  out << "[network]\n";
  out << "preset = \"custom\"\n";
  out << "batch = " << batch << "\n";
  out << "ablation = \"" << to_string(ablation) << "\"\n";
  out << "encode_batch = " << encode_batch << "\n";
  out << "intervals = [";
  for (std::size_t i = 0; i < network.layers.size(); ++i) {
    if (i) out << ", ";
    out << "[" << network.layers[i].train_begin << ", "
        << network.layers[i].train_end << "]";
  }
  out << "]\n";
  out << "checkpoints = [";
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (i) out << ", ";
    out << checkpoints[i];
  }
  out << "]\n";
  for (const auto& l : network.layers) {
    out << "\n[[network.layer]]\n";
    out << "heads = " << l.heads << "\n";
    out << "grid = [" << l.grid_h << ", " << l.grid_w << "]\n";
    out << "kernel = [" << l.kernel.h << ", " << l.kernel.w << "]\n";
    out << "stride = [" << l.stride.h << ", " << l.stride.w << "]\n";
    out << "padding = \"" << to_string(l.padding) << "\"\n";
    out << "mask = \""
        << (l.mask_kind == MaskKind::input ? "input" : "channel") << "\"\n";
    out << "rule = \""
        << (l.rule.input_mod == InputMod::all_masks ? "hebb_all"
                                                    : "oja_prefix")
        << "\"\n";
    out << "gamma = " << l.rule.gamma << "\n";
    out << "mask_avg = \""
        << (l.rule.avg == MaskAvg::all_patches ? "all_patches"
                                               : "gated_patches")
        << "\"\n";
    out << "delta = " << l.delta << "\n";
    out << "som_lr = " << l.som_lr << "\n";
    out << "mask_lr = " << l.mask_lr << "\n";
  }
  out << "\n[probe]\n";
  out << "spec = \"" << probe.name << "\"\n";
  out << "epochs = " << probe.epochs << "\n";
  out << "batch = " << probe.batch_size << "\n";
  out << "lr = " << probe.adam.lr << "\n";
  out << "activation = \""
      << (probe.activation == ProbeActivation::elu ? "elu" : "relu") << "\"\n";
  return out.str();
}

}  // namespace csnn
