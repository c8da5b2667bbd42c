#include "topocov/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace topocov {

namespace {

enum class Type { Int, Real, Str, Bool, Reals, Ints, Rect };

struct KeySpec {
  const char* key;
  Type type;
  const char* fallback;
  std::vector<std::string> experiments;  // empty: every experiment
  double min = -std::numeric_limits<double>::infinity();
  bool strict_min = false;
  std::vector<std::string> choices = {};
};

constexpr double kInf = std::numeric_limits<double>::infinity();

const std::vector<KeySpec>& schema() {
  static const std::vector<KeySpec> s = {
      {"kernel.name", Type::Str, "bargmann-fock", {"sample", "formula", "mixing", "concentration", "harris"}},
      {"grid.h", Type::Real, "0.25", {"sample", "formula", "mixing", "concentration"}, 0.0, true},
      {"mean.level", Type::Real, "0", {"sample", "formula", "mixing", "concentration"}},

      {"sample.box", Type::Rect, "0,4,0,4", {"sample"}},
      {"sample.draws", Type::Int, "1", {"sample"}, 1},
      {"sample.method", Type::Str, "auto", {"sample"}, -kInf, false, {"auto", "exact", "fft"}},
      {"sample.format", Type::Str, "csv", {"sample"}, -kInf, false, {"csv", "binary"}},

      {"piterbarg.m", Type::Int, "1", {"piterbarg"}, 1},
      {"piterbarg.a_lo", Type::Reals, "0", {"piterbarg"}},
      {"piterbarg.a_hi", Type::Reals, "inf", {"piterbarg"}},
      {"piterbarg.b_lo", Type::Reals, "0", {"piterbarg"}},
      {"piterbarg.b_hi", Type::Reals, "inf", {"piterbarg"}},
      {"piterbarg.mean", Type::Reals, "0", {"piterbarg"}},
      {"piterbarg.n", Type::Int, "100000", {"piterbarg"}, 1},
      {"piterbarg.t_nodes", Type::Int, "32", {"piterbarg"}, 1},

      {"events.box1", Type::Rect, "0,2,0,2", {"formula"}},
      {"events.box2", Type::Rect, "3,5,0,2", {"formula"}},
      {"events.kind", Type::Str, "crossing", {"formula"}, -kInf, false, {"crossing", "count"}},
      {"events.direction", Type::Str, "lr", {"formula"}, -kInf, false, {"lr", "tb"}},
      {"events.sign", Type::Str, "geq", {"formula"}, -kInf, false, {"geq", "leq"}},
      {"events.level", Type::Real, "0", {"formula"}},
      {"events.threshold", Type::Int, "1", {"formula"}, 0},
      {"formula.spatial_nodes", Type::Int, "6", {"formula"}, 1},
      {"formula.t_nodes", Type::Int, "16", {"formula"}, 1},
      {"formula.n_mc", Type::Int, "2000", {"formula"}, 1},
      {"formula.n_lhs", Type::Int, "200000", {"formula"}, 1000},
      {"formula.delta", Type::Real, "0", {"formula"}, 0.0},
      {"formula.stencil", Type::Str, "node", {"formula"}, -kInf, false, {"node", "plus", "block"}},
      {"formula.corner_strata", Type::Bool, "false", {"formula"}},
      {"formula.with_lhs", Type::Bool, "true", {"formula"}},

      {"mixing.separations", Type::Reals, "2,3,4", {"mixing"}, 0.0, true},
      {"mixing.side", Type::Real, "0", {"mixing"}, 0.0},
      {"mixing.family", Type::Str, "crossing", {"mixing"}, -kInf, false, {"crossing", "default"}},
      {"mixing.n", Type::Int, "100000", {"mixing"}, 20},
      {"mixing.c_d", Type::Real, "1", {"mixing"}, 0.0},
      {"mixing.n_mc", Type::Int, "4000", {"mixing"}, 2},
      {"mixing.with_bound", Type::Bool, "true", {"mixing"}},

      {"concentration.box", Type::Rect, "0,1,0,1", {"concentration"}},
      {"concentration.scales", Type::Reals, "8,16,32", {"concentration"}, 1.0},
      {"concentration.n", Type::Int, "2000", {"concentration"}, 40},
      {"concentration.epsilon", Type::Real, "-1", {"concentration"}},
      {"concentration.epsilon_fraction", Type::Real, "0.3", {"concentration"}, 0.0},
      {"concentration.r_coef", Type::Real, "1", {"concentration"}, 0.0, true},
      {"concentration.r_power", Type::Real, "0.5", {"concentration"}},
      {"concentration.C", Type::Real, "1", {"concentration"}, 0.0},
      {"concentration.c_B", Type::Real, "1", {"concentration"}, 0.0},

      {"kostlan.degrees", Type::Ints, "8,16,32,64", {"kostlan"}, 0},
      {"kostlan.cap1", Type::Reals, "0,0.5", {"kostlan"}},
      {"kostlan.cap2", Type::Reals, "1,1.5", {"kostlan"}},
      {"kostlan.n", Type::Int, "20000", {"kostlan"}, 20},
      {"kostlan.resolution", Type::Int, "2048", {"kostlan"}, 8},
      {"kostlan.zero_n", Type::Int, "1000", {"kostlan"}, 2},
      {"kostlan.zero_resolution", Type::Int, "4096", {"kostlan"}, 8},

      {"harris.nu", Type::Real, "1.3333333333333333", {"harris"}, 0.0, true},
      {"harris.scales", Type::Reals, "1,2,4,8,16", {"harris"}, 0.0, true},
      {"harris.box", Type::Rect, "0,1,0,1", {"harris"}},
      {"harris.box1", Type::Rect, "0,1,0,1", {"harris"}},
      {"harris.box2", Type::Rect, "2,3,0,1", {"harris"}},
  };
  return s;
}

bool applies(const KeySpec& k, const std::string& experiment) {
  return k.experiments.empty() ||
         std::find(k.experiments.begin(), k.experiments.end(), experiment) != k.experiments.end();
}

const KeySpec* find_spec(const std::string& key) {
  for (const KeySpec& k : schema())
    if (key == k.key) return &k;
  return nullptr;
}

std::string trim(std::string s) {
  auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& why) {
  fail(ErrorKind::Validation, "config key '" + key + "' = '" + value + "': " + why);
}

double parse_real(const std::string& key, const std::string& text) {
  std::string t = lower(trim(text));
  if (t == "inf" || t == "+inf") return kInf;
  if (t == "-inf") return -kInf;
  try {
    std::size_t used = 0;
    double v = std::stod(t, &used);
    if (used != t.size() || !std::isfinite(v)) bad(key, text, "not a finite number");
    return v;
  } catch (const std::logic_error&) {
    bad(key, text, "not a number");
  }
}

long parse_int(const std::string& key, const std::string& text) {
  std::string t = trim(text);
  try {
    std::size_t used = 0;
    long v = std::stol(t, &used);
    if (used != t.size()) bad(key, text, "not an integer");
    return v;
  } catch (const std::logic_error&) {
    bad(key, text, "not an integer");
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

void check_min(const KeySpec& k, const std::string& text, double v) {
  if (k.strict_min ? !(v > k.min) : !(v >= k.min))
    bad(k.key, text, std::string("must be ") + (k.strict_min ? "> " : ">= ") + format_real(k.min));
}

// Canonical text of a value, or a Validation error.
std::string normalise(const KeySpec& k, const std::string& raw) {
  const std::string text = trim(raw);
  switch (k.type) {
    case Type::Int: {
      long v = parse_int(k.key, text);
      check_min(k, text, static_cast<double>(v));
      return std::to_string(v);
    }
    case Type::Real: {
      double v = parse_real(k.key, text);
      check_min(k, text, v);
      return format_real(v);
    }
    case Type::Str: {
      std::string v = lower(text);
      if (v.empty()) bad(k.key, text, "empty value");
      if (!k.choices.empty() && std::find(k.choices.begin(), k.choices.end(), v) == k.choices.end()) {
        std::string opts;
        for (const auto& c : k.choices) opts += (opts.empty() ? "" : ", ") + c;
        bad(k.key, text, "expected one of " + opts);
      }
      return v;
    }
    case Type::Bool: {
      std::string v = lower(text);
      if (v == "true" || v == "1" || v == "yes" || v == "on") return "true";
      if (v == "false" || v == "0" || v == "no" || v == "off") return "false";
      bad(k.key, text, "expected true or false");
    }
    case Type::Reals:
    case Type::Ints:
    case Type::Rect: {
      auto items = split_list(text);
      if (items.empty()) bad(k.key, text, "empty list");
      std::string out;
      std::vector<double> vals;
      for (const auto& it : items) {
        double v = k.type == Type::Ints ? static_cast<double>(parse_int(k.key, it)) : parse_real(k.key, it);
        if (k.type != Type::Rect) check_min(k, text, v);
        vals.push_back(v);
        out += (out.empty() ? "" : ",") + (k.type == Type::Ints ? std::to_string(static_cast<long>(v)) : format_real(v));
      }
      if (k.type == Type::Rect) {
        if (vals.size() != 4) bad(k.key, text, "a box needs x0,x1,y0,y1");
        if (!(vals[1] > vals[0] && vals[3] > vals[2]) || !std::isfinite(vals[1]) || !std::isfinite(vals[3]))
          bad(k.key, text, "a box needs x0 < x1 and y0 < y1");
      }
      return out;
    }
  }
  return text;
}

bool known_experiment(const std::string& e) {
  auto names = experiment_names();
  return std::find(names.begin(), names.end(), e) != names.end();
}

}  // namespace

std::string format_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Shortest text that round-trips.
  for (int p = 1; p <= 17; ++p) {
    char b[40];
    std::snprintf(b, sizeof b, "%.*g", p, v);
    if (std::strtod(b, nullptr) == v) return b;
  }
  return buf;
}

std::vector<std::string> experiment_names() {
  return {"sample", "piterbarg", "formula", "mixing", "concentration", "kostlan", "harris"};
}

const std::string& RunConfig::str(const std::string& key) const {
  auto it = values.find(key);
  require(it != values.end(), ErrorKind::Contract, "config key '" + key + "' is not part of this experiment");
  return it->second;
}

double RunConfig::real(const std::string& key) const { return parse_real(key, str(key)); }
long RunConfig::integer(const std::string& key) const { return parse_int(key, str(key)); }
bool RunConfig::flag(const std::string& key) const { return str(key) == "true"; }

std::vector<double> RunConfig::reals(const std::string& key) const {
  std::vector<double> out;
  for (const auto& it : split_list(str(key))) out.push_back(parse_real(key, it));
  return out;
}

std::vector<int> RunConfig::integers(const std::string& key) const {
  std::vector<int> out;
  for (const auto& it : split_list(str(key))) out.push_back(static_cast<int>(parse_int(key, it)));
  return out;
}

Rect RunConfig::rect(const std::string& key) const {
  auto v = reals(key);
  require(v.size() == 4, ErrorKind::Validation, "config key '" + key + "': a box needs 4 numbers");
  return {v[0], v[1], v[2], v[3]};
}

std::string RunConfig::canonical() const {
  std::string out = "experiment=" + experiment + "\n";
  for (const auto& [k, v] : values) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t RunConfig::hash() const { return fnv1a64(canonical()); }

std::string RunConfig::hash_hex() const {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

std::uint64_t RunConfig::require_seed() const {
  require(seed.has_value(), ErrorKind::Validation, "config: no seed given (set run.seed or pass --seed)");
  return *seed;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "run.seed") {
    std::string t = trim(value);
    try {
      std::size_t used = 0;
      unsigned long long v = std::stoull(t, &used);
      if (used != t.size() || t.empty() || t[0] == '-') bad(key, value, "not a non-negative integer");
      cfg.seed = v;
    } catch (const std::logic_error&) {
      bad(key, value, "not a non-negative integer");
    }
    return;
  }
  if (key == "run.out") {
    cfg.out_dir = trim(value);
    return;
  }
  if (key == "run.workers") {
    long w = parse_int(key, value);
    if (w < 1) bad(key, value, "must be >= 1");
    cfg.workers = static_cast<int>(w);
    return;
  }
  if (key.rfind("kernel.", 0) == 0 && key != "kernel.name") {
    require(cfg.has("kernel.name"), ErrorKind::Validation, "config key '" + key + "' is not used by " + cfg.experiment);
    cfg.values[key] = format_real(parse_real(key, value));
    return;
  }
  const KeySpec* k = find_spec(key);
  if (!k || !applies(*k, cfg.experiment))
    fail(ErrorKind::Validation, "config key '" + key + "' is not used by " + cfg.experiment);
  cfg.values[key] = normalise(*k, value);
}

RunConfig default_config(const std::string& experiment) {
  require(known_experiment(experiment), ErrorKind::Validation, "unknown experiment '" + experiment + "'");
  RunConfig cfg;
  cfg.experiment = experiment;
  for (const KeySpec& k : schema())
    if (applies(k, experiment)) cfg.values[k.key] = normalise(k, k.fallback);
  return cfg;
}

RunConfig parse_config(const std::string& experiment, std::istream& ini) {
  RunConfig cfg = default_config(experiment);
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(ini, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    fail(ErrorKind::Validation, std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) fail(ErrorKind::Validation, "config: key '" + section + "' lies outside any section");
    for (const auto& [key, node] : body) set_config_value(cfg, section + "." + key, node.data());
  }
  return cfg;
}

RunConfig load_config(const std::string& experiment, const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "config: cannot open '" + path + "'");
  return parse_config(experiment, in);
}

KernelPtr config_kernel(const RunConfig& cfg) {
  std::map<std::string, double> params;
  for (const auto& [k, v] : cfg.values)
    if (k.rfind("kernel.", 0) == 0 && k != "kernel.name") params[k.substr(7)] = parse_real(k, v);
  return make_kernel(cfg.str("kernel.name"), params);
}

void append_summary(const std::string& path, const std::string& header, const std::string& row) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  bool fresh = !std::filesystem::exists(p) || std::filesystem::file_size(p) == 0;
  if (!fresh) {
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    if (first != header) fail(ErrorKind::Io, "ledger '" + path + "' has a different header");
  }
  std::ofstream out(path, std::ios::app);
  if (!out) fail(ErrorKind::Io, "cannot write ledger '" + path + "'");
  if (fresh) out << header << "\n";
  if (!row.empty()) out << row << "\n";
}

void write_plot_data(const std::string& path, const std::string& xname, const std::string& yname,
                     const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size(), ErrorKind::Contract, "plot data: series lengths differ");
  std::ostringstream s;
  s << "# " << xname << " " << yname << "\n";
  for (std::size_t k = 0; k < x.size(); ++k) s << format_real(x[k]) << " " << format_real(y[k]) << "\n";
  write_text_file(path, s.str());
}

void write_text_file(const std::string& path, const std::string& content) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  out << content;
}

}  // namespace topocov
