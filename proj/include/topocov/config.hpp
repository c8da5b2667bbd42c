#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "topocov/core.hpp"
#include "topocov/kernels.hpp"

namespace topocov {

constexpr int kFormatVersion = 1;

std::vector<std::string> experiment_names();

// Resolved run configuration: every key of the experiment's schema, with
// defaults filled in and values in canonical text form ("section.key").
struct RunConfig {
  std::string experiment;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "results";
  int workers = 1;
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const { return values.count(key) != 0; }
  const std::string& str(const std::string& key) const;
  double real(const std::string& key) const;
  long integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;
  std::vector<int> integers(const std::string& key) const;
  Rect rect(const std::string& key) const;

  // Sorted key=value lines of the hashed keys (everything but seed, output
  // directory and worker count).
  std::string canonical() const;
  std::uint64_t hash() const;
  std::string hash_hex() const;
  std::uint64_t require_seed() const;
};

std::uint64_t fnv1a64(std::string_view text);

// INI text with [section] headers; unknown keys and malformed values raise
// Validation errors naming the key.
RunConfig parse_config(const std::string& experiment, std::istream& ini);
RunConfig load_config(const std::string& experiment, const std::string& path);
RunConfig default_config(const std::string& experiment);
// Sets a key from text, validating it against the schema.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

KernelPtr config_kernel(const RunConfig& cfg);

// Appends a row to an append-only CSV ledger, writing the header first when
// the file is new; an existing file with a different header is an Io error.
// An empty row only makes sure the header is there.
void append_summary(const std::string& path, const std::string& header, const std::string& row);

// Two-column "# x y" data file; an empty series leaves only the header.
void write_plot_data(const std::string& path, const std::string& xname, const std::string& yname,
                     const std::vector<double>& x, const std::vector<double>& y);

void write_text_file(const std::string& path, const std::string& content);

std::string format_real(double v);

}  // namespace topocov
