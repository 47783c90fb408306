#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

/// Batch front-end: one JSON experiment config in, CSV tables and a
/// plain-text summary out.
namespace twoscale::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitFailedCheck = 2;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;  // overrides the config
  std::optional<std::string> out;     // overrides output_dir
  std::optional<int> threads;         // overrides the config
  bool quiet = false;
};

/// Runs one experiment. Writes `<output_dir>/<name>/summary.txt` and the
/// mode's CSVs. Returns 0 on success, 2 when a criterion or certificate
/// fails, 1 on configuration or runtime errors (reported on `err`).
int run(const Options& options, std::ostream& out, std::ostream& err);

/// Flag parsing plus run(); the body of the twoscale_run executable.
int main(int argc, char** argv);

}  // namespace twoscale::cli
