#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace themescope {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace util {

// ---- strings ---------------------------------------------------------------

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool is_blank(std::string_view s);

// NFC-normalize then full Unicode case fold (ICU).
std::string casefold(std::string_view utf8);

// Case-folded maximal runs of Unicode letters and digits. Apostrophes inside
// a word are dropped ("don't" -> "dont").
std::vector<std::string> word_tokens(std::string_view utf8);

// Number of whitespace-separated tokens.
std::size_t word_count(std::string_view s);

// ---- hashing ---------------------------------------------------------------

std::string sha256_hex(std::string_view data);
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

// ---- files -----------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);
// Write-temp-then-rename so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// ---- CSV (RFC 4180 subset) -------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column, or -1.
  int column(std::string_view name) const;
};

// Lines starting with '#' before the header are treated as comments.
CsvTable parse_csv(std::string_view text);
std::string csv_escape(std::string_view field);
std::string csv_row(const std::vector<std::string>& fields);

// Shortest round-trip formatting, stable across runs.
std::string format_double(double v);

// ---- time ------------------------------------------------------------------

using TimePoint = std::chrono::sys_seconds;

// Accepts YYYY-MM-DD, YYYY-MM-DDTHH:MM[:SS[.frac]] with optional Z or +HH:MM.
TimePoint parse_iso8601(std::string_view s);
std::string format_iso8601(TimePoint t);
std::chrono::sys_days parse_date(std::string_view s);
std::string format_date(std::chrono::sys_days d);

// ---- deterministic RNG -------------------------------------------------------

// xoshiro256** seeded via splitmix64. Distribution helpers are implemented
// here rather than through <random> so streams are identical on every
// standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();                              // [0, 1)
  double uniform(double lo, double hi);
  std::size_t below(std::size_t n);              // [0, n)
  double normal();

  template <typename It>
  void shuffle(It first, It last) {
    auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

}  // namespace util
}  // namespace themescope
