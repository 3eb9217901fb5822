#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "themescope/util.hpp"

namespace themescope {

class VectorSet;

enum class Platform { PaidAds, PublicPosts };
enum class Stance { ProClimate, ProEnergy, Neutral };

inline constexpr std::size_t kStanceCount = 3;

std::string_view to_string(Platform p);
std::string_view to_string(Stance s);
Platform parse_platform(std::string_view s);
Stance parse_stance(std::string_view s);
std::optional<Stance> try_parse_stance(std::string_view s);
inline std::size_t stance_index(Stance s) { return static_cast<std::size_t>(s); }

struct Document {
  std::string id;
  Platform platform = Platform::PaidAds;
  std::string text;
  util::TimePoint timestamp{};
  std::optional<std::string> advertiser;
  std::optional<std::uint64_t> impressions_low, impressions_high;
  std::optional<double> spend_low, spend_high;
  std::optional<Stance> stance;

  std::chrono::sys_days date() const { return std::chrono::floor<std::chrono::days>(timestamp); }
};

struct Corpus {
  std::vector<Document> documents;
  std::string source_name;
  std::string keyword_list_version;

  std::size_t size() const { return documents.size(); }
  bool empty() const { return documents.empty(); }
};

struct KeywordList {
  std::vector<std::string> phrases;  // case-folded
  std::string version;
};

// Raised while validating ingested records. Carries the offending record
// index (0-based, data rows only) and field name when known.
class ValidationError : public Error {
 public:
  ValidationError(std::string message, std::optional<std::size_t> record, std::string field)
      : Error(std::move(message)), record_(record), field_(std::move(field)) {}
  std::optional<std::size_t> record() const { return record_; }
  const std::string& field() const { return field_; }

 private:
  std::optional<std::size_t> record_;
  std::string field_;
};

namespace corpus {

enum class Format { Jsonl, Csv };

Format parse_format(std::string_view s);

Corpus load_corpus(const std::filesystem::path& path, Format format);
Corpus parse_jsonl(std::string_view text, std::string source_name);
Corpus parse_csv(std::string_view text, std::string source_name);

// Checks every Document invariant plus id uniqueness, then sorts by
// (timestamp, id).
void validate_and_sort(Corpus& corpus);

std::string to_jsonl(const Corpus& corpus);

KeywordList load_keywords(const std::filesystem::path& path);
KeywordList make_keywords(std::vector<std::string> phrases, std::string version);

Corpus filter_by_keywords(const Corpus& corpus, const KeywordList& keywords);

// Greedy near-duplicate removal in corpus order. A document survives iff its
// cosine similarity to every previously kept document is strictly below
// `threshold`.
Corpus deduplicate(const Corpus& corpus, const VectorSet& vectors, double threshold = 0.80);

struct WindowSplit {
  Corpus before;
  Corpus after;
};

// before: dates in [event - window_days, event); after: (event, event + window_days].
WindowSplit window_split(const Corpus& corpus, std::chrono::sys_days event_date, int window_days);

}  // namespace corpus
}  // namespace themescope
