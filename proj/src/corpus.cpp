#include "themescope/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <cmath>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "themescope/embedding.hpp"

namespace themescope {

using nlohmann::json;

std::string_view to_string(Platform p) {
  return p == Platform::PaidAds ? "PAID_ADS" : "PUBLIC_POSTS";
}

std::string_view to_string(Stance s) {
  switch (s) {
    case Stance::ProClimate: return "PRO_CLIMATE";
    case Stance::ProEnergy: return "PRO_ENERGY";
    case Stance::Neutral: return "NEUTRAL";
  }
  return "NEUTRAL";
}

namespace {

std::string upper_snake(std::string_view s) {
  std::string out;
  for (char c : util::trim(s)) {
    if (c == '-' || c == ' ') out.push_back('_');
    else out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace

Platform parse_platform(std::string_view s) {
  auto u = upper_snake(s);
  if (u == "PAID_ADS") return Platform::PaidAds;
  if (u == "PUBLIC_POSTS") return Platform::PublicPosts;
  throw Error("unknown platform: " + std::string(s));
}

std::optional<Stance> try_parse_stance(std::string_view s) {
  auto u = upper_snake(s);
  if (u == "PRO_CLIMATE") return Stance::ProClimate;
  if (u == "PRO_ENERGY") return Stance::ProEnergy;
  if (u == "NEUTRAL") return Stance::Neutral;
  return std::nullopt;
}

Stance parse_stance(std::string_view s) {
  if (auto st = try_parse_stance(s)) return *st;
  throw Error("unknown stance: " + std::string(s));
}

namespace corpus {

Format parse_format(std::string_view s) {
  auto u = upper_snake(s);
  if (u == "JSONL") return Format::Jsonl;
  if (u == "CSV") return Format::Csv;
  throw Error("unknown corpus format: " + std::string(s));
}

namespace {

// Field accessor shared by the JSONL and CSV readers.
struct RawRecord {
  std::function<std::optional<std::string>(const char*)> get_string;
  std::function<std::optional<double>(const char*)> get_number;
};

[[noreturn]] void fail(std::size_t index, const std::string& field, const std::string& what) {
  throw ValidationError("record " + std::to_string(index) + ": field '" + field + "': " + what, index, field);
}

Document build_document(const RawRecord& r, std::size_t index) {
  Document d;
  auto id = r.get_string("id");
  if (!id || util::is_blank(*id)) fail(index, "id", "missing or empty");
  d.id = *id;

  auto platform = r.get_string("platform");
  if (!platform) fail(index, "platform", "missing");
  try {
    d.platform = parse_platform(*platform);
  } catch (const Error& e) {
    fail(index, "platform", e.what());
  }

  auto text = r.get_string("text");
  if (!text || util::is_blank(*text)) fail(index, "text", "missing or empty after trim");
  d.text = *text;

  auto ts = r.get_string("timestamp");
  if (!ts) fail(index, "timestamp", "missing");
  try {
    d.timestamp = util::parse_iso8601(util::trim(*ts));
  } catch (const Error& e) {
    fail(index, "timestamp", e.what());
  }

  if (auto adv = r.get_string("advertiser"); adv && !adv->empty()) d.advertiser = *adv;

  auto count_field = [&](const char* name) -> std::optional<std::uint64_t> {
    auto v = r.get_number(name);
    if (!v) return std::nullopt;
    if (*v < 0 || std::floor(*v) != *v) fail(index, name, "must be a non-negative integer");
    return static_cast<std::uint64_t>(*v);
  };
  auto money_field = [&](const char* name) -> std::optional<double> {
    auto v = r.get_number(name);
    if (!v) return std::nullopt;
    if (*v < 0 || !std::isfinite(*v)) fail(index, name, "must be non-negative");
    return *v;
  };
  d.impressions_low = count_field("impressions_low");
  d.impressions_high = count_field("impressions_high");
  if (d.impressions_low && d.impressions_high && *d.impressions_low > *d.impressions_high) {
    fail(index, "impressions", "impressions_low exceeds impressions_high");
  }
  d.spend_low = money_field("spend_low");
  d.spend_high = money_field("spend_high");
  if (d.spend_low && d.spend_high && *d.spend_low > *d.spend_high) {
    fail(index, "spend", "spend_low exceeds spend_high");
  }

  if (auto st = r.get_string("stance"); st && !util::is_blank(*st)) {
    auto parsed = try_parse_stance(*st);
    if (!parsed) fail(index, "stance", "unknown stance '" + *st + "'");
    d.stance = parsed;
  }
  return d;
}

std::optional<double> parse_number(const std::string& s, std::size_t index, const char* field) {
  auto t = util::trim(s);
  if (t.empty()) return std::nullopt;
  double v = 0;
  auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size()) fail(index, field, "not a number: '" + t + "'");
  return v;
}

}  // namespace

void validate_and_sort(Corpus& corpus) {
  std::unordered_set<std::string> seen;
  for (const auto& d : corpus.documents) {
    if (!seen.insert(d.id).second) {
      throw ValidationError("duplicate document id: " + d.id, std::nullopt, "id");
    }
  }
  std::stable_sort(corpus.documents.begin(), corpus.documents.end(), [](const Document& a, const Document& b) {
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.id < b.id;
  });
}

Corpus parse_jsonl(std::string_view text, std::string source_name) {
  Corpus c;
  c.source_name = std::move(source_name);
  std::size_t index = 0;
  for (const auto& line : util::split(text, '\n')) {
    if (util::is_blank(line)) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(index, "<record>", std::string("malformed JSON: ") + e.what());
    }
    if (!obj.is_object()) fail(index, "<record>", "not a JSON object");
    RawRecord r;
    r.get_string = [&](const char* name) -> std::optional<std::string> {
      auto it = obj.find(name);
      if (it == obj.end() || it->is_null()) return std::nullopt;
      if (!it->is_string()) fail(index, name, "expected a string");
      return it->get<std::string>();
    };
    r.get_number = [&](const char* name) -> std::optional<double> {
      auto it = obj.find(name);
      if (it == obj.end() || it->is_null()) return std::nullopt;
      if (it->is_number()) return it->get<double>();
      if (it->is_string()) return parse_number(it->get<std::string>(), index, name);
      fail(index, name, "expected a number");
    };
    c.documents.push_back(build_document(r, index));
    ++index;
  }
  validate_and_sort(c);
  return c;
}

Corpus parse_csv(std::string_view text, std::string source_name) {
  Corpus c;
  c.source_name = std::move(source_name);
  auto table = util::parse_csv(text);
  for (std::size_t index = 0; index < table.rows.size(); ++index) {
    const auto& row = table.rows[index];
    if (row.size() != table.header.size()) {
      fail(index, "<record>", "expected " + std::to_string(table.header.size()) + " fields, got " +
                                  std::to_string(row.size()));
    }
    RawRecord r;
    r.get_string = [&](const char* name) -> std::optional<std::string> {
      int col = table.column(name);
      if (col < 0) return std::nullopt;
      const auto& v = row[static_cast<std::size_t>(col)];
      if (v.empty()) return std::nullopt;
      return v;
    };
    r.get_number = [&](const char* name) -> std::optional<double> {
      int col = table.column(name);
      if (col < 0) return std::nullopt;
      return parse_number(row[static_cast<std::size_t>(col)], index, name);
    };
    c.documents.push_back(build_document(r, index));
  }
  validate_and_sort(c);
  return c;
}

Corpus load_corpus(const std::filesystem::path& path, Format format) {
  auto text = util::read_file(path);
  auto name = path.filename().string();
  return format == Format::Jsonl ? parse_jsonl(text, name) : parse_csv(text, name);
}

std::string to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& d : corpus.documents) {
    json o;
    o["id"] = d.id;
    o["platform"] = to_string(d.platform);
    o["text"] = d.text;
    o["timestamp"] = util::format_iso8601(d.timestamp);
    if (d.advertiser) o["advertiser"] = *d.advertiser;
    if (d.impressions_low) o["impressions_low"] = *d.impressions_low;
    if (d.impressions_high) o["impressions_high"] = *d.impressions_high;
    if (d.spend_low) o["spend_low"] = *d.spend_low;
    if (d.spend_high) o["spend_high"] = *d.spend_high;
    if (d.stance) o["stance"] = to_string(*d.stance);
    out += o.dump();
    out.push_back('\n');
  }
  return out;
}

KeywordList make_keywords(std::vector<std::string> phrases, std::string version) {
  KeywordList k;
  k.version = std::move(version);
  std::unordered_set<std::string> seen;
  for (auto& p : phrases) {
    auto folded = util::casefold(util::trim(p));
    if (folded.empty()) continue;
    if (!seen.insert(folded).second) throw Error("duplicate keyword phrase: " + folded);
    k.phrases.push_back(std::move(folded));
  }
  if (k.phrases.empty()) throw Error("keyword list is empty");
  return k;
}

KeywordList load_keywords(const std::filesystem::path& path) {
  std::vector<std::string> phrases;
  std::string version = path.filename().string();
  for (auto& line : util::split(util::read_file(path), '\n')) {
    auto t = util::trim(line);
    if (t.empty()) continue;
    if (t.rfind("# version:", 0) == 0) {
      version = util::trim(t.substr(10));
      continue;
    }
    if (t[0] == '#') continue;
    phrases.push_back(t);
  }
  return make_keywords(std::move(phrases), std::move(version));
}

Corpus filter_by_keywords(const Corpus& corpus, const KeywordList& keywords) {
  if (keywords.phrases.empty()) throw Error("filter_by_keywords: keyword list is empty");
  Corpus out;
  out.source_name = corpus.source_name;
  out.keyword_list_version = keywords.version;
  for (const auto& d : corpus.documents) {
    auto folded = util::casefold(d.text);
    bool hit = std::any_of(keywords.phrases.begin(), keywords.phrases.end(),
                           [&](const std::string& p) { return folded.find(p) != std::string::npos; });
    if (hit) out.documents.push_back(d);
  }
  return out;
}

Corpus deduplicate(const Corpus& corpus, const VectorSet& vectors, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw Error("deduplicate: threshold must lie in (0, 1]");
  if (vectors.size() != corpus.size()) {
    throw Error("deduplicate: vector count " + std::to_string(vectors.size()) + " != corpus size " +
                std::to_string(corpus.size()));
  }
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (vectors.ids()[i] != corpus.documents[i].id) {
      throw Error("deduplicate: vectors misaligned at row " + std::to_string(i) + " (" + vectors.ids()[i] +
                  " vs " + corpus.documents[i].id + ")");
    }
  }
  auto unit = embedding::l2_normalize(vectors);
  const Matrix& m = unit.matrix();

  Corpus out;
  out.source_name = corpus.source_name;
  out.keyword_list_version = corpus.keyword_list_version;
  std::vector<Eigen::Index> kept;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto row = m.row(static_cast<Eigen::Index>(i));
    bool duplicate = false;
    for (auto k : kept) {
      double sim = std::clamp(row.dot(m.row(k)), -1.0, 1.0);
      if (sim >= threshold) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) {
      kept.push_back(static_cast<Eigen::Index>(i));
      out.documents.push_back(corpus.documents[i]);
    }
  }
  return out;
}

WindowSplit window_split(const Corpus& corpus, std::chrono::sys_days event_date, int window_days) {
  if (window_days < 1) throw Error("window_split: window_days must be >= 1");
  WindowSplit w;
  w.before.source_name = w.after.source_name = corpus.source_name;
  w.before.keyword_list_version = w.after.keyword_list_version = corpus.keyword_list_version;
  const std::chrono::days span{window_days};
  for (const auto& d : corpus.documents) {
    auto day = d.date();
    if (day >= event_date - span && day < event_date) w.before.documents.push_back(d);
    else if (day > event_date && day <= event_date + span) w.after.documents.push_back(d);
  }
  return w;
}

}  // namespace corpus
}  // namespace themescope
