#include "themescope/llmgateway.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include <spdlog/spdlog.h>

namespace themescope {

namespace detail {
const std::map<std::string, std::string>& embedded_prompt_files();
}

// ---- templates ---------------------------------------------------------------

PromptTemplate::PromptTemplate(std::string id, std::string version, std::string body)
    : id_(std::move(id)), version_(std::move(version)), body_(std::move(body)) {}

std::vector<std::string> PromptTemplate::slots() const {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = body_.find("{{", pos)) != std::string::npos) {
    auto end = body_.find("}}", pos + 2);
    if (end == std::string::npos) break;
    auto name = body_.substr(pos + 2, end - pos - 2);
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    pos = end + 2;
  }
  return out;
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
  std::string out;
  out.reserve(body_.size() * 2);
  std::size_t pos = 0;
  while (true) {
    auto open = body_.find("{{", pos);
    if (open == std::string::npos) break;
    auto close = body_.find("}}", open + 2);
    if (close == std::string::npos) break;
    out.append(body_, pos, open - pos);
    auto name = body_.substr(open + 2, close - open - 2);
    auto it = values.find(name);
    if (it == values.end()) throw Error("template " + id_ + "@" + version_ + ": missing value for slot '" + name + "'");
    out += it->second;
    pos = close + 2;
  }
  out.append(body_, pos, std::string::npos);
  return out;
}

namespace prompts {
namespace {

struct Registry {
  std::map<std::string, PromptTemplate> templates;
};

const Registry& registry() {
  static const Registry reg = [] {
    Registry r;
    static const std::regex name_re(R"(^([a-z_]+)\.(v[0-9]+)\.txt$)");
    for (const auto& [file, body] : detail::embedded_prompt_files()) {
      std::smatch m;
      if (!std::regex_match(file, m, name_re)) continue;
      auto id = m[1].str();
      auto version = m[2].str();
      auto it = r.templates.find(id);
      // Highest version wins when several are checked in.
      if (it != r.templates.end() && std::stoi(it->second.version().substr(1)) >= std::stoi(version.substr(1))) {
        continue;
      }
      r.templates.insert_or_assign(id, PromptTemplate(id, version, body));
    }
    return r;
  }();
  return reg;
}

}  // namespace

const PromptTemplate& get(const std::string& id) {
  const auto& t = registry().templates;
  auto it = t.find(id);
  if (it == t.end()) throw Error("unknown prompt template: " + id);
  return it->second;
}

std::vector<std::string> ids() {
  std::vector<std::string> out;
  for (const auto& [id, _] : registry().templates) out.push_back(id);
  return out;
}

const std::string& asset(const std::string& file_name) {
  const auto& files = detail::embedded_prompt_files();
  auto it = files.find(file_name);
  if (it == files.end()) throw Error("unknown prompt asset: " + file_name);
  return it->second;
}

std::string versions_fingerprint() {
  std::vector<std::string> parts;
  for (const auto& [id, t] : registry().templates) parts.push_back(id + "@" + t.version());
  return util::join(parts, ",");
}

}  // namespace prompts

// ---- few-shots ---------------------------------------------------------------

std::vector<CoherencyExample> default_coherency_fewshots() {
  static const std::vector<CoherencyExample> examples = [] {
    std::vector<CoherencyExample> out;
    auto j = nlohmann::json::parse(prompts::asset("coherency_fewshots.v1.json"));
    for (const auto& e : j) {
      CoherencyExample ex;
      ex.paragraphs = e.at("paragraphs").get<std::vector<std::string>>();
      ex.labels = e.at("labels").get<std::vector<std::string>>();
      ex.verdict = e.at("verdict").get<std::string>() == "incoherent" ? Coherency::Incoherent : Coherency::Coherent;
      ex.reasoning = e.at("reasoning").get<std::string>();
      out.push_back(std::move(ex));
    }
    return out;
  }();
  return examples;
}

namespace {

std::string flatten(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) out += (c == '\n' || c == '\r' || c == '\t') ? ' ' : c;
  return util::trim(out);
}

}  // namespace

std::string render_fewshots(const std::vector<CoherencyExample>& examples) {
  std::string out;
  for (std::size_t e = 0; e < examples.size(); ++e) {
    const auto& ex = examples[e];
    if (ex.paragraphs.size() != ex.labels.size()) throw Error("few-shot example has mismatched paragraphs and labels");
    out += "Example " + std::to_string(e + 1) + ":\n";
    out += "# | Paragraph | Label\n";
    for (std::size_t i = 0; i < ex.paragraphs.size(); ++i) {
      out += std::to_string(i + 1) + " | " + flatten(ex.paragraphs[i]) + " | " + flatten(ex.labels[i]) + "\n";
    }
    out += std::string("Cluster Coherency: ") + (ex.verdict == Coherency::Coherent ? "Coherent" : "Incoherent") + "\n";
    out += "Reasoning: " + flatten(ex.reasoning) + "\n";
    if (e + 1 < examples.size()) out += "\n";
  }
  return out;
}

std::string_view to_string(StanceVariant v) {
  switch (v) {
    case StanceVariant::Text: return "TXT";
    case StanceVariant::Theme: return "THM";
    case StanceVariant::TextTheme: return "TXT_THM";
  }
  return "?";
}

StanceVariant parse_stance_variant(std::string_view s) {
  if (s == "TXT") return StanceVariant::Text;
  if (s == "THM") return StanceVariant::Theme;
  if (s == "TXT_THM") return StanceVariant::TextTheme;
  throw Error("unknown stance variant: " + std::string(s));
}

// ---- parsers -----------------------------------------------------------------

namespace parse {
namespace {

// Position of the first whole-word, case-insensitive match, or npos.
std::size_t find_word(const std::string& text, const std::string& pattern) {
  std::regex re("\\b(?:" + pattern + ")\\b", std::regex::icase);
  std::smatch m;
  if (!std::regex_search(text, m, re)) return std::string::npos;
  return static_cast<std::size_t>(m.position(0));
}

const std::vector<std::string>& quote_marks() {
  static const std::vector<std::string> q = {"\"", "'", "`", "“", "”", "‘", "’", "*"};
  return q;
}

std::string strip_wrapping(std::string s) {
  static const std::string punct = ".,;:!?";
  bool changed = true;
  while (changed && !s.empty()) {
    changed = false;
    s = util::trim(s);
    for (const auto& q : quote_marks()) {
      if (s.size() >= q.size() && s.compare(0, q.size(), q) == 0) {
        s.erase(0, q.size());
        changed = true;
      }
      if (s.size() >= q.size() && s.compare(s.size() - q.size(), q.size(), q) == 0) {
        s.erase(s.size() - q.size());
        changed = true;
      }
    }
    while (!s.empty() && punct.find(s.back()) != std::string::npos) {
      s.pop_back();
      changed = true;
    }
    while (!s.empty() && punct.find(s.front()) != std::string::npos) {
      s.erase(0, 1);
      changed = true;
    }
  }
  return util::trim(s);
}

}  // namespace

std::optional<CoherencyVerdict> coherency(const std::string& response) {
  CoherencyVerdict v;
  if (find_word(response, "incoherent") != std::string::npos) {
    v.verdict = Coherency::Incoherent;
  } else if (find_word(response, "coherent") != std::string::npos) {
    v.verdict = Coherency::Coherent;
  } else {
    return std::nullopt;
  }
  static const std::regex reason_re(R"(reasoning\s*:\s*([\s\S]*))", std::regex::icase);
  std::smatch m;
  v.reasoning = std::regex_search(response, m, reason_re) ? util::trim(m[1].str()) : util::trim(response);
  return v;
}

std::optional<bool> judgment(const std::string& response) {
  auto pos_true = find_word(response, "yes|correct");
  auto pos_false = find_word(response, "no|incorrect");
  if (pos_true == std::string::npos && pos_false == std::string::npos) return std::nullopt;
  return pos_true < pos_false;
}

std::optional<Stance> stance(const std::string& response) {
  const std::pair<const char*, Stance> options[] = {
      {"pro[-_ ]?climate", Stance::ProClimate},
      {"pro[-_ ]?energy", Stance::ProEnergy},
      {"neutral", Stance::Neutral},
  };
  std::size_t best = std::string::npos;
  std::optional<Stance> out;
  for (const auto& [pattern, s] : options) {
    auto p = find_word(response, pattern);
    if (p < best) {
      best = p;
      out = s;
    }
  }
  return out;
}

std::string clean_label(const std::string& response) {
  std::string s = util::trim(response);
  // First non-empty line.
  for (const auto& line : util::split(s, '\n')) {
    if (!util::is_blank(line)) {
      s = util::trim(line);
      break;
    }
  }
  static const std::regex prefix_re(R"(^\s*(theme(\s+label)?|label)\s*:\s*)", std::regex::icase);
  s = std::regex_replace(s, prefix_re, "");
  return strip_wrapping(s);
}

std::optional<std::vector<int>> assignment(const std::string& response, std::size_t n_texts,
                                           const std::vector<std::string>& candidates) {
  static const std::regex line_re(R"(^\s*(?:text\s*)?(\d+)\s*[:.)\]-]\s*(.*?)\s*$)", std::regex::icase);
  std::vector<std::string> folded;
  folded.reserve(candidates.size());
  for (const auto& c : candidates) folded.push_back(util::casefold(util::trim(c)));
  const std::string unassigned = util::casefold("UNASSIGNED");

  std::vector<int> out(n_texts, kUnassigned);
  std::vector<bool> seen(n_texts, false);
  std::size_t count = 0;
  for (const auto& raw_line : util::split(response, '\n')) {
    std::smatch m;
    std::string line = raw_line;
    if (!std::regex_match(line, m, line_re)) continue;
    std::size_t idx = 0;
    try {
      idx = std::stoul(m[1].str());
    } catch (...) {
      return std::nullopt;
    }
    if (idx < 1 || idx > n_texts || seen[idx - 1]) return std::nullopt;
    seen[idx - 1] = true;
    ++count;
    std::string choice = util::trim(m[2].str());
    for (const auto& q : quote_marks()) {
      if (choice.size() >= 2 * q.size() && choice.compare(0, q.size(), q) == 0 &&
          choice.compare(choice.size() - q.size(), q.size(), q) == 0) {
        choice = util::trim(choice.substr(q.size(), choice.size() - 2 * q.size()));
      }
    }
    auto key = util::casefold(choice);
    if (key == unassigned) continue;
    auto it = std::find(folded.begin(), folded.end(), key);
    if (it != folded.end()) out[idx - 1] = static_cast<int>(it - folded.begin());
  }
  if (count != n_texts) return std::nullopt;
  return out;
}

std::string truncate_words(const std::string& text, std::size_t max_words) {
  std::vector<std::string> words;
  for (const auto& w : util::split(text, ' ')) {
    for (const auto& piece : util::split(flatten(w), ' ')) {
      if (!piece.empty()) words.push_back(piece);
    }
  }
  if (words.size() <= max_words) return util::join(words, " ");
  words.resize(max_words);
  auto ends_sentence = [](std::string w) {
    while (!w.empty() && (w.back() == '"' || w.back() == '\'' || w.back() == ')')) w.pop_back();
    return !w.empty() && (w.back() == '.' || w.back() == '!' || w.back() == '?');
  };
  for (std::size_t i = words.size(); i > 0; --i) {
    if (ends_sentence(words[i - 1])) {
      words.resize(i);
      break;
    }
  }
  return util::join(words, " ");
}

}  // namespace parse

// ---- gateway -----------------------------------------------------------------

namespace {

const char* kRetrySuffix = "\n\nYour previous answer could not be parsed. Follow the requested answer format exactly.";
const char* kLengthSuffix = "\n\nYour previous summary was too long. Use at most 100 words.";
const char* kLabelSuffix = "\n\nYour previous label was too long. Use at most 3 words.";

std::string numbered(const std::vector<std::string>& items, const char* prefix_fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += "\n";
    std::string p = prefix_fmt;
    if (auto at = p.find('#'); at != std::string::npos) p.replace(at, 1, std::to_string(i + 1));
    out += p + flatten(items[i]);
  }
  return out;
}

}  // namespace

Gateway::Gateway(ChatClient& client, GatewayOptions options)
    : client_(client), opts_(options), in_flight_(std::clamp(options.max_in_flight, 1, 64)) {}

std::string Gateway::call(const std::string& template_id, const std::string& prompt) {
  const std::string key = util::sha256_hex(prompt);
  if (opts_.cache_responses) {
    std::lock_guard lock(cache_mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  ChatRequest req{template_id, prompt, opts_.temperature, opts_.max_output_tokens};
  in_flight_.acquire();
  std::string response;
  try {
    response = client_.complete(req);
  } catch (...) {
    in_flight_.release();
    throw;
  }
  in_flight_.release();
  {
    std::lock_guard lock(cache_mu_);
    ++calls_;
  }
  return response;
}

void Gateway::remember(const std::string& prompt, const std::string& response) {
  if (!opts_.cache_responses) return;
  std::lock_guard lock(cache_mu_);
  cache_.emplace(util::sha256_hex(prompt), response);
}

std::size_t Gateway::calls() const {
  std::lock_guard lock(cache_mu_);
  return calls_;
}

std::string Gateway::fingerprint() const {
  return "chat=" + client_.name() + ";temperature=" + util::format_double(opts_.temperature) +
         ";max_tokens=" + std::to_string(opts_.max_output_tokens) + ";templates=" + prompts::versions_fingerprint();
}

CoherencyVerdict Gateway::check_coherency(const std::vector<std::string>& representatives,
                                          const std::vector<CoherencyExample>& fewshots) {
  if (representatives.empty() || representatives.size() > 5) {
    throw PreconditionError("coherency check needs 1 to 5 representative texts, got " +
                            std::to_string(representatives.size()));
  }
  std::vector<std::string> five = representatives;
  while (five.size() < 5) five.push_back(representatives.back());
  std::map<std::string, std::string> slots{{"fewshots", render_fewshots(fewshots)}};
  for (int i = 0; i < 5; ++i) slots["p" + std::to_string(i + 1)] = flatten(five[i]);
  const auto base = prompts::get(prompts::kCoherency).render(slots);

  std::string prompt = base, raw;
  for (int attempt = 0; attempt < 3; ++attempt) {
    raw = call(prompts::kCoherency, prompt);
    if (auto v = parse::coherency(raw)) {
      remember(prompt, raw);
      return *v;
    }
    prompt = base + kRetrySuffix;
  }
  throw ParseError("coherency response has neither 'coherent' nor 'incoherent'", raw);
}

std::string Gateway::summarize_cluster(const std::vector<std::string>& representatives) {
  if (representatives.empty() || representatives.size() > 5) {
    throw PreconditionError("summarization needs 1 to 5 texts, got " + std::to_string(representatives.size()));
  }
  for (const auto& t : representatives) {
    if (util::is_blank(t)) throw PreconditionError("summarization input contains an empty text");
  }
  const auto base = prompts::get(prompts::kSummarize).render({{"texts", numbered(representatives, "Text #: ")}});

  std::string prompt = base, summary;
  for (int attempt = 0; attempt < 2 && summary.empty(); ++attempt) {
    auto raw = call(prompts::kSummarize, prompt);
    summary = flatten(raw);
    if (!summary.empty()) remember(prompt, raw);
    prompt = base + kRetrySuffix;
  }
  if (summary.empty()) throw ParseError("summarization returned an empty response twice", "");
  if (util::word_count(summary) <= opts_.summary_max_words) return summary;

  const std::string shorter_prompt = base + kLengthSuffix;
  auto raw = call(prompts::kSummarize, shorter_prompt);
  auto second = flatten(raw);
  if (!second.empty()) {
    remember(shorter_prompt, raw);
    summary = second;
  }
  if (util::word_count(summary) > opts_.summary_max_words) {
    summary = parse::truncate_words(summary, opts_.summary_max_words);
  }
  return summary;
}

std::string Gateway::label_theme(const std::string& summary) {
  if (util::is_blank(summary)) throw PreconditionError("cannot label an empty summary");
  const auto base = prompts::get(prompts::kThemeLabel).render({{"summary", flatten(summary)}});
  std::string prompt = base, raw, label;
  for (int attempt = 0; attempt < 2; ++attempt) {
    raw = call(prompts::kThemeLabel, prompt);
    label = parse::clean_label(raw);
    auto words = util::word_count(label);
    if (words >= 1 && words <= opts_.label_max_words) {
      remember(prompt, raw);
      return label;
    }
    prompt = base + kLabelSuffix;
  }
  throw ParseError("theme label must have 1 to " + std::to_string(opts_.label_max_words) + " words, got '" + label +
                       "'",
                   raw);
}

BatchAssignment Gateway::assign_batch(const std::vector<std::string>& texts, const std::vector<std::string>& candidates,
                                      AssignMode mode) {
  if (candidates.empty()) throw PreconditionError("assignment needs at least one candidate");
  if (texts.size() > kBatchSize) {
    throw PreconditionError("assignment batch holds at most " + std::to_string(kBatchSize) + " texts, got " +
                            std::to_string(texts.size()));
  }
  BatchAssignment out;
  if (texts.empty()) return out;
  const char* id = mode == AssignMode::Summary ? prompts::kAssignSummary : prompts::kAssignTheme;
  const auto base = prompts::get(id).render({{"count", std::to_string(texts.size())},
                                             {"candidates", numbered(candidates, "- ")},
                                             {"texts", numbered(texts, "#. ")}});
  std::string prompt = base;
  for (int attempt = 0; attempt < 3; ++attempt) {
    out.raw_response = call(id, prompt);
    if (auto parsed = parse::assignment(out.raw_response, texts.size(), candidates)) {
      remember(prompt, out.raw_response);
      out.choices = std::move(*parsed);
      return out;
    }
    prompt = base + kRetrySuffix;
  }
  spdlog::warn("assignment batch of {} texts could not be parsed after 3 attempts; marking all UNASSIGNED",
               texts.size());
  out.choices.assign(texts.size(), kUnassigned);
  out.batch_failed = true;
  return out;
}

std::optional<bool> Gateway::judge_assignment(const std::string& text, const std::string& label_or_keywords,
                                              bool keywords) {
  if (util::is_blank(text) || util::is_blank(label_or_keywords)) {
    throw PreconditionError("judge needs a non-empty text and candidate");
  }
  const auto base = prompts::get(prompts::kJudge).render(
      {{"kind", keywords ? "keywords" : "theme"}, {"text", flatten(text)}, {"candidate", flatten(label_or_keywords)}});
  std::string prompt = base;
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto raw = call(prompts::kJudge, prompt);
    if (auto v = parse::judgment(raw)) {
      remember(prompt, raw);
      return v;
    }
    prompt = base + kRetrySuffix;
  }
  return std::nullopt;
}

Stance Gateway::predict_stance_llm(const std::optional<std::string>& text, const std::optional<std::string>& theme,
                                   StanceVariant variant) {
  const bool need_text = variant != StanceVariant::Theme;
  const bool need_theme = variant != StanceVariant::Text;
  if (need_text && (!text || util::is_blank(*text))) {
    throw PreconditionError(std::string("stance variant ") + std::string(to_string(variant)) + " needs a text");
  }
  if (need_theme && (!theme || util::is_blank(*theme))) {
    throw PreconditionError(std::string("stance variant ") + std::string(to_string(variant)) + " needs a theme");
  }
  const char* id = variant == StanceVariant::Text    ? prompts::kStanceText
                   : variant == StanceVariant::Theme ? prompts::kStanceTheme
                                                     : prompts::kStanceTextTheme;
  std::map<std::string, std::string> slots;
  if (need_text) slots["text"] = flatten(*text);
  if (need_theme) slots["theme"] = flatten(*theme);
  const auto base = prompts::get(id).render(slots);
  std::string prompt = base, raw;
  for (int attempt = 0; attempt < 3; ++attempt) {
    raw = call(id, prompt);
    if (auto s = parse::stance(raw)) {
      remember(prompt, raw);
      return *s;
    }
    prompt = base + kRetrySuffix;
  }
  throw ParseError("stance response names none of the three stances", raw);
}

}  // namespace themescope
