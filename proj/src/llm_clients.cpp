#include <chrono>
#include <cstdlib>
#include <regex>
#include <thread>

#include "http.hpp"
#include "themescope/llmgateway.hpp"

namespace themescope {

// ---- mock --------------------------------------------------------------------

namespace {

std::string stance_word(Stance s) {
  switch (s) {
    case Stance::ProClimate: return "Pro-Climate";
    case Stance::ProEnergy: return "Pro-Energy";
    case Stance::Neutral: return "Neutral";
  }
  return "Neutral";
}

// Values of lines "<prefix><value>" in prompt order.
std::vector<std::string> lines_with_prefix(const std::string& prompt, const std::regex& re) {
  std::vector<std::string> out;
  for (const auto& line : util::split(prompt, '\n')) {
    std::smatch m;
    if (std::regex_match(line, m, re)) out.push_back(util::trim(m[m.size() - 1].str()));
  }
  return out;
}

std::string first_with_prefix(const std::string& prompt, const std::string& prefix) {
  for (const auto& line : util::split(prompt, '\n')) {
    if (line.rfind(prefix, 0) == 0) return util::trim(line.substr(prefix.size()));
  }
  return {};
}

}  // namespace

MockChatClient::MockChatClient(Script script, std::string name) : script_(std::move(script)), name_(std::move(name)) {
  for (auto& t : script_.topics) {
    for (auto& k : t.keywords) k = util::casefold(k);
  }
}

MockChatClient::MockChatClient(Handler handler, std::string name)
    : handler_(std::move(handler)), name_(std::move(name)) {}

MockChatClient::Script MockChatClient::script_from_json(const nlohmann::json& j) {
  Script s;
  if (j.contains("exact")) {
    for (const auto& [k, v] : j.at("exact").items()) s.exact[k] = v.get<std::string>();
  }
  if (j.contains("rules")) {
    for (const auto& r : j.at("rules")) s.rules.push_back({r.at("pattern").get<std::string>(), r.at("response").get<std::string>()});
  }
  if (j.contains("topics")) {
    for (const auto& t : j.at("topics")) {
      Topic topic;
      topic.keywords = t.at("keywords").get<std::vector<std::string>>();
      topic.summary = t.value("summary", "");
      topic.label = t.value("label", "");
      if (t.contains("stance")) topic.stance = parse_stance(t.at("stance").get<std::string>());
      s.topics.push_back(std::move(topic));
    }
  }
  s.default_response = j.value("default", "");
  return s;
}

MockChatClient MockChatClient::from_file(const std::filesystem::path& path) {
  auto j = nlohmann::json::parse(util::read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error("mock script is not a JSON object: " + path.string());
  return MockChatClient(script_from_json(j), "mock:" + path.filename().string());
}

const MockChatClient::Topic* MockChatClient::topic_of(const std::string& text) const {
  if (text.empty()) return nullptr;
  auto folded = util::casefold(text);
  for (const auto& t : script_.topics) {
    for (const auto& k : t.keywords) {
      if (!k.empty() && folded.find(k) != std::string::npos) return &t;
    }
  }
  return nullptr;
}

std::string MockChatClient::complete(const ChatRequest& request) {
  if (handler_) return handler_(request);
  auto it = script_.exact.find(util::sha256_hex(request.prompt));
  if (it != script_.exact.end()) return it->second;
  for (const auto& rule : script_.rules) {
    if (std::regex_search(request.prompt, std::regex(rule.pattern))) return rule.response;
  }
  auto r = topic_response(request);
  return r.empty() ? script_.default_response : r;
}

std::string MockChatClient::topic_response(const ChatRequest& request) const {
  if (script_.topics.empty()) return {};
  const auto& id = request.template_id;
  const auto& prompt = request.prompt;

  if (id == prompts::kCoherency) {
    static const std::regex re(R"(^Paragraph [0-9]+: (.*)$)");
    auto paras = lines_with_prefix(prompt, re);
    if (paras.empty()) return {};
    const Topic* first = topic_of(paras[0]);
    bool same = first != nullptr;
    for (const auto& p : paras) same = same && topic_of(p) == first;
    if (same) return "Cluster Coherency: Coherent\nReasoning: All paragraphs share the label " + first->label + ".";
    return "Cluster Coherency: Incoherent\nReasoning: The labels differ across paragraphs.";
  }
  if (id == prompts::kSummarize) {
    static const std::regex re(R"(^Text [0-9]+: (.*)$)");
    std::map<const Topic*, int> votes;
    for (const auto& t : lines_with_prefix(prompt, re)) {
      if (const Topic* topic = topic_of(t)) votes[topic]++;
    }
    const Topic* best = nullptr;
    int best_votes = 0;
    for (const auto& t : script_.topics) {
      auto v = votes.count(&t) ? votes.at(&t) : 0;
      if (v > best_votes) {
        best = &t;
        best_votes = v;
      }
    }
    return best ? best->summary : std::string();
  }
  if (id == prompts::kThemeLabel) {
    auto summary = first_with_prefix(prompt, "Summary: ");
    auto folded = util::casefold(summary);
    for (const auto& t : script_.topics) {
      if (util::casefold(t.summary) == folded) return t.label;
    }
    const Topic* t = topic_of(summary);
    return t ? t->label : std::string();
  }
  if (id == prompts::kAssignSummary || id == prompts::kAssignTheme) {
    static const std::regex cand_re(R"(^- (.*)$)");
    static const std::regex text_re(R"(^([0-9]+)\. (.*)$)");
    auto candidates = lines_with_prefix(prompt, cand_re);
    auto texts = lines_with_prefix(prompt, text_re);
    std::string out;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      std::string choice = "UNASSIGNED";
      if (const Topic* t = topic_of(texts[i])) {
        const auto& want = id == prompts::kAssignSummary ? t->summary : t->label;
        for (const auto& c : candidates) {
          if (util::casefold(c) == util::casefold(want)) {
            choice = c;
            break;
          }
        }
      }
      if (i) out += "\n";
      out += std::to_string(i + 1) + ": " + choice;
    }
    return out;
  }
  if (id == prompts::kJudge) {
    auto text = first_with_prefix(prompt, "Text: ");
    auto assigned = first_with_prefix(prompt, "Assigned theme: ");
    if (assigned.empty()) assigned = first_with_prefix(prompt, "Assigned keywords: ");
    const Topic* t = topic_of(text);
    bool ok = false;
    if (t) {
      auto folded = util::casefold(assigned);
      ok = folded == util::casefold(t->label) || folded == util::casefold(t->summary);
      for (const auto& k : t->keywords) ok = ok || folded.find(k) != std::string::npos;
    }
    return ok ? "Correct. The assignment matches the text." : "Incorrect. The assignment does not match the text.";
  }
  if (id == prompts::kStanceText || id == prompts::kStanceTheme || id == prompts::kStanceTextTheme) {
    auto text = first_with_prefix(prompt, "Text: ");
    auto theme = first_with_prefix(prompt, "Theme: ");
    const Topic* t = topic_of(text);
    if (!t && !theme.empty()) {
      auto folded = util::casefold(theme);
      for (const auto& cand : script_.topics) {
        if (util::casefold(cand.label) == folded) {
          t = &cand;
          break;
        }
      }
      if (!t) t = topic_of(theme);
    }
    if (t && t->stance) return stance_word(*t->stance);
    return {};
  }
  return {};
}

// ---- remote ------------------------------------------------------------------

RemoteChatClient::RemoteChatClient(RemoteChatOptions opts) : opts_(std::move(opts)) {
  if (opts_.endpoint.empty()) throw Error("remote chat client needs an endpoint (set CHAT_ENDPOINT)");
  if (opts_.max_attempts < 1) throw Error("remote chat client needs max_attempts >= 1");
}

RemoteChatOptions RemoteChatClient::options_from_env(RemoteChatOptions base) {
  if (const char* e = std::getenv("CHAT_ENDPOINT")) base.endpoint = e;
  if (const char* k = std::getenv("CHAT_API_KEY")) base.api_key = k;
  if (const char* m = std::getenv("CHAT_MODEL")) base.model = m;
  return base;
}

std::string RemoteChatClient::complete(const ChatRequest& request) {
  nlohmann::json body;
  body["model"] = opts_.model;
  body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}});
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  const auto payload = body.dump();

  std::string last_error;
  for (int attempt = 0; attempt < opts_.max_attempts; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(opts_.backoff_base_ms << (attempt - 1)));
    auto res = detail::post_json(opts_.endpoint, opts_.api_key, payload, opts_.timeout_seconds);
    if (res.status == 0) {
      last_error = "transport failure: " + res.error;
      continue;
    }
    if (res.status >= 500 || res.status == 429) {
      last_error = "HTTP " + std::to_string(res.status);
      continue;
    }
    if (res.status != 200) throw Error("chat endpoint returned HTTP " + std::to_string(res.status));
    auto parsed = nlohmann::json::parse(res.body, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("text") || !parsed["text"].is_string()) {
      throw Error("chat endpoint returned malformed JSON");
    }
    return parsed["text"].get<std::string>();
  }
  throw Error("chat request failed after " + std::to_string(opts_.max_attempts) + " attempts: " + last_error);
}

}  // namespace themescope
