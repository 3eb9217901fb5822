#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "themescope/corpus.hpp"
#include "themescope/util.hpp"

namespace themescope {

struct ChatRequest {
  std::string template_id;
  std::string prompt;
  double temperature = 0.0;
  int max_tokens = 512;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string name() const = 0;
  // Safe to call from multiple threads.
  virtual std::string complete(const ChatRequest& request) = 0;
};

// ---- prompt templates --------------------------------------------------------

class PromptTemplate {
 public:
  PromptTemplate(std::string id, std::string version, std::string body);

  const std::string& id() const { return id_; }
  const std::string& version() const { return version_; }
  const std::string& body() const { return body_; }
  std::vector<std::string> slots() const;

  // Replaces every {{slot}}; throws when a slot has no value.
  std::string render(const std::map<std::string, std::string>& values) const;

 private:
  std::string id_, version_, body_;
};

namespace prompts {

inline constexpr const char* kCoherency = "coherency";
inline constexpr const char* kSummarize = "summarize";
inline constexpr const char* kThemeLabel = "theme_label";
inline constexpr const char* kAssignSummary = "assign_summary";
inline constexpr const char* kAssignTheme = "assign_theme";
inline constexpr const char* kJudge = "judge";
inline constexpr const char* kStanceText = "stance_txt";
inline constexpr const char* kStanceTheme = "stance_thm";
inline constexpr const char* kStanceTextTheme = "stance_txt_thm";

// Templates compiled in from prompts/<id>.<version>.txt.
const PromptTemplate& get(const std::string& id);
std::vector<std::string> ids();
// Raw embedded asset (e.g. few-shot JSON) by file name.
const std::string& asset(const std::string& file_name);
// "id@version" for every template, sorted.
std::string versions_fingerprint();

}  // namespace prompts

// ---- domain types ------------------------------------------------------------

enum class Coherency { Coherent, Incoherent };

struct CoherencyVerdict {
  Coherency verdict = Coherency::Coherent;
  std::string reasoning;
};

struct CoherencyExample {
  std::vector<std::string> paragraphs;
  std::vector<std::string> labels;
  Coherency verdict = Coherency::Coherent;
  std::string reasoning;
};

std::vector<CoherencyExample> default_coherency_fewshots();
std::string render_fewshots(const std::vector<CoherencyExample>& examples);

enum class AssignMode { Summary, Theme };
enum class StanceVariant { Text, Theme, TextTheme };

std::string_view to_string(StanceVariant v);
StanceVariant parse_stance_variant(std::string_view s);

inline constexpr int kUnassigned = -1;

struct BatchAssignment {
  std::vector<int> choices;  // candidate index or kUnassigned, one per text
  bool batch_failed = false;
  std::string raw_response;
};

class ParseError : public Error {
 public:
  ParseError(std::string message, std::string raw) : Error(std::move(message)), raw_(std::move(raw)) {}
  const std::string& raw_response() const { return raw_; }

 private:
  std::string raw_;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

// ---- strict response parsers (pure) -------------------------------------------

namespace parse {

std::optional<CoherencyVerdict> coherency(const std::string& response);
// Judge verdict; nullopt when neither yes/correct nor no/incorrect appears.
std::optional<bool> judgment(const std::string& response);
std::optional<Stance> stance(const std::string& response);
// Strips whitespace, surrounding quotes and punctuation, and a leading
// "Theme label:" prefix.
std::string clean_label(const std::string& response);
// Lines "<n>: <choice>"; nullopt unless exactly 1..n_texts appear once each.
std::optional<std::vector<int>> assignment(const std::string& response, std::size_t n_texts,
                                           const std::vector<std::string>& candidates);
// Cuts to the last sentence boundary within max_words words (or a hard cut
// at max_words when no boundary exists).
std::string truncate_words(const std::string& text, std::size_t max_words);

}  // namespace parse

// ---- gateway -----------------------------------------------------------------

struct GatewayOptions {
  int max_in_flight = 4;
  int max_output_tokens = 512;
  double temperature = 0.0;
  bool cache_responses = true;
  std::size_t summary_max_words = 100;
  std::size_t label_max_words = 3;
};

// All LLM interactions. Every operation renders a versioned template, calls
// the client under the in-flight cap, and parses strictly.
class Gateway {
 public:
  explicit Gateway(ChatClient& client, GatewayOptions options = {});

  CoherencyVerdict check_coherency(const std::vector<std::string>& representatives,
                                   const std::vector<CoherencyExample>& fewshots);
  CoherencyVerdict check_coherency(const std::vector<std::string>& representatives) {
    return check_coherency(representatives, default_coherency_fewshots());
  }
  std::string summarize_cluster(const std::vector<std::string>& representatives);
  std::string label_theme(const std::string& summary);
  BatchAssignment assign_batch(const std::vector<std::string>& texts, const std::vector<std::string>& candidates,
                               AssignMode mode);
  // nullopt = abstention.
  std::optional<bool> judge_assignment(const std::string& text, const std::string& label_or_keywords,
                                       bool keywords = false);
  Stance predict_stance_llm(const std::optional<std::string>& text, const std::optional<std::string>& theme,
                            StanceVariant variant);

  std::string fingerprint() const;
  std::size_t calls() const;

  static constexpr std::size_t kBatchSize = 10;

 private:
  std::string call(const std::string& template_id, const std::string& prompt);
  // Only responses that parsed are cached, so retries reach the client.
  void remember(const std::string& prompt, const std::string& response);

  ChatClient& client_;
  GatewayOptions opts_;
  std::counting_semaphore<64> in_flight_;
  mutable std::mutex cache_mu_;
  std::unordered_map<std::string, std::string> cache_;
  std::size_t calls_ = 0;
};

// ---- clients -----------------------------------------------------------------

// Deterministic offline client. Resolution order: exact prompt hash, regex
// rules, topic rules (role-aware, keyed on template id), default response.
class MockChatClient final : public ChatClient {
 public:
  using Handler = std::function<std::string(const ChatRequest&)>;

  struct Topic {
    std::vector<std::string> keywords;  // case-folded substrings
    std::string summary;
    std::string label;
    std::optional<Stance> stance;
  };
  struct Rule {
    std::string pattern;  // ECMAScript regex searched in the prompt
    std::string response;
  };
  struct Script {
    std::map<std::string, std::string> exact;  // sha256(prompt) -> response
    std::vector<Rule> rules;
    std::vector<Topic> topics;
    std::string default_response;
  };

  explicit MockChatClient(Script script, std::string name = "mock");
  explicit MockChatClient(Handler handler, std::string name = "mock-handler");

  static Script script_from_json(const nlohmann::json& j);
  static MockChatClient from_file(const std::filesystem::path& path);

  std::string name() const override { return name_; }
  std::string complete(const ChatRequest& request) override;

 private:
  std::string topic_response(const ChatRequest& request) const;
  const Topic* topic_of(const std::string& text) const;

  Script script_;
  Handler handler_;
  std::string name_;
};

struct RemoteChatOptions {
  std::string endpoint;
  std::string api_key;
  std::string model = "chat-model";
  int max_attempts = 3;
  int backoff_base_ms = 500;
  int timeout_seconds = 120;
};

// JSON protocol: POST {model, messages, temperature, max_tokens} -> {text}.
class RemoteChatClient final : public ChatClient {
 public:
  explicit RemoteChatClient(RemoteChatOptions opts);
  // Reads CHAT_ENDPOINT and CHAT_API_KEY.
  static RemoteChatOptions options_from_env(RemoteChatOptions base = {});

  std::string name() const override { return opts_.model; }
  std::string complete(const ChatRequest& request) override;

 private:
  RemoteChatOptions opts_;
};

}  // namespace themescope
