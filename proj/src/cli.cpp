#include "themescope/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <numeric>
#include <set>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "themescope/synthetic.hpp"

#ifndef THEMESCOPE_DATA_DIR
#define THEMESCOPE_DATA_DIR "data"
#endif

namespace themescope::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- config -------------------------------------------------------------------------

namespace {

// Reads keys from one JSON object and rejects any it was not asked for.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw Error("config: '" + where_ + "' must be an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw Error("config: unknown key '" + it.key() + "' in " + where_);
    }
  }
  template <typename T>
  void get(const std::string& key, T& dst) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw Error("config: bad value for '" + where_ + "." + key + "': " + e.what());
    }
  }
  template <typename T>
  void get(const std::string& key, std::optional<T>& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null()) {
      dst.reset();
      return;
    }
    T v{};
    get(key, v);
    dst = v;
  }
  const json* child(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return nullptr;
    return &j_.at(key);
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::string format_name(corpus::Format f) { return f == corpus::Format::Jsonl ? "jsonl" : "csv"; }

std::string slug(std::string s) {
  for (auto& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void read_embedding(const json& j, const std::string& where, EmbeddingConfig& e) {
  Reader s(j, where);
  s.get("provider", e.provider);
  s.get("dim", e.dim);
  s.get("seed", e.seed);
  s.get("endpoint", e.endpoint);
  s.get("model", e.model);
  s.get("max_batch", e.max_batch);
  s.get("cache_dir", e.cache_dir);
}

json embedding_json(const EmbeddingConfig& e) {
  return {{"provider", e.provider}, {"dim", e.dim},       {"seed", e.seed},
          {"endpoint", e.endpoint}, {"model", e.model},   {"max_batch", e.max_batch},
          {"cache_dir", e.cache_dir ? json(*e.cache_dir) : json(nullptr)}};
}

}  // namespace

PipelineConfig PipelineConfig::defaults() {
  PipelineConfig c;
  c.events = {{"us-election-2024", util::parse_date("2024-11-05"), 3},
              {"kirk-death-2025", util::parse_date("2025-09-10"), 3}};
  c.plot_umap.target_dim = 2;
  return c;
}

PipelineConfig PipelineConfig::from_json(const json& j, fs::path base_dir) {
  PipelineConfig c = defaults();
  c.base_dir = std::move(base_dir);
  Reader r(j, "config");
  if (auto* a = r.child("corpora")) {
    c.corpora.clear();
    for (const auto& e : *a) {
      Reader s(e, "corpora[]");
      CorpusSource src;
      std::string fmt = "jsonl";
      s.get("path", src.path);
      s.get("format", fmt);
      src.format = corpus::parse_format(fmt);
      c.corpora.push_back(src);
    }
  }
  r.get("keywords", c.keywords);
  r.get("stopwords", c.stopwords);
  r.get("dedup_threshold", c.dedup_threshold);
  r.get("pca_components", c.discovery.pca_components);
  if (auto* u = r.child("umap")) {
    Reader s(*u, "umap");
    auto& m = c.discovery.umap;
    s.get("target_dim", m.target_dim);
    s.get("n_neighbors", m.n_neighbors);
    s.get("min_dist", m.min_dist);
    s.get("spread", m.spread);
    s.get("n_epochs", m.n_epochs);
    s.get("seed", m.seed);
    s.get("learning_rate", m.learning_rate);
    s.get("repulsion_strength", m.repulsion_strength);
    s.get("negative_sample_rate", m.negative_sample_rate);
  }
  if (auto* h = r.child("hdbscan")) {
    Reader s(*h, "hdbscan");
    s.get("min_cluster_size", c.discovery.hdbscan.min_cluster_size);
    s.get("min_samples", c.discovery.hdbscan.min_samples);
  }
  r.get("representatives_k", c.discovery.representatives_k);
  r.get("tau_grid", c.discovery.merge.tau_grid);
  r.get("selected_tau", c.discovery.merge.selected_tau);
  std::string strategy(to_string(c.strategy));
  r.get("assignment_strategy", strategy);
  c.strategy = parse_assign_strategy(strategy);
  if (auto* e = r.child("embedding")) read_embedding(*e, "embedding", c.embedding);
  if (auto* e = r.child("summary_embedding")) {
    c.summary_embedding = EmbeddingConfig{};
    read_embedding(*e, "summary_embedding", *c.summary_embedding);
  }
  if (auto* e = r.child("chat")) {
    Reader s(*e, "chat");
    s.get("provider", c.chat.provider);
    s.get("script", c.chat.script);
    s.get("endpoint", c.chat.endpoint);
    s.get("model", c.chat.model);
    s.get("max_in_flight", c.chat.max_in_flight);
  }
  r.get("workers", c.workers);
  if (auto* l = r.child("lda")) {
    Reader s(*l, "lda");
    s.get("K", c.lda.K);
    s.get("alpha", c.lda.alpha);
    s.get("beta", c.lda.beta);
    s.get("iterations", c.lda.iterations);
    s.get("seed", c.lda.seed);
  }
  r.get("keyword_top_n", c.keyword_top_n);
  r.get("retrieval_k", c.retrieval_k);
  if (auto* a = r.child("events")) {
    c.events.clear();
    for (const auto& e : *a) {
      Reader s(e, "events[]");
      std::string name, date;
      int w = 3;
      s.get("name", name);
      s.get("date", date);
      s.get("window_days", w);
      if (name.empty() || date.empty()) throw Error("config: every event needs a name and a date");
      c.events.push_back({name, util::parse_date(date), w});
    }
  }
  if (auto* st = r.child("stance")) {
    Reader s(*st, "stance");
    s.get("test_fraction", c.split.test_fraction);
    s.get("val_fraction_of_train", c.split.val_fraction_of_train);
    s.get("seed", c.split.seed);
    if (auto* ng = s.child("ngram_ranges")) {
      c.stance_grid.ngram_ranges.clear();
      for (const auto& p : *ng) {
        if (!p.is_array() || p.size() != 2) throw Error("config: stance.ngram_ranges entries must be [lo, hi]");
        c.stance_grid.ngram_ranges.push_back({p[0].get<int>(), p[1].get<int>()});
      }
    }
    s.get("Cs", c.stance_grid.Cs);
    s.get("max_epochs", c.logreg.max_epochs);
    s.get("tolerance", c.logreg.tolerance);
    s.get("llm", c.stance_llm);
  }
  if (auto* p = r.child("plot_umap")) {
    Reader s(*p, "plot_umap");
    s.get("n_neighbors", c.plot_umap.n_neighbors);
    s.get("min_dist", c.plot_umap.min_dist);
    s.get("n_epochs", c.plot_umap.n_epochs);
    s.get("seed", c.plot_umap.seed);
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(util::read_file(path));
  } catch (const json::exception& e) {
    throw Error("config " + path.string() + ": " + e.what());
  }
  auto c = from_json(j, fs::absolute(path).parent_path());
  c.validate();
  return c;
}

json PipelineConfig::to_json() const {
  json j;
  j["corpora"] = json::array();
  for (const auto& s : corpora) j["corpora"].push_back({{"path", s.path}, {"format", format_name(s.format)}});
  j["keywords"] = keywords ? json(*keywords) : json(nullptr);
  j["stopwords"] = stopwords;
  j["dedup_threshold"] = dedup_threshold;
  j["pca_components"] = discovery.pca_components;
  const auto& u = discovery.umap;
  j["umap"] = {{"target_dim", u.target_dim},       {"n_neighbors", u.n_neighbors},
               {"min_dist", u.min_dist},           {"spread", u.spread},
               {"n_epochs", u.n_epochs},           {"seed", u.seed},
               {"learning_rate", u.learning_rate}, {"repulsion_strength", u.repulsion_strength},
               {"negative_sample_rate", u.negative_sample_rate}};
  j["hdbscan"] = {{"min_cluster_size", discovery.hdbscan.min_cluster_size},
                  {"min_samples", discovery.hdbscan.min_samples}};
  j["representatives_k"] = discovery.representatives_k;
  j["tau_grid"] = discovery.merge.tau_grid;
  j["selected_tau"] = discovery.merge.selected_tau ? json(*discovery.merge.selected_tau) : json(nullptr);
  j["assignment_strategy"] = to_string(strategy);
  j["embedding"] = embedding_json(embedding);
  j["summary_embedding"] = summary_embedding ? embedding_json(*summary_embedding) : json(nullptr);
  j["chat"] = {{"provider", chat.provider},
               {"script", chat.script},
               {"endpoint", chat.endpoint},
               {"model", chat.model},
               {"max_in_flight", chat.max_in_flight}};
  j["workers"] = workers;
  j["lda"] = {{"K", lda.K},
              {"alpha", lda.alpha ? json(*lda.alpha) : json(nullptr)},
              {"beta", lda.beta},
              {"iterations", lda.iterations},
              {"seed", lda.seed}};
  j["keyword_top_n"] = keyword_top_n;
  j["retrieval_k"] = retrieval_k;
  j["events"] = json::array();
  for (const auto& e : events) {
    j["events"].push_back({{"name", e.name}, {"date", util::format_date(e.date)}, {"window_days", e.window_days}});
  }
  json ranges = json::array();
  for (const auto& r : stance_grid.ngram_ranges) ranges.push_back({r.lo, r.hi});
  j["stance"] = {{"test_fraction", split.test_fraction},
                 {"val_fraction_of_train", split.val_fraction_of_train},
                 {"seed", split.seed},
                 {"ngram_ranges", ranges},
                 {"Cs", stance_grid.Cs},
                 {"max_epochs", logreg.max_epochs},
                 {"tolerance", logreg.tolerance},
                 {"llm", stance_llm}};
  j["plot_umap"] = {{"n_neighbors", plot_umap.n_neighbors},
                    {"min_dist", plot_umap.min_dist},
                    {"n_epochs", plot_umap.n_epochs},
                    {"seed", plot_umap.seed}};
  return j;
}

fs::path PipelineConfig::resolve(const std::string& p) const {
  fs::path path(p);
  if (path.is_absolute() || base_dir.empty()) return path;
  return base_dir / path;
}

void PipelineConfig::validate() const {
  auto need_file = [&](const std::string& p, const std::string& what) {
    if (!fs::exists(resolve(p))) throw Error("config: " + what + " not found: " + resolve(p).string());
  };
  for (const auto& s : corpora) need_file(s.path, "corpus");
  if (keywords) need_file(*keywords, "keyword list");
  if (!stopwords.empty()) need_file(stopwords, "stopword list");
  if (chat.provider == "mock" && chat.script != "synthetic") need_file(chat.script, "mock chat script");
  if (chat.provider != "mock" && chat.provider != "remote") throw Error("config: chat.provider must be mock or remote");
  for (const auto* e : {&embedding, summary_embedding ? &*summary_embedding : nullptr}) {
    if (!e) continue;
    if (e->provider != "hashing" && e->provider != "remote") throw Error("config: embedding provider must be hashing or remote");
    if (e->dim < 2) throw Error("config: embedding dim must be >= 2");
  }
  if (!(dedup_threshold > 0.0 && dedup_threshold <= 1.0)) throw Error("config: dedup_threshold must lie in (0, 1]");
  if (discovery.pca_components < 1) throw Error("config: pca_components must be >= 1");
  if (discovery.hdbscan.min_cluster_size < 2 || discovery.hdbscan.min_samples < 1) {
    throw Error("config: hdbscan needs min_cluster_size >= 2 and min_samples >= 1");
  }
  if (discovery.representatives_k < 1 || discovery.representatives_k > 5) {
    throw Error("config: representatives_k must lie in [1, 5]");
  }
  discovery.merge.validate();
  if (workers < 1) throw Error("config: workers must be >= 1");
  if (lda.K < 1 || lda.iterations < 1) throw Error("config: lda needs K >= 1 and iterations >= 1");
  for (auto k : retrieval_k) {
    if (k < 1) throw Error("config: retrieval_k entries must be >= 1");
  }
  for (const auto& e : events) {
    if (e.window_days < 1) throw Error("config: event '" + e.name + "' needs window_days >= 1");
  }
  split.validate();
  for (const auto& r : stance_grid.ngram_ranges) {
    if (r.lo < 1 || r.lo > r.hi) throw Error("config: bad n-gram range " + r.to_string());
  }
  for (double c : stance_grid.Cs) {
    if (!(c > 0.0)) throw Error("config: stance Cs must be positive");
  }
}

// ---- run directory -------------------------------------------------------------------

namespace {

class Run {
 public:
  Run(PipelineConfig cfg, fs::path dir) : cfg_(std::move(cfg)), dir_(std::move(dir)) {
    embedder_ = make_embedder(cfg_.embedding);
    if (cfg_.summary_embedding) summary_embedder_ = make_embedder(*cfg_.summary_embedding);
    if (cfg_.embedding.cache_dir) cache_ = std::make_unique<EmbeddingCache>(cfg_.resolve(*cfg_.embedding.cache_dir));
    if (cfg_.chat.provider == "remote") {
      RemoteChatOptions o;
      o.endpoint = cfg_.chat.endpoint;
      o.model = cfg_.chat.model;
      o = RemoteChatClient::options_from_env(o);
      if (!cfg_.chat.endpoint.empty()) o.endpoint = cfg_.chat.endpoint;
      chat_ = std::make_unique<RemoteChatClient>(o);
    } else {
      json script = cfg_.chat.script == "synthetic" ? synthetic::mock_script(synthetic::default_topics())
                                                    : json::parse(util::read_file(cfg_.resolve(cfg_.chat.script)));
      chat_ = std::make_unique<MockChatClient>(MockChatClient::script_from_json(script),
                                               "mock:" + util::sha256_hex(script.dump()).substr(0, 12));
    }
    GatewayOptions go;
    go.max_in_flight = cfg_.chat.max_in_flight;
    gateway_ = std::make_unique<Gateway>(*chat_, go);

    // Paths are replaced by content hashes so the fingerprint does not
    // depend on where the inputs live.
    json material = cfg_.to_json();
    for (auto& c : material["corpora"]) c["path"] = util::sha256_hex(util::read_file(cfg_.resolve(c["path"])));
    if (cfg_.keywords) material["keywords"] = util::sha256_hex(util::read_file(cfg_.resolve(*cfg_.keywords)));
    material["stopwords"] = util::sha256_hex(util::read_file(stopwords_path()));
    material["chat"].erase("script");
    material["embedding"].erase("cache_dir");
    if (material["summary_embedding"].is_object()) material["summary_embedding"].erase("cache_dir");
    material["workers"] = nullptr;
    fingerprint_ = util::sha256_hex(material.dump() + "|" + embedder_->fingerprint() + "|" +
                                   (summary_embedder_ ? summary_embedder_->fingerprint() : "") + "|" +
                                   gateway_->fingerprint())
                       .substr(0, 16);

    fs::create_directories(dir_);
    auto manifest_path = dir_ / "manifest.json";
    if (fs::exists(manifest_path)) {
      manifest_ = json::parse(util::read_file(manifest_path));
      if (manifest_.value("fingerprint", "") != fingerprint_) {
        throw Error("run directory " + dir_.string() + " was created with a different configuration (fingerprint " +
                    manifest_.value("fingerprint", "?") + ", now " + fingerprint_ + "); use a fresh directory");
      }
    } else {
      manifest_ = {{"fingerprint", fingerprint_}, {"artifacts", json::object()}};
      json stored = cfg_.to_json();
      for (auto& c : stored["corpora"]) c["path"] = fs::absolute(cfg_.resolve(c["path"])).string();
      if (cfg_.keywords) stored["keywords"] = fs::absolute(cfg_.resolve(*cfg_.keywords)).string();
      if (!cfg_.stopwords.empty()) stored["stopwords"] = fs::absolute(cfg_.resolve(cfg_.stopwords)).string();
      if (cfg_.chat.script != "synthetic") stored["chat"]["script"] = fs::absolute(cfg_.resolve(cfg_.chat.script)).string();
      if (cfg_.embedding.cache_dir) {
        stored["embedding"]["cache_dir"] = fs::absolute(cfg_.resolve(*cfg_.embedding.cache_dir)).string();
      }
      util::write_file_atomic(dir_ / "config.json", stored.dump(2) + "\n");
      save_manifest();
    }
  }

  static std::unique_ptr<EmbeddingProvider> make_embedder(const EmbeddingConfig& e) {
    if (e.provider == "remote") {
      RemoteProviderOptions o;
      o.endpoint = e.endpoint;
      o.model_name = e.model;
      o.dim = e.dim;
      o.max_batch = e.max_batch;
      o = RemoteProvider::options_from_env(o);
      if (!e.endpoint.empty()) o.endpoint = e.endpoint;  // the config wins over EMBED_ENDPOINT
      return std::make_unique<RemoteProvider>(o);
    }
    return std::make_unique<HashingProvider>(e.dim, e.seed);
  }

  const PipelineConfig& cfg() const { return cfg_; }
  Providers providers() { return {*embedder_, *gateway_, cache_.get(), summary_embedder_.get()}; }
  const std::string& fingerprint() const { return fingerprint_; }
  EmbeddingProvider& embedder() { return *embedder_; }
  Gateway& gateway() { return *gateway_; }
  EmbeddingCache* cache() { return cache_.get(); }
  const fs::path& dir() const { return dir_; }

  fs::path stopwords_path() const {
    return cfg_.stopwords.empty() ? fs::path(THEMESCOPE_DATA_DIR) / "stopwords.v1.txt" : cfg_.resolve(cfg_.stopwords);
  }
  StopwordList stopwords() const { return baselines::load_stopwords(stopwords_path()); }

  void emit(const std::string& name, const std::string& content) {
    auto path = dir_ / name;
    fs::create_directories(path.parent_path());
    util::write_file_atomic(path, content);
    record(name, content);
  }
  void record(const std::string& name, const std::string& content) {
    manifest_["artifacts"][name] = util::sha256_hex(content);
    save_manifest();
  }

  fs::path require(const std::string& name, const std::string& stage) const {
    auto path = dir_ / name;
    if (!fs::exists(path)) {
      throw StageError(stage, "missing upstream artifact " + name + "; run '" + stage + "' first");
    }
    return path;
  }

  Corpus corpus() const {
    auto text = util::read_file(require("corpus.jsonl", "ingest"));
    auto c = corpus::parse_jsonl(text, "corpus.jsonl");
    corpus::validate_and_sort(c);
    return c;
  }
  ThemeModel model() const { return ThemeModel::load(require("theme_model.json", "discover")); }
  ThemeAssignment assignment(const std::string& name = "assignment.csv",
                             const std::string& stage = "assign") const {
    return ThemeAssignment::from_csv(util::read_file(require(name, stage)));
  }
  VectorSet embeddings(const Corpus& corpus) const {
    auto v = embedding::load_vectors(require("embeddings.tsvs", "embed"));
    if (v.ids() != [&] {
          std::vector<std::string> ids;
          for (const auto& d : corpus.documents) ids.push_back(d.id);
          return ids;
        }()) {
      throw StageError("embed", "embeddings.tsvs does not match corpus.jsonl; rerun 'embed'");
    }
    return v;
  }

  std::string csv_header() const { return "# fingerprint=" + fingerprint_ + "\n"; }

 private:
  void save_manifest() { util::write_file_atomic(dir_ / "manifest.json", manifest_.dump(2) + "\n"); }

  PipelineConfig cfg_;
  fs::path dir_;
  std::unique_ptr<EmbeddingProvider> embedder_;
  std::unique_ptr<EmbeddingProvider> summary_embedder_;
  std::unique_ptr<EmbeddingCache> cache_;
  std::unique_ptr<ChatClient> chat_;
  std::unique_ptr<Gateway> gateway_;
  std::string fingerprint_;
  json manifest_;
};

std::vector<std::string> ids_of(const Corpus& c) {
  std::vector<std::string> ids;
  for (const auto& d : c.documents) ids.push_back(d.id);
  return ids;
}

std::vector<std::string> texts_of(const Corpus& c) {
  std::vector<std::string> t;
  for (const auto& d : c.documents) t.push_back(d.text);
  return t;
}

void report(json j) { std::cout << j.dump() << "\n"; }

// ---- subcommands ----------------------------------------------------------------------

void write_embeddings(Run& run, const Corpus& corpus) {
  auto texts = texts_of(corpus);
  auto v = embedding::embed_batch(run.embedder(), texts, ids_of(corpus), run.cache());
  if (run.cache()) run.cache()->flush();
  auto path = run.dir() / "embeddings.tsvs";
  embedding::save_vectors(v, path);
  run.record("embeddings.tsvs", util::read_file(path));
}

void cmd_ingest(Run& run) {
  const auto& cfg = run.cfg();
  if (cfg.corpora.empty()) throw StageError("ingest", "no corpora configured");
  Corpus all;
  std::vector<std::string> names;
  for (const auto& src : cfg.corpora) {
    auto c = corpus::load_corpus(cfg.resolve(src.path), src.format);
    names.push_back(fs::path(src.path).filename().string());
    for (auto& d : c.documents) all.documents.push_back(std::move(d));
  }
  all.source_name = util::join(names, "+");
  corpus::validate_and_sort(all);
  const auto n_loaded = all.size();
  if (cfg.keywords) all = corpus::filter_by_keywords(all, corpus::load_keywords(cfg.resolve(*cfg.keywords)));
  const auto n_matched = all.size();
  auto texts = texts_of(all);
  auto vectors = embedding::embed_batch(run.embedder(), texts, ids_of(all), run.cache());
  auto kept = corpus::deduplicate(all, vectors, cfg.dedup_threshold);
  run.emit("corpus.jsonl", corpus::to_jsonl(kept));
  write_embeddings(run, kept);
  json r = {{"command", "ingest"},
            {"fingerprint", run.fingerprint()},
            {"loaded", n_loaded},
            {"keyword_matched", n_matched},
            {"kept_after_dedup", kept.size()},
            {"keyword_list_version", kept.keyword_list_version}};
  run.emit("reports/ingest.json", r.dump(2) + "\n");
  report(r);
}

void cmd_embed(Run& run) {
  auto corpus = run.corpus();
  write_embeddings(run, corpus);
  report({{"command", "embed"}, {"fingerprint", run.fingerprint()}, {"documents", corpus.size()}});
}

void cmd_discover(Run& run, bool resume, const std::optional<std::string>& stop_after) {
  if (!fs::exists(run.dir() / "corpus.jsonl")) cmd_ingest(run);
  auto corpus = run.corpus();
  DiscoveryOptions opts;
  opts.run_dir = run.dir() / "checkpoints";
  opts.resume = resume;
  opts.stop_after = stop_after;
  auto result = pipeline::run_discovery(corpus, run.providers(), run.cfg().discovery, opts);
  if (run.cache()) run.cache()->flush();
  json r = {{"command", "discover"},
            {"fingerprint", run.fingerprint()},
            {"computed_stages", result.computed_stages},
            {"resumed_stages", result.resumed_stages},
            {"stopped_early", result.stopped_early}};
  if (!result.stopped_early) {
    run.emit("theme_model.json", result.model.serialize());
    run.emit("audit.jsonl", audit_to_jsonl(result.audit));
    run.emit("clusters.csv", run.csv_header() + clustering::assignment_to_csv(result.clusters, result.doc_ids));
    r["themes"] = result.model.clusters.size();
    r["clusters_found"] = result.model.n_clusters_found;
    r["coherent"] = result.model.n_coherent;
    r["selected_tau"] = result.model.selected_tau ? json(*result.model.selected_tau) : json(nullptr);
  }
  report(r);
}

void cmd_assign(Run& run, const std::optional<std::string>& strategy_name) {
  auto corpus = run.corpus();
  auto model = run.model();
  auto strategy = strategy_name ? parse_assign_strategy(*strategy_name) : run.cfg().strategy;
  auto a = pipeline::assign_corpus(corpus, model, strategy, run.gateway(), run.cfg().workers);
  auto csv = a.to_csv();
  run.emit("assign_" + lower(to_string(strategy)) + ".csv", csv);
  run.emit("assignment.csv", csv);
  report({{"command", "assign"},
          {"fingerprint", run.fingerprint()},
          {"strategy", to_string(strategy)},
          {"documents", a.ids.size()},
          {"unassigned", a.n_unassigned()},
          {"failed_batches", a.failed_batches}});
}

void cmd_lda(Run& run) {
  auto corpus = run.corpus();
  auto tc = baselines::tokenize(corpus, run.stopwords());
  TokenizedCorpus fit;
  fit.vocabulary = tc.vocabulary;
  fit.index = tc.index;
  for (std::size_t d = 0; d < tc.docs.size(); ++d) {
    if (tc.empty[d]) continue;
    fit.ids.push_back(tc.ids[d]);
    fit.docs.push_back(tc.docs[d]);
    fit.empty.push_back(false);
  }
  if (fit.docs.size() < tc.docs.size()) {
    spdlog::warn("{} documents have no tokens after preprocessing and are reported as outliers",
                 tc.docs.size() - fit.docs.size());
  }
  auto model = baselines::lda_fit(fit, run.cfg().lda);
  const auto n = run.cfg().keyword_top_n;
  auto fitted = baselines::lda_document_keywords(model, n);
  std::map<std::string, baselines::DocKeywords> by_id;
  for (auto& k : fitted) by_id[k.id] = k;
  std::vector<baselines::DocKeywords> rows;
  for (const auto& id : tc.ids) {
    auto it = by_id.find(id);
    rows.push_back(it != by_id.end() ? it->second : baselines::DocKeywords{id, "LDA", {baselines::kOutlier}});
  }
  run.emit("lda_keywords.csv", baselines::keywords_to_csv(rows, run.fingerprint()));
  json topics = json::array();
  for (std::size_t k = 0; k < model.K; ++k) topics.push_back(baselines::lda_topic_keywords(model, k, 10));
  run.emit("reports/lda_topics.json", json{{"fingerprint", run.fingerprint()},
                                           {"K", model.K},
                                           {"alpha", model.alpha},
                                           {"beta", model.beta},
                                           {"iterations", model.iterations},
                                           {"topics", topics}}
                                          .dump(2) +
                                          "\n");
  report({{"command", "baseline-lda"}, {"fingerprint", run.fingerprint()}, {"topics", model.K}});
}

void cmd_ctfidf(Run& run) {
  auto corpus = run.corpus();
  auto ids = ids_of(corpus);
  auto clusters = clustering::assignment_from_csv(util::read_file(run.require("clusters.csv", "discover")), ids);
  auto tc = baselines::tokenize(corpus, run.stopwords());
  const auto n = run.cfg().keyword_top_n;
  auto rows = baselines::ctfidf_document_keywords(clusters.labels, tc, n);
  run.emit("ctfidf_keywords.csv", baselines::keywords_to_csv(rows, run.fingerprint()));
  json classes = json::object();
  for (const auto& [c, terms] : baselines::ctfidf_keywords(clusters.labels, tc, 10)) {
    json t = json::array();
    for (const auto& s : terms) t.push_back({{"term", s.term}, {"score", s.score}});
    classes[std::to_string(c)] = t;
  }
  run.emit("reports/ctfidf_classes.json",
           json{{"fingerprint", run.fingerprint()}, {"classes", classes}}.dump(2) + "\n");
  report({{"command", "baseline-ctfidf"}, {"fingerprint", run.fingerprint()}, {"classes", classes.size()}});
}

void cmd_judge(Run& run, const std::vector<std::string>& methods, std::size_t sample,
               const std::optional<std::string>& human) {
  auto corpus = run.corpus();
  std::vector<std::size_t> rows(corpus.size());
  std::iota(rows.begin(), rows.end(), 0);
  if (sample > 0 && sample < rows.size()) {
    util::Rng rng(run.cfg().split.seed);
    rng.shuffle(rows.begin(), rows.end());
    rows.resize(sample);
    std::sort(rows.begin(), rows.end());
  }
  std::vector<JudgmentRecord> records;
  for (const auto& name : methods) {
    auto method = parse_judge_method(name);
    std::vector<evaluation::JudgeInput> inputs;
    if (method == JudgeMethod::Lda || method == JudgeMethod::Ctfidf) {
      const bool lda = method == JudgeMethod::Lda;
      auto kw = baselines::keywords_from_csv(util::read_file(
          run.require(lda ? "lda_keywords.csv" : "ctfidf_keywords.csv", lda ? "baseline-lda" : "baseline-ctfidf")));
      std::map<std::string, std::vector<std::string>> by_id;
      for (auto& k : kw) by_id[k.id] = std::move(k.keywords);
      for (auto r : rows) {
        const auto& d = corpus.documents[r];
        auto it = by_id.find(d.id);
        inputs.push_back({d.id, d.text, std::nullopt,
                          it == by_id.end() ? std::vector<std::string>{baselines::kOutlier} : it->second});
      }
    } else {
      const auto strategy =
          method == JudgeMethod::LlmSummary ? AssignStrategy::SummaryMediated : AssignStrategy::DirectTheme;
      const std::string file = "assign_" + lower(to_string(strategy)) + ".csv";
      auto a = run.assignment(file, "assign --strategy " + std::string(to_string(strategy)));
      std::map<std::string, std::optional<std::string>> by_id;
      for (std::size_t i = 0; i < a.ids.size(); ++i) by_id[a.ids[i]] = a.labels[i];
      for (auto r : rows) {
        const auto& d = corpus.documents[r];
        auto it = by_id.find(d.id);
        inputs.push_back({d.id, d.text, it == by_id.end() ? std::nullopt : it->second, {}});
      }
    }
    auto got = evaluation::run_llm_judge(run.gateway(), method, inputs, run.cfg().workers);
    records.insert(records.end(), got.begin(), got.end());
  }
  if (human) {
    auto h = evaluation::judgments_from_csv(util::read_file(*human));
    records.insert(records.end(), h.begin(), h.end());
  }
  auto cells = evaluation::accuracy_report(records);
  run.emit("reports/judgments.csv", evaluation::judgments_to_csv(records, run.fingerprint()));
  run.emit("reports/judge_accuracy.csv", evaluation::accuracy_to_csv(cells, run.fingerprint()));
  run.emit("reports/judge_accuracy.json",
           json{{"fingerprint", run.fingerprint()}, {"cells", evaluation::accuracy_to_json(cells)}}.dump(2) + "\n");
  report({{"command", "eval-judge"},
          {"fingerprint", run.fingerprint()},
          {"judgments", records.size()},
          {"cells", evaluation::accuracy_to_json(cells)}});
}

void cmd_correlation(Run& run) {
  auto corpus = run.corpus();
  auto m = evaluation::stance_theme_correlation(run.assignment(), corpus);
  run.emit("reports/correlation.csv", evaluation::correlation_to_csv(m, run.fingerprint()));
  auto j = evaluation::correlation_to_json(m);
  j["fingerprint"] = run.fingerprint();
  run.emit("reports/correlation.json", j.dump(2) + "\n");
  report({{"command", "eval-correlation"}, {"fingerprint", run.fingerprint()}, {"scored", m.n_scored}});
}

void cmd_retrieval(Run& run, const std::vector<std::size_t>& ks) {
  auto corpus = run.corpus();
  auto vectors = run.embeddings(corpus);
  auto r = evaluation::retrieval_eval(run.model(), run.embedder(), vectors, corpus, run.stopwords(), ks);
  run.emit("reports/retrieval.csv", evaluation::retrieval_to_csv(r, run.fingerprint()));
  auto j = evaluation::retrieval_to_json(r);
  j["fingerprint"] = run.fingerprint();
  run.emit("reports/retrieval.json", j.dump(2) + "\n");
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"platform", to_string(row.platform)}, {"k", row.k}, {"P", row.macro_precision}});
  }
  report({{"command", "eval-retrieval"}, {"fingerprint", run.fingerprint()}, {"rows", rows}});
}

void cmd_events(Run& run) {
  if (run.cfg().events.empty()) throw StageError("eval-events", "no events configured");
  auto corpus = run.corpus();
  auto a = run.assignment();
  json summary = json::array();
  for (const auto& e : run.cfg().events) {
    auto r = evaluation::event_report(corpus, a, e);
    run.emit("reports/events_" + slug(e.name) + ".csv", evaluation::event_to_csv(r, run.fingerprint()));
    auto j = evaluation::event_to_json(r);
    j["fingerprint"] = run.fingerprint();
    run.emit("reports/events_" + slug(e.name) + ".json", j.dump(2) + "\n");
    summary.push_back({{"event", e.name}, {"before", r.before_assigned}, {"after", r.after_assigned},
                       {"top_changes", r.top_changes}});
  }
  report({{"command", "eval-events"}, {"fingerprint", run.fingerprint()}, {"events", summary}});
}

void cmd_stance(Run& run, bool llm) {
  auto corpus = run.corpus();
  auto a = run.assignment();
  std::vector<ResultRow> rows;
  std::set<Platform> platforms;
  for (const auto& d : corpus.documents) platforms.insert(d.platform);
  for (auto p : platforms) {
    Corpus part;
    for (const auto& d : corpus.documents)
      if (d.platform == p) part.documents.push_back(d);
    const std::string name(to_string(p));
    try {
      auto data = stance::build_labeled_set(part, a, name);
      auto results = stance::run_variants(data, run.cfg().split, run.cfg().stance_grid, run.cfg().logreg,
                                          run.cfg().workers);
      auto r = stance::result_rows(results, name);
      rows.insert(rows.end(), r.begin(), r.end());
      if (llm || run.cfg().stance_llm) {
        auto l = stance::llm_stance_rows(run.gateway(), data, run.cfg().split, run.cfg().workers);
        rows.insert(rows.end(), l.begin(), l.end());
      }
    } catch (const Error& e) {
      spdlog::warn("stance lab skipped platform {}: {}", name, e.what());
    }
  }
  if (rows.empty()) throw StageError("stance-run", "no platform had enough stance-labeled documents");
  run.emit("reports/stance_results.csv", stance::results_to_csv(rows, run.fingerprint()));
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"model", r.model}, {"variant", r.variant}, {"platform", r.platform}, {"Acc", r.accuracy},
                   {"F1", r.f1}});
  }
  report({{"command", "stance-run"}, {"fingerprint", run.fingerprint()}, {"rows", out}});
}

void cmd_export(Run& run) {
  auto correlation = util::read_file(run.require("reports/correlation.csv", "eval-correlation"));
  std::vector<std::pair<std::string, std::string>> events;
  for (const auto& e : run.cfg().events) {
    auto name = "events_" + slug(e.name) + ".csv";
    events.emplace_back(name, util::read_file(run.require("reports/" + name, "eval-events")));
  }
  auto corpus = run.corpus();
  auto a = run.assignment();
  auto vectors = run.embeddings(corpus);

  run.emit("plots/correlation_heatmap.csv", correlation);
  for (const auto& [name, content] : events) run.emit("plots/" + name, content);

  std::map<std::string, std::optional<std::string>> theme_of;
  for (std::size_t i = 0; i < a.ids.size(); ++i) theme_of[a.ids[i]] = a.labels[i];
  auto theme = [&](const std::string& id) {
    auto it = theme_of.find(id);
    return it != theme_of.end() && it->second ? *it->second : std::string("UNASSIGNED");
  };

  std::map<std::pair<std::string, std::string>, std::size_t> counts;
  for (const auto& d : corpus.documents) {
    auto t = theme(d.id);
    if (t != "UNASSIGNED") ++counts[{t, std::string(to_string(d.platform))}];
  }
  std::string tc = run.csv_header() + util::csv_row({"theme", "platform", "count"});
  for (const auto& [k, n] : counts) tc += util::csv_row({k.first, k.second, std::to_string(n)});
  run.emit("plots/theme_counts.csv", tc);

  UmapConfig u = run.cfg().plot_umap;
  u.target_dim = 2;
  if (corpus.size() < 3) throw StageError("export-plots", "projection needs at least 3 documents");
  u.n_neighbors = std::min(u.n_neighbors, corpus.size() - 1);
  auto y = projection::umap_fit_transform(embedding::l2_normalize(vectors), u);
  std::string proj = run.csv_header() + util::csv_row({"id", "x", "y", "platform", "theme"});
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& d = corpus.documents[i];
    proj += util::csv_row({d.id, util::format_double(y.row(i)(0)), util::format_double(y.row(i)(1)),
                           std::string(to_string(d.platform)), theme(d.id)});
  }
  run.emit("plots/projection_2d.csv", proj);
  report({{"command", "export-plots"}, {"fingerprint", run.fingerprint()}, {"files", 3 + events.size()}});
}

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> ks;
  for (const auto& part : util::split(s, ',')) {
    auto t = util::trim(part);
    if (t.empty() || !std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); })) {
      throw CLI::ValidationError("--k", "expected a comma-separated list of positive integers");
    }
    ks.push_back(std::stoul(t));
    if (ks.back() == 0) throw CLI::ValidationError("--k", "k must be >= 1");
  }
  return ks;
}

}  // namespace

// ---- dispatch ---------------------------------------------------------------------------

int cli_dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Theme discovery and evaluation over climate text corpora", "themescope"};
  app.require_subcommand(1);

  std::string config_path, run_dir;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--run,--out", run_dir, "run directory");
  };
  auto* ingest = app.add_subcommand("ingest", "load, keyword-filter and deduplicate the corpora");
  auto* embed = app.add_subcommand("embed", "embed the ingested corpus");
  auto* discover = app.add_subcommand("discover", "discover themes (checkpointed)");
  auto* assign = app.add_subcommand("assign", "assign every document to a theme");
  auto* lda = app.add_subcommand("baseline-lda", "LDA keyword baseline");
  auto* ctfidf = app.add_subcommand("baseline-ctfidf", "c-TF-IDF keyword baseline over discovered clusters");
  auto* judge = app.add_subcommand("eval-judge", "LLM-as-judge accuracy per method");
  auto* corr = app.add_subcommand("eval-correlation", "theme/stance phi coefficients");
  auto* retr = app.add_subcommand("eval-retrieval", "theme-as-query retrieval precision");
  auto* events = app.add_subcommand("eval-events", "before/after event reports");
  auto* stance_cmd = app.add_subcommand("stance-run", "TF-IDF logistic regression stance variants");
  auto* plots = app.add_subcommand("export-plots", "tidy CSVs for figures");
  for (auto* s : {ingest, embed, discover, assign, lda, ctfidf, judge, corr, retr, events, stance_cmd, plots}) common(s);

  std::string resume_dir;
  std::optional<std::string> stop_after;
  auto* resume_opt = discover->add_option("--resume", resume_dir, "continue from checkpoints in this run directory")
                         ->expected(0, 1);
  discover->add_option("--stop-after", stop_after, "stop after this stage");

  std::optional<std::string> strategy;
  assign->add_option("--strategy", strategy, "SUMMARY_MEDIATED or DIRECT_THEME");

  std::vector<std::string> methods{"LDA", "CTFIDF", "LLM_SUMMARY", "LLM_THEME"};
  std::size_t sample = 0;
  std::optional<std::string> human;
  judge->add_option("--methods", methods, "methods to judge")->delimiter(',');
  judge->add_option("--sample", sample, "judge a seeded sample of this many documents (0 = all)");
  judge->add_option("--human", human, "human judgment CSV to include")->check(CLI::ExistingFile);

  std::string ks_text;
  retr->add_option("--k", ks_text, "comma-separated cutoffs, e.g. 1,5");

  bool llm = false;
  stance_cmd->add_flag("--llm", llm, "also score LLM-prompted stance");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (resume_opt->count() > 0 && !resume_dir.empty()) {
      if (!run_dir.empty() && fs::path(run_dir) != fs::path(resume_dir)) {
        std::cerr << "--resume and --out name different directories\n";
        return 2;
      }
      run_dir = resume_dir;
    }
    if (run_dir.empty()) {
      std::cerr << "a run directory is required (--out DIR)\n\n" << app.help();
      return 2;
    }
    if (stop_after && std::find(std::begin(kStages), std::end(kStages), *stop_after) == std::end(kStages)) {
      std::cerr << "unknown stage for --stop-after: " << *stop_after << "\n";
      return 2;
    }
    PipelineConfig cfg;
    if (!config_path.empty()) {
      cfg = PipelineConfig::load(config_path);
    } else if (fs::exists(fs::path(run_dir) / "config.json")) {
      cfg = PipelineConfig::load(fs::path(run_dir) / "config.json");
    } else {
      std::cerr << "no --config given and " << run_dir << " has no config.json\n";
      return 2;
    }
    Run run(std::move(cfg), run_dir);
    if (ingest->parsed()) cmd_ingest(run);
    else if (embed->parsed()) cmd_embed(run);
    else if (discover->parsed()) cmd_discover(run, resume_opt->count() > 0, stop_after);
    else if (assign->parsed()) cmd_assign(run, strategy);
    else if (lda->parsed()) cmd_lda(run);
    else if (ctfidf->parsed()) cmd_ctfidf(run);
    else if (judge->parsed()) cmd_judge(run, methods, sample, human);
    else if (corr->parsed()) cmd_correlation(run);
    else if (retr->parsed()) cmd_retrieval(run, ks_text.empty() ? run.cfg().retrieval_k : parse_ks(ks_text));
    else if (events->parsed()) cmd_events(run);
    else if (stance_cmd->parsed()) cmd_stance(run, llm);
    else if (plots->parsed()) cmd_export(run);
    return 0;
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const StageError& e) {
    std::cerr << json{{"error", e.what()}, {"stage", e.stage()}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
}

int cli_dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_dispatch(args);
}

}  // namespace themescope::cli
