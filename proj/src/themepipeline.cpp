#include "themescope/themepipeline.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "parallel.hpp"

namespace themescope {

using nlohmann::json;

// ---- serialization -------------------------------------------------------------

namespace {

json cluster_to_json(const ThemeCluster& c) {
  json reps = json::array();
  for (const auto& r : c.representatives) reps.push_back({{"id", r.id}, {"text", r.text}, {"probability", r.probability}});
  return {{"cluster_id", c.cluster_id},   {"member_ids", c.member_ids}, {"representatives", reps},
          {"summary", c.summary},         {"theme_label", c.theme_label}, {"merged_from", c.merged_from}};
}

ThemeCluster cluster_from_json(const json& j) {
  ThemeCluster c;
  c.cluster_id = j.at("cluster_id").get<int>();
  c.member_ids = j.at("member_ids").get<std::vector<std::string>>();
  for (const auto& r : j.at("representatives")) {
    c.representatives.push_back(
        {r.at("id").get<std::string>(), r.at("text").get<std::string>(), r.at("probability").get<double>()});
  }
  c.summary = j.value("summary", "");
  c.theme_label = j.value("theme_label", "");
  c.merged_from = j.at("merged_from").get<std::vector<int>>();
  return c;
}

json clusters_to_json(const std::vector<ThemeCluster>& cs) {
  json a = json::array();
  for (const auto& c : cs) a.push_back(cluster_to_json(c));
  return a;
}

std::vector<ThemeCluster> clusters_from_json(const json& j) {
  std::vector<ThemeCluster> out;
  for (const auto& c : j) out.push_back(cluster_from_json(c));
  return out;
}

json scores_to_json(const std::vector<TauScore>& scores) {
  json a = json::array();
  for (const auto& s : scores) {
    a.push_back({{"tau", s.tau},
                 {"n_groups", s.n_groups},
                 {"silhouette", s.silhouette},
                 {"davies_bouldin", s.davies_bouldin},
                 {"valid", s.valid}});
  }
  return a;
}

std::vector<TauScore> scores_from_json(const json& j) {
  std::vector<TauScore> out;
  for (const auto& s : j) {
    out.push_back({s.at("tau").get<double>(), s.at("n_groups").get<std::size_t>(), s.at("silhouette").get<double>(),
                   s.at("davies_bouldin").get<double>(), s.at("valid").get<bool>()});
  }
  return out;
}

json audit_entry_to_json(const AuditEntry& e) {
  return {{"stage", e.stage},
          {"cluster_id", e.cluster_id},
          {"verdict", e.verdict},
          {"reasoning", e.reasoning},
          {"representative_ids", e.representative_ids}};
}

AuditEntry audit_entry_from_json(const json& j) {
  return {j.at("stage").get<std::string>(), j.at("cluster_id").get<int>(), j.at("verdict").get<std::string>(),
          j.at("reasoning").get<std::string>(), j.at("representative_ids").get<std::vector<std::string>>()};
}

}  // namespace

void MergeConfig::validate() const {
  if (tau_grid.empty()) throw Error("tau grid is empty");
  for (std::size_t i = 0; i < tau_grid.size(); ++i) {
    if (!(tau_grid[i] > 0.0 && tau_grid[i] < 1.0)) throw Error("tau values must lie in (0, 1)");
    if (i > 0 && !(tau_grid[i] > tau_grid[i - 1])) throw Error("tau grid must be strictly ascending");
  }
  if (selected_tau && std::find(tau_grid.begin(), tau_grid.end(), *selected_tau) == tau_grid.end()) {
    throw Error("selected tau is not in the grid");
  }
}

int ThemeModel::find_label(const std::string& label) const {
  auto key = util::casefold(util::trim(label));
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    if (util::casefold(clusters[i].theme_label) == key) return static_cast<int>(i);
  }
  return -1;
}

json ThemeModel::to_json() const {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["config_fingerprint"] = config_fingerprint;
  j["corpus_ref"] = corpus_ref;
  j["n_clusters_found"] = n_clusters_found;
  j["n_coherent"] = n_coherent;
  j["n_themes"] = clusters.size();
  j["n_absorbed"] = n_coherent >= clusters.size() ? n_coherent - clusters.size() : 0;
  j["selected_tau"] = selected_tau ? json(*selected_tau) : json(nullptr);
  j["tau_scores"] = scores_to_json(tau_scores);
  j["clusters"] = clusters_to_json(clusters);
  return j;
}

ThemeModel ThemeModel::from_json(const json& j) {
  if (j.value("schema_version", 0) != kSchemaVersion) throw Error("unsupported theme model schema version");
  ThemeModel m;
  m.config_fingerprint = j.at("config_fingerprint").get<std::string>();
  m.corpus_ref = j.at("corpus_ref").get<std::string>();
  m.n_clusters_found = j.at("n_clusters_found").get<std::size_t>();
  m.n_coherent = j.at("n_coherent").get<std::size_t>();
  if (!j.at("selected_tau").is_null()) m.selected_tau = j.at("selected_tau").get<double>();
  m.tau_scores = scores_from_json(j.at("tau_scores"));
  m.clusters = clusters_from_json(j.at("clusters"));
  return m;
}

std::string ThemeModel::serialize() const { return to_json().dump(2) + "\n"; }

ThemeModel ThemeModel::load(const std::filesystem::path& path) {
  auto j = json::parse(util::read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error("theme model is not valid JSON: " + path.string());
  return from_json(j);
}

std::string_view to_string(AssignStrategy s) {
  return s == AssignStrategy::SummaryMediated ? "SUMMARY_MEDIATED" : "DIRECT_THEME";
}

AssignStrategy parse_assign_strategy(std::string_view s) {
  if (s == "SUMMARY_MEDIATED") return AssignStrategy::SummaryMediated;
  if (s == "DIRECT_THEME") return AssignStrategy::DirectTheme;
  throw Error("unknown assignment strategy: " + std::string(s));
}

std::size_t ThemeAssignment::n_unassigned() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::nullopt));
}

std::string ThemeAssignment::to_csv() const {
  std::string out = "# fingerprint=" + model_fingerprint + "\n";
  out += util::csv_row({"id", "theme_label", "strategy"});
  const std::string strat(to_string(strategy));
  for (std::size_t i = 0; i < ids.size(); ++i) out += util::csv_row({ids[i], labels[i].value_or("UNASSIGNED"), strat});
  return out;
}

ThemeAssignment ThemeAssignment::from_csv(std::string_view text) {
  ThemeAssignment a;
  const std::string_view tag = "# fingerprint=";
  if (text.substr(0, tag.size()) == tag) {
    auto eol = text.find('\n');
    a.model_fingerprint = util::trim(text.substr(tag.size(), eol - tag.size()));
  }
  auto table = util::parse_csv(text);
  int id_col = table.column("id"), label_col = table.column("theme_label"), strat_col = table.column("strategy");
  if (id_col < 0 || label_col < 0 || strat_col < 0) throw Error("assignment CSV needs id, theme_label, strategy");
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    a.ids.push_back(row.at(id_col));
    const auto& label = row.at(label_col);
    a.labels.push_back(label == "UNASSIGNED" ? std::nullopt : std::optional<std::string>(label));
    a.strategy = parse_assign_strategy(row.at(strat_col));
  }
  return a;
}

std::string audit_to_jsonl(const std::vector<AuditEntry>& entries) {
  std::string out;
  for (const auto& e : entries) out += audit_entry_to_json(e).dump() + "\n";
  return out;
}

json DiscoveryConfig::to_json() const {
  return {{"pca_components", pca_components},
          {"umap",
           {{"target_dim", umap.target_dim},
            {"n_neighbors", umap.n_neighbors},
            {"min_dist", umap.min_dist},
            {"spread", umap.spread},
            {"n_epochs", umap.n_epochs},
            {"seed", umap.seed},
            {"learning_rate", umap.learning_rate},
            {"repulsion_strength", umap.repulsion_strength},
            {"negative_sample_rate", umap.negative_sample_rate},
            {"init", "random"}}},
          {"hdbscan", {{"min_cluster_size", hdbscan.min_cluster_size}, {"min_samples", hdbscan.min_samples}}},
          {"representatives_k", representatives_k},
          {"tau_grid", merge.tau_grid}};
}

namespace pipeline {

std::string config_fingerprint(const DiscoveryConfig& cfg, const EmbeddingProvider& embedder, const Gateway& gateway,
                               const EmbeddingProvider* summary_embedder) {
  json j = cfg.to_json();
  j["embedder"] = embedder.fingerprint();
  if (summary_embedder) j["summary_embedder"] = summary_embedder->fingerprint();
  j["gateway"] = gateway.fingerprint();
  return util::sha256_hex(j.dump());
}

// ---- coherency -------------------------------------------------------------------

CoherencyOutcome filter_coherent(const std::vector<ThemeCluster>& clusters, Gateway& gateway, std::size_t workers) {
  std::vector<CoherencyVerdict> verdicts(clusters.size());
  detail::parallel_for(clusters.size(), workers, [&](std::size_t i) {
    std::vector<std::string> texts;
    for (const auto& r : clusters[i].representatives) texts.push_back(r.text);
    if (texts.empty()) throw PreconditionError("cluster " + std::to_string(clusters[i].cluster_id) + " has no representatives");
    verdicts[i] = gateway.check_coherency(texts);
  });
  CoherencyOutcome out;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    AuditEntry e;
    e.stage = "coherency";
    e.cluster_id = clusters[i].cluster_id;
    e.verdict = verdicts[i].verdict == Coherency::Coherent ? "COHERENT" : "INCOHERENT";
    e.reasoning = verdicts[i].reasoning;
    for (const auto& r : clusters[i].representatives) e.representative_ids.push_back(r.id);
    out.audit.push_back(std::move(e));
    if (verdicts[i].verdict == Coherency::Coherent) out.retained.push_back(clusters[i]);
  }
  if (!clusters.empty() && out.retained.empty()) spdlog::warn("every cluster was judged incoherent; the theme model is empty");
  return out;
}

// ---- merging ---------------------------------------------------------------------

std::vector<std::vector<std::size_t>> merge_redundant(const Matrix& summary_vectors, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw Error("merge threshold must lie in (0, 1)");
  const auto n = static_cast<std::size_t>(summary_vectors.rows());
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double sim = embedding::cosine_similarity(summary_vectors.row(static_cast<Eigen::Index>(i)),
                                                summary_vectors.row(static_cast<Eigen::Index>(j)));
      // Tolerance keeps a pair that sits exactly on tau merged despite rounding.
      if (sim >= tau - 1e-12) {
        auto a = find(i), b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> by_root;
  for (std::size_t i = 0; i < n; ++i) by_root[find(i)].push_back(i);
  std::vector<std::vector<std::size_t>> groups;
  for (auto& [_, g] : by_root) groups.push_back(std::move(g));
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return groups;
}

GridResult tau_grid_search(const MergeConfig& cfg, const Matrix& summary_vectors, const Matrix& reduced_docs,
                           const std::vector<int>& doc_cluster) {
  cfg.validate();
  if (summary_vectors.rows() < 2) throw Error("tau grid search needs at least 2 clusters");
  if (static_cast<Eigen::Index>(doc_cluster.size()) != reduced_docs.rows()) {
    throw Error("tau grid search: document labels not aligned with reduced vectors");
  }
  GridResult out;
  out.config = cfg;
  for (double tau : cfg.tau_grid) {
    auto groups = merge_redundant(summary_vectors, tau);
    std::vector<int> group_of(static_cast<std::size_t>(summary_vectors.rows()));
    for (std::size_t g = 0; g < groups.size(); ++g)
      for (auto r : groups[g]) group_of[r] = static_cast<int>(g);
    std::vector<int> labels(doc_cluster.size(), kNoise);
    for (std::size_t i = 0; i < doc_cluster.size(); ++i) {
      if (doc_cluster[i] != kNoise) labels[i] = group_of.at(static_cast<std::size_t>(doc_cluster[i]));
    }
    TauScore s;
    s.tau = tau;
    s.n_groups = groups.size();
    if (groups.size() >= 2) {
      try {
        auto v = clustering::validity(reduced_docs, labels);
        s.silhouette = v.silhouette;
        s.davies_bouldin = v.davies_bouldin;
        s.valid = true;
      } catch (const Error& e) {
        spdlog::warn("tau {}: validity metrics undefined ({})", tau, e.what());
      }
    }
    out.scores.push_back(s);
  }
  constexpr double eps = 1e-12;
  const TauScore* best = nullptr;
  for (const auto& s : out.scores) {
    if (!s.valid) continue;
    if (!best) {
      best = &s;
      continue;
    }
    if (s.silhouette > best->silhouette + eps) {
      best = &s;
    } else if (std::abs(s.silhouette - best->silhouette) <= eps) {
      if (s.davies_bouldin < best->davies_bouldin - eps) {
        best = &s;
      } else if (std::abs(s.davies_bouldin - best->davies_bouldin) <= eps && s.tau > best->tau) {
        best = &s;
      }
    }
  }
  if (best) {
    out.config.selected_tau = best->tau;
  } else {
    out.config.selected_tau = cfg.tau_grid.back();
    spdlog::warn("no tau in the grid kept two or more groups; using the largest tau {}", cfg.tau_grid.back());
  }
  return out;
}

namespace {

std::vector<Representative> top_representatives(const std::vector<const ThemeCluster*>& parts, std::size_t k) {
  std::vector<Representative> reps;
  std::set<std::string> seen;
  for (const auto* c : parts) {
    for (const auto& r : c->representatives) {
      if (seen.insert(r.id).second) reps.push_back(r);
    }
  }
  std::sort(reps.begin(), reps.end(), [](const Representative& a, const Representative& b) {
    if (a.probability != b.probability) return a.probability > b.probability;
    return a.id < b.id;
  });
  if (reps.size() > k) reps.resize(k);
  return reps;
}

ThemeCluster union_of(const std::vector<const ThemeCluster*>& parts, std::size_t k) {
  ThemeCluster m;
  m.cluster_id = parts.front()->cluster_id;
  for (const auto* c : parts) {
    m.cluster_id = std::min(m.cluster_id, c->cluster_id);
    m.member_ids.insert(m.member_ids.end(), c->member_ids.begin(), c->member_ids.end());
    m.merged_from.insert(m.merged_from.end(), c->merged_from.begin(), c->merged_from.end());
  }
  std::sort(m.merged_from.begin(), m.merged_from.end());
  m.representatives = top_representatives(parts, k);
  return m;
}

std::vector<std::string> rep_texts(const ThemeCluster& c) {
  std::vector<std::string> t;
  for (const auto& r : c.representatives) t.push_back(r.text);
  return t;
}

}  // namespace

std::vector<ThemeCluster> consolidate(const std::vector<ThemeCluster>& clusters,
                                      const std::vector<std::vector<std::size_t>>& groups, Gateway& gateway,
                                      std::size_t k, std::size_t workers) {
  std::vector<bool> covered(clusters.size(), false);
  for (const auto& g : groups) {
    if (g.empty()) throw Error("merge produced an empty group");
    for (auto r : g) {
      if (r >= clusters.size() || covered[r]) throw Error("merge groups do not partition the clusters");
      covered[r] = true;
    }
  }
  if (std::find(covered.begin(), covered.end(), false) != covered.end()) {
    throw Error("merge groups do not partition the clusters");
  }
  std::vector<ThemeCluster> out(groups.size());
  detail::parallel_for(groups.size(), workers, [&](std::size_t gi) {
    const auto& g = groups[gi];
    if (g.size() == 1) {
      out[gi] = clusters[g.front()];
      return;
    }
    std::vector<const ThemeCluster*> parts;
    for (auto r : g) parts.push_back(&clusters[r]);
    out[gi] = union_of(parts, k);
    out[gi].summary = gateway.summarize_cluster(rep_texts(out[gi]));
  });
  return out;
}

std::vector<ThemeCluster> label_clusters(const std::vector<ThemeCluster>& clusters, Gateway& gateway, std::size_t k,
                                         std::size_t workers) {
  std::vector<std::string> labels(clusters.size());
  detail::parallel_for(clusters.size(), workers,
                       [&](std::size_t i) { labels[i] = gateway.label_theme(clusters[i].summary); });

  // Group by case-folded label, in first-occurrence order.
  std::vector<std::vector<std::size_t>> by_label;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    auto key = util::casefold(labels[i]);
    auto [it, fresh] = index.emplace(key, by_label.size());
    if (fresh) by_label.emplace_back();
    by_label[it->second].push_back(i);
  }
  std::vector<ThemeCluster> out(by_label.size());
  detail::parallel_for(by_label.size(), workers, [&](std::size_t gi) {
    const auto& g = by_label[gi];
    if (g.size() == 1) {
      out[gi] = clusters[g.front()];
    } else {
      spdlog::info("{} clusters share the label '{}'; folding them into one theme", g.size(), labels[g.front()]);
      std::vector<const ThemeCluster*> parts;
      for (auto r : g) parts.push_back(&clusters[r]);
      out[gi] = union_of(parts, k);
      out[gi].summary = gateway.summarize_cluster(rep_texts(out[gi]));
    }
    out[gi].theme_label = labels[g.front()];
  });
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.cluster_id < b.cluster_id; });
  return out;
}

// ---- discovery -------------------------------------------------------------------

namespace {

class Checkpoints {
 public:
  Checkpoints(const DiscoveryOptions& opts, std::string fingerprint)
      : dir_(opts.run_dir), resume_(opts.resume), fp_(std::move(fingerprint)) {
    if (dir_) std::filesystem::create_directories(*dir_);
  }

  // Stored data for a stage when resuming and every earlier stage was also
  // restored.
  std::optional<json> load(const std::string& stage) {
    if (!dir_ || !resume_ || broken_) return std::nullopt;
    auto path = *dir_ / (stage + ".json");
    if (!std::filesystem::exists(path)) {
      broken_ = true;
      return std::nullopt;
    }
    auto j = json::parse(util::read_file(path), nullptr, false);
    if (j.is_discarded() || j.value("stage", "") != stage) {
      throw StageError(stage, "checkpoint file is corrupt: " + path.string());
    }
    if (j.value("fingerprint", "") != fp_) {
      throw StageError(stage, "checkpoint belongs to a different configuration (fingerprint mismatch)");
    }
    return j.at("data");
  }

  void save(const std::string& stage, const json& data) {
    broken_ = true;  // later stages must be recomputed too
    if (!dir_) return;
    json j{{"stage", stage}, {"fingerprint", fp_}, {"data", data}};
    util::write_file_atomic(*dir_ / (stage + ".json"), j.dump(2) + "\n");
  }

  std::optional<std::filesystem::path> file(const std::string& name) const {
    if (!dir_) return std::nullopt;
    return *dir_ / name;
  }

 private:
  std::optional<std::filesystem::path> dir_;
  bool resume_;
  std::string fp_;
  bool broken_ = false;
};

json vectors_checkpoint(const VectorSet& v, Checkpoints& cp, const std::string& name) {
  json j{{"n", v.size()}, {"dim", v.dim()}, {"provider", v.provider_fingerprint()}};
  if (auto path = cp.file(name)) {
    embedding::save_vectors(v, *path);
    j["file"] = name;
    j["sha256"] = util::sha256_hex(util::read_file(*path));
  }
  return j;
}

VectorSet vectors_restore(const json& j, Checkpoints& cp, const std::string& stage) {
  auto path = cp.file(j.at("file").get<std::string>());
  if (!path || !std::filesystem::exists(*path)) throw StageError(stage, "vector file missing from run directory");
  if (util::sha256_hex(util::read_file(*path)) != j.at("sha256").get<std::string>()) {
    throw StageError(stage, "vector file does not match its checkpoint hash");
  }
  return embedding::load_vectors(*path);
}

}  // namespace

DiscoveryResult run_discovery(const Corpus& corpus, Providers providers, const DiscoveryConfig& config,
                              const DiscoveryOptions& options) {
  if (corpus.documents.empty()) throw Error("cannot discover themes in an empty corpus");
  config.merge.validate();
  if (config.representatives_k == 0 || config.representatives_k > 5) {
    throw Error("representatives_k must be between 1 and 5");
  }
  if (options.stop_after &&
      std::find_if(std::begin(kStages), std::end(kStages), [&](const char* s) { return *options.stop_after == s; }) ==
          std::end(kStages)) {
    throw Error("unknown stage: " + *options.stop_after);
  }

  const std::string fp = config_fingerprint(config, providers.embedder, providers.gateway, providers.summary_embedder);
  Checkpoints cp(options, fp);
  DiscoveryResult result;
  const std::size_t workers = 4;

  std::vector<std::string> texts;
  for (const auto& d : corpus.documents) {
    result.doc_ids.push_back(d.id);
    texts.push_back(d.text);
  }
  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < result.doc_ids.size(); ++i) row_of[result.doc_ids[i]] = i;

  // Runs one stage: restore from checkpoint when possible, otherwise compute
  // and save. Returns true when the caller should stop.
  auto stage = [&](const std::string& name, auto&& restore, auto&& compute) {
    try {
      if (auto data = cp.load(name)) {
        restore(*data);
        result.resumed_stages.push_back(name);
      } else {
        cp.save(name, compute());
        result.computed_stages.push_back(name);
      }
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
    if (options.stop_after && *options.stop_after == name) {
      result.stopped_early = true;
      return true;
    }
    return false;
  };

  VectorSet embedded({"_"}, Matrix::Zero(1, 2), "");
  VectorSet reduced = embedded;
  std::vector<ThemeCluster> found, coherent, merged;
  ThemeModel& model = result.model;
  model.config_fingerprint = fp;
  model.corpus_ref = corpus.source_name + ";n=" + std::to_string(corpus.documents.size()) +
                     ";ids=" + util::sha256_hex(util::join(result.doc_ids, "\n")).substr(0, 16);

  if (stage("embed", [&](const json& d) { embedded = vectors_restore(d, cp, "embed"); },
            [&] {
              embedded = embedding::l2_normalize(
                  embedding::embed_batch(providers.embedder, texts, result.doc_ids, providers.cache));
              return vectors_checkpoint(embedded, cp, "embed.tsvs");
            }))
    return result;

  if (stage("project", [&](const json& d) { reduced = vectors_restore(d, cp, "project"); },
            [&] {
              const std::size_t n = embedded.size();
              std::size_t comps = std::min({config.pca_components, n - 1, embedded.dim()});
              if (comps < config.pca_components) {
                spdlog::warn("PCA components reduced from {} to {} for a corpus of {} documents in {} dimensions",
                             config.pca_components, comps, n, embedded.dim());
              }
              auto [pca, pcs] = projection::pca_fit_transform(embedded, comps);
              reduced = projection::umap_fit_transform(pcs, config.umap);
              auto j = vectors_checkpoint(reduced, cp, "project.tsvs");
              j["pca_components"] = comps;
              return j;
            }))
    return result;

  if (stage("cluster",
            [&](const json& d) {
              result.clusters.labels = d.at("labels").get<std::vector<int>>();
              result.clusters.probabilities = d.at("probabilities").get<std::vector<double>>();
              result.clusters.n_clusters = d.at("n_clusters").get<int>();
            },
            [&] {
              result.clusters = clustering::hdbscan(reduced.matrix(), config.hdbscan).assignment;
              return json{{"labels", result.clusters.labels},
                          {"probabilities", result.clusters.probabilities},
                          {"n_clusters", result.clusters.n_clusters}};
            }))
    return result;
  model.n_clusters_found = static_cast<std::size_t>(result.clusters.n_clusters);

  if (stage("represent", [&](const json& d) { found = clusters_from_json(d.at("clusters")); },
            [&] {
              auto members = result.clusters.members();
              auto reps = clustering::select_representative_rows(result.clusters, result.doc_ids,
                                                                 config.representatives_k);
              for (std::size_t c = 0; c < members.size(); ++c) {
                ThemeCluster tc;
                tc.cluster_id = static_cast<int>(c);
                tc.merged_from = {tc.cluster_id};
                for (auto r : members[c]) tc.member_ids.push_back(result.doc_ids[r]);
                for (auto r : reps.at(static_cast<int>(c))) {
                  tc.representatives.push_back({result.doc_ids[r], texts[r], result.clusters.probabilities[r]});
                }
                found.push_back(std::move(tc));
              }
              return json{{"clusters", clusters_to_json(found)}};
            }))
    return result;

  if (stage("coherency",
            [&](const json& d) {
              coherent = clusters_from_json(d.at("retained"));
              for (const auto& e : d.at("audit")) result.audit.push_back(audit_entry_from_json(e));
            },
            [&] {
              auto outcome = filter_coherent(found, providers.gateway, workers);
              coherent = std::move(outcome.retained);
              result.audit = std::move(outcome.audit);
              json audit = json::array();
              for (const auto& e : result.audit) audit.push_back(audit_entry_to_json(e));
              return json{{"retained", clusters_to_json(coherent)}, {"audit", audit}};
            }))
    return result;
  model.n_coherent = coherent.size();

  if (stage("summarize", [&](const json& d) { coherent = clusters_from_json(d.at("clusters")); },
            [&] {
              detail::parallel_for(coherent.size(), workers, [&](std::size_t i) {
                coherent[i].summary = providers.gateway.summarize_cluster(rep_texts(coherent[i]));
              });
              return json{{"clusters", clusters_to_json(coherent)}};
            }))
    return result;

  if (stage("merge",
            [&](const json& d) {
              merged = clusters_from_json(d.at("clusters"));
              model.tau_scores = scores_from_json(d.at("tau_scores"));
              if (!d.at("selected_tau").is_null()) model.selected_tau = d.at("selected_tau").get<double>();
            },
            [&] {
              if (coherent.size() < 2) {
                merged = coherent;
              } else {
                std::vector<std::string> summaries, sids;
                for (const auto& c : coherent) {
                  summaries.push_back(c.summary);
                  sids.push_back("cluster-" + std::to_string(c.cluster_id));
                }
                auto& summary_embedder = providers.summary_embedder ? *providers.summary_embedder : providers.embedder;
                auto sv = embedding::l2_normalize(
                    embedding::embed_batch(summary_embedder, summaries, sids, providers.cache));
                std::map<int, int> row_of_cluster;
                for (std::size_t i = 0; i < coherent.size(); ++i) row_of_cluster[coherent[i].cluster_id] = static_cast<int>(i);
                std::vector<int> doc_cluster(result.doc_ids.size(), kNoise);
                for (std::size_t i = 0; i < doc_cluster.size(); ++i) {
                  int l = result.clusters.labels[i];
                  auto it = row_of_cluster.find(l);
                  if (it != row_of_cluster.end()) doc_cluster[i] = it->second;
                }
                auto grid = tau_grid_search(config.merge, sv.matrix(), reduced.matrix(), doc_cluster);
                model.tau_scores = grid.scores;
                model.selected_tau = grid.config.selected_tau;
                merged = consolidate(coherent, merge_redundant(sv.matrix(), *model.selected_tau), providers.gateway,
                                     config.representatives_k, workers);
              }
              return json{{"clusters", clusters_to_json(merged)},
                          {"tau_scores", scores_to_json(model.tau_scores)},
                          {"selected_tau", model.selected_tau ? json(*model.selected_tau) : json(nullptr)}};
            }))
    return result;

  stage("label", [&](const json& d) { model = ThemeModel::from_json(d.at("model")); },
        [&] {
          model.clusters = label_clusters(merged, providers.gateway, config.representatives_k, workers);
          return json{{"model", model.to_json()}};
        });
  return result;
}

// ---- assignment ------------------------------------------------------------------

ThemeAssignment assign_corpus(const Corpus& corpus, const ThemeModel& model, AssignStrategy strategy, Gateway& gateway,
                              std::size_t workers) {
  if (model.clusters.empty()) throw Error("cannot assign against an empty theme model");
  std::vector<std::string> candidates;
  for (const auto& c : model.clusters) {
    candidates.push_back(strategy == AssignStrategy::SummaryMediated ? c.summary : c.theme_label);
  }
  ThemeAssignment out;
  out.strategy = strategy;
  out.model_fingerprint = model.config_fingerprint;
  const std::size_t n = corpus.documents.size();
  out.ids.reserve(n);
  for (const auto& d : corpus.documents) out.ids.push_back(d.id);
  out.labels.assign(n, std::nullopt);

  const std::size_t batch = Gateway::kBatchSize;
  const std::size_t n_batches = (n + batch - 1) / batch;
  std::vector<char> failed(n_batches, 0);
  detail::parallel_for(n_batches, workers, [&](std::size_t b) {
    const std::size_t lo = b * batch, hi = std::min(n, lo + batch);
    std::vector<std::string> texts;
    for (std::size_t i = lo; i < hi; ++i) texts.push_back(corpus.documents[i].text);
    BatchAssignment result;
    try {
      result = gateway.assign_batch(texts, candidates, strategy == AssignStrategy::SummaryMediated
                                                           ? AssignMode::Summary
                                                           : AssignMode::Theme);
    } catch (const PreconditionError&) {
      throw;
    } catch (const Error& e) {
      spdlog::warn("assignment batch {} failed: {}; its texts stay UNASSIGNED", b, e.what());
      failed[b] = 1;
      return;
    }
    if (result.batch_failed) failed[b] = 1;
    for (std::size_t i = lo; i < hi; ++i) {
      int choice = result.choices[i - lo];
      if (choice != kUnassigned) out.labels[i] = model.clusters[static_cast<std::size_t>(choice)].theme_label;
    }
  });
  out.failed_batches = static_cast<std::size_t>(std::count(failed.begin(), failed.end(), 1));
  return out;
}

}  // namespace pipeline
}  // namespace themescope
