#include "themescope/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace themescope {

std::vector<std::vector<std::size_t>> ClusterAssignment::members() const {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(std::max(n_clusters, 0)));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) out[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  return out;
}

std::string HdbscanParams::fingerprint() const {
  return "hdbscan(mcs=" + std::to_string(min_cluster_size) + ",ms=" + std::to_string(min_samples) +
         ",selection=eom,prob=lambda_ratio)";
}

namespace clustering {

namespace {

struct MstEdge {
  std::size_t a, b;
  double weight;
};

// Prim's algorithm over the implicit mutual-reachability graph. Ties pick the
// lowest vertex index.
std::vector<MstEdge> mutual_reachability_mst(const Matrix& y, const std::vector<double>& core) {
  const auto n = static_cast<std::size_t>(y.rows());
  std::vector<MstEdge> edges;
  edges.reserve(n > 0 ? n - 1 : 0);
  std::vector<char> in_tree(n, 0);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> from(n, 0);
  std::size_t current = 0;
  in_tree[0] = 1;
  for (std::size_t step = 1; step < n; ++step) {
    auto yc = y.row(static_cast<Eigen::Index>(current));
    for (std::size_t j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      double d = (yc - y.row(static_cast<Eigen::Index>(j))).norm();
      double mr = std::max({d, core[current], core[j]});
      if (mr < best[j] || (mr == best[j] && current < from[j])) {
        best[j] = mr;
        from[j] = current;
      }
    }
    std::size_t next = n;
    double next_w = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (!in_tree[j] && (next == n || best[j] < next_w)) {
        next = j;
        next_w = best[j];
      }
    }
    in_tree[next] = 1;
    edges.push_back({from[next], next, next_w});
    current = next;
  }
  return edges;
}

struct Linkage {
  std::size_t left, right;
  double distance;
  std::size_t size;
};

std::vector<Linkage> single_linkage(std::vector<MstEdge> edges, std::size_t n) {
  std::stable_sort(edges.begin(), edges.end(), [](const MstEdge& x, const MstEdge& y) {
    if (x.weight != y.weight) return x.weight < y.weight;
    auto xl = std::min(x.a, x.b), yl = std::min(y.a, y.b);
    if (xl != yl) return xl < yl;
    return std::max(x.a, x.b) < std::max(y.a, y.b);
  });
  std::vector<std::size_t> parent(2 * n - 1), size(2 * n - 1, 1);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  std::vector<Linkage> out;
  out.reserve(n - 1);
  std::size_t next = n;
  for (const auto& e : edges) {
    auto ra = find(e.a), rb = find(e.b);
    parent[ra] = parent[rb] = next;
    size[next] = size[ra] + size[rb];
    out.push_back({ra, rb, e.weight, size[next]});
    ++next;
  }
  return out;
}

double to_lambda(double distance) {
  return distance > 0 ? 1.0 / distance : std::numeric_limits<double>::max();
}

std::vector<CondensedRow> condense(const std::vector<Linkage>& tree, std::size_t n, std::size_t mcs) {
  const std::size_t root = 2 * n - 2;
  auto node_size = [&](std::size_t node) { return node < n ? std::size_t{1} : tree[node - n].size; };
  auto leaves_of = [&](std::size_t node, std::vector<char>& ignore, std::vector<std::size_t>& leaves) {
    std::vector<std::size_t> stack{node};
    while (!stack.empty()) {
      auto x = stack.back();
      stack.pop_back();
      ignore[x] = 1;
      if (x < n) {
        leaves.push_back(x);
      } else {
        stack.push_back(tree[x - n].right);
        stack.push_back(tree[x - n].left);
      }
    }
  };

  std::vector<CondensedRow> rows;
  std::vector<std::size_t> relabel(2 * n - 1, 0);
  std::vector<char> ignore(2 * n - 1, 0);
  relabel[root] = n;
  std::size_t next_label = n + 1;

  std::deque<std::size_t> bfs{root};
  while (!bfs.empty()) {
    auto node = bfs.front();
    bfs.pop_front();
    if (node < n || ignore[node]) continue;
    const auto& link = tree[node - n];
    bfs.push_back(link.left);
    bfs.push_back(link.right);
    double lambda = to_lambda(link.distance);
    auto lc = node_size(link.left), rc = node_size(link.right);
    auto fall_out = [&](std::size_t child) {
      std::vector<std::size_t> leaves;
      leaves_of(child, ignore, leaves);
      std::sort(leaves.begin(), leaves.end());
      for (auto p : leaves) rows.push_back({relabel[node], p, lambda, 1});
    };
    if (lc >= mcs && rc >= mcs) {
      relabel[link.left] = next_label++;
      rows.push_back({relabel[node], relabel[link.left], lambda, lc});
      relabel[link.right] = next_label++;
      rows.push_back({relabel[node], relabel[link.right], lambda, rc});
    } else if (lc < mcs && rc < mcs) {
      fall_out(link.left);
      fall_out(link.right);
    } else if (lc < mcs) {
      relabel[link.right] = relabel[node];
      fall_out(link.left);
    } else {
      relabel[link.left] = relabel[node];
      fall_out(link.right);
    }
  }
  return rows;
}

}  // namespace

HdbscanResult hdbscan(const Matrix& y, const HdbscanParams& params) {
  if (params.min_cluster_size < 2) throw Error("hdbscan: min_cluster_size must be >= 2");
  if (params.min_samples < 1) throw Error("hdbscan: min_samples must be >= 1");
  if (!y.allFinite()) throw Error("hdbscan: non-finite coordinates");
  const auto n = static_cast<std::size_t>(y.rows());

  HdbscanResult result;
  result.assignment.labels.assign(n, kNoise);
  result.assignment.probabilities.assign(n, 0.0);
  if (n < params.min_cluster_size || n < 2) return result;

  // Core distance: distance to the min_samples-th nearest other point.
  const std::size_t kth = std::min(params.min_samples, n - 1);
  result.core_distances.resize(n);
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto yi = y.row(static_cast<Eigen::Index>(i));
    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) dist[m++] = (yi - y.row(static_cast<Eigen::Index>(j))).norm();
    }
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kth - 1), dist.begin() + static_cast<std::ptrdiff_t>(m));
    result.core_distances[i] = dist[kth - 1];
  }

  auto mst = mutual_reachability_mst(y, result.core_distances);
  auto linkage = single_linkage(std::move(mst), n);
  auto rows = condense(linkage, n, params.min_cluster_size);
  result.condensed_tree = rows;

  // Cluster ids are n .. n + n_nodes - 1; children always exceed parents.
  std::size_t max_cluster = n;
  for (const auto& r : rows) {
    if (r.child >= n) max_cluster = std::max(max_cluster, r.child);
  }
  const std::size_t n_nodes = max_cluster - n + 1;
  std::vector<double> birth(n_nodes, 0.0), stability(n_nodes, 0.0), max_lambda(n_nodes, 0.0);
  std::vector<std::size_t> parent_of(n_nodes, 0);
  std::vector<std::vector<std::size_t>> children(n_nodes);
  for (const auto& r : rows) {
    if (r.child >= n) {
      birth[r.child - n] = r.lambda;
      parent_of[r.child - n] = r.parent;
      children[r.parent - n].push_back(r.child);
    }
  }
  for (const auto& r : rows) {
    auto p = r.parent - n;
    stability[p] += (r.lambda - birth[p]) * static_cast<double>(r.child_size);
    max_lambda[p] = std::max(max_lambda[p], r.lambda);
  }

  // Excess of mass, leaves upward; the root is never selected.
  std::vector<char> selected(n_nodes, 0);
  for (std::size_t idx = n_nodes; idx-- > 1;) {
    double child_sum = 0;
    for (auto c : children[idx]) child_sum += stability[c - n];
    if (!children[idx].empty() && child_sum > stability[idx]) {
      stability[idx] = child_sum;
    } else {
      selected[idx] = 1;
      std::vector<std::size_t> stack(children[idx].begin(), children[idx].end());
      while (!stack.empty()) {
        auto c = stack.back();
        stack.pop_back();
        selected[c - n] = 0;
        for (auto g : children[c - n]) stack.push_back(g);
      }
    }
  }

  std::vector<int> cluster_label(n_nodes, kNoise);
  int k = 0;
  for (std::size_t idx = 1; idx < n_nodes; ++idx) {
    if (selected[idx]) cluster_label[idx] = k++;
  }
  result.assignment.n_clusters = k;

  for (const auto& r : rows) {
    if (r.child >= n) continue;
    std::size_t c = r.parent;
    while (c != n && !selected[c - n]) c = parent_of[c - n];
    if (c == n) continue;
    auto idx = c - n;
    result.assignment.labels[r.child] = cluster_label[idx];
    double ml = max_lambda[idx];
    double lam = std::min(r.lambda, ml);
    result.assignment.probabilities[r.child] = (ml <= 0 || !std::isfinite(ml)) ? 1.0 : lam / ml;
  }
  return result;
}

ClusterAssignment hdbscan_cluster(const VectorSet& y, std::size_t min_cluster_size, std::size_t min_samples) {
  return hdbscan(y.matrix(), HdbscanParams{min_cluster_size, min_samples}).assignment;
}

std::map<int, std::vector<std::size_t>> select_representative_rows(const ClusterAssignment& a,
                                                                    const std::vector<std::string>& ids,
                                                                    std::size_t k) {
  if (k == 0) throw Error("select_representatives: k must be >= 1");
  if (ids.size() != a.size()) throw Error("select_representatives: assignment not aligned with ids");
  std::map<int, std::vector<std::size_t>> out;
  auto members = a.members();
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto rows = members[c];
    std::sort(rows.begin(), rows.end(), [&](std::size_t x, std::size_t y) {
      if (a.probabilities[x] != a.probabilities[y]) return a.probabilities[x] > a.probabilities[y];
      return ids[x] < ids[y];
    });
    if (rows.size() > k) rows.resize(k);
    out[static_cast<int>(c)] = std::move(rows);
  }
  return out;
}

std::map<int, std::vector<Document>> select_representatives(const ClusterAssignment& a, const Corpus& corpus,
                                                            std::size_t k) {
  std::vector<std::string> ids;
  for (const auto& d : corpus.documents) ids.push_back(d.id);
  std::map<int, std::vector<Document>> out;
  for (const auto& [c, rows] : select_representative_rows(a, ids, k)) {
    auto& docs = out[c];
    for (auto r : rows) docs.push_back(corpus.documents[r]);
  }
  return out;
}

namespace {

// Dense relabeling of non-noise labels; returns number of clusters.
std::size_t group_rows(const std::vector<int>& labels, std::vector<std::vector<std::size_t>>& groups) {
  std::map<int, std::size_t> dense;
  for (int l : labels) {
    if (l != kNoise) dense.emplace(l, 0);
  }
  std::size_t k = 0;
  for (auto& [l, idx] : dense) idx = k++;
  groups.assign(k, {});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != kNoise) groups[dense[labels[i]]].push_back(i);
  }
  return k;
}

}  // namespace

double silhouette(const Matrix& y, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(y.rows()) != labels.size()) throw Error("silhouette: labels not aligned");
  std::vector<std::vector<std::size_t>> groups;
  auto k = group_rows(labels, groups);
  if (k < 2) throw Error("silhouette: need at least 2 clusters (have " + std::to_string(k) + ")");

  double total = 0.0;
  std::size_t scored = 0;
  std::vector<double> mean_to(k);
  for (std::size_t g = 0; g < k; ++g) {
    for (auto i : groups[g]) {
      ++scored;
      if (groups[g].size() == 1) continue;  // singleton scores 0
      auto yi = y.row(static_cast<Eigen::Index>(i));
      for (std::size_t h = 0; h < k; ++h) {
        double s = 0;
        for (auto j : groups[h]) s += (yi - y.row(static_cast<Eigen::Index>(j))).norm();
        mean_to[h] = h == g ? s / static_cast<double>(groups[h].size() - 1) : s / static_cast<double>(groups[h].size());
      }
      double a = mean_to[g];
      double b = std::numeric_limits<double>::infinity();
      for (std::size_t h = 0; h < k; ++h) {
        if (h != g) b = std::min(b, mean_to[h]);
      }
      double denom = std::max(a, b);
      total += denom > 0 ? (b - a) / denom : 0.0;
    }
  }
  return total / static_cast<double>(scored);
}

double davies_bouldin(const Matrix& y, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(y.rows()) != labels.size()) throw Error("davies_bouldin: labels not aligned");
  std::vector<std::vector<std::size_t>> groups;
  auto k = group_rows(labels, groups);
  if (k < 2) throw Error("davies_bouldin: need at least 2 clusters (have " + std::to_string(k) + ")");

  std::vector<Eigen::RowVectorXd> centroid(k);
  std::vector<double> scatter(k, 0.0);
  for (std::size_t g = 0; g < k; ++g) {
    centroid[g] = Eigen::RowVectorXd::Zero(y.cols());
    for (auto i : groups[g]) centroid[g] += y.row(static_cast<Eigen::Index>(i));
    centroid[g] /= static_cast<double>(groups[g].size());
    for (auto i : groups[g]) scatter[g] += (y.row(static_cast<Eigen::Index>(i)) - centroid[g]).norm();
    scatter[g] /= static_cast<double>(groups[g].size());
  }
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      double m = (centroid[i] - centroid[j]).norm();
      if (m == 0.0) {
        throw Error("davies_bouldin: clusters " + std::to_string(i) + " and " + std::to_string(j) +
                    " have coincident centroids");
      }
      worst = std::max(worst, (scatter[i] + scatter[j]) / m);
    }
    total += worst;
  }
  return total / static_cast<double>(k);
}

ValidityReport validity(const Matrix& y, const std::vector<int>& labels) {
  ValidityReport r;
  r.silhouette = silhouette(y, labels);
  r.davies_bouldin = davies_bouldin(y, labels);
  r.n_points_scored = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](int l) { return l != kNoise; }));
  return r;
}

std::string assignment_to_csv(const ClusterAssignment& a, const std::vector<std::string>& ids) {
  if (ids.size() != a.size()) throw Error("assignment_to_csv: ids not aligned");
  std::string out = "id,label,probability\n";
  for (std::size_t i = 0; i < a.size(); ++i) {
    out += util::csv_row({ids[i], std::to_string(a.labels[i]), util::format_double(a.probabilities[i])});
  }
  return out;
}

ClusterAssignment assignment_from_csv(std::string_view text, const std::vector<std::string>& ids) {
  auto t = util::parse_csv(text);
  int ci = t.column("id"), cl = t.column("label"), cp = t.column("probability");
  if (ci < 0 || cl < 0 || cp < 0) throw Error("cluster assignment CSV: missing columns");
  std::unordered_map<std::string, std::pair<int, double>> by_id;
  for (const auto& row : t.rows) by_id[row[ci]] = {std::stoi(row[cl]), std::stod(row[cp])};
  ClusterAssignment a;
  int max_label = -1;
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error("cluster assignment CSV: missing id " + id);
    a.labels.push_back(it->second.first);
    a.probabilities.push_back(it->second.second);
    max_label = std::max(max_label, it->second.first);
  }
  a.n_clusters = max_label + 1;
  return a;
}

std::string validity_to_json(const ValidityReport& r) {
  nlohmann::json j;
  j["silhouette"] = r.silhouette;
  j["davies_bouldin"] = r.davies_bouldin;
  j["n_points_scored"] = r.n_points_scored;
  j["space"] = "euclidean, reduced document vectors, noise excluded";
  return j.dump(2) + "\n";
}

}  // namespace clustering
}  // namespace themescope
