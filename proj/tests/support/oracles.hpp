#pragma once

// Independent reference implementations used only by tests. They follow the
// textbook formulas directly (plain loops over std::vector) and share no code
// with the library paths they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "themescope/embedding.hpp"
#include "themescope/util.hpp"

namespace oracle {

using Points = std::vector<std::vector<double>>;

inline double dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline Points to_points(const themescope::Matrix& m) {
  Points p(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) p[i][j] = m(i, j);
  return p;
}

inline themescope::Matrix to_matrix(const Points& p) {
  themescope::Matrix m(static_cast<Eigen::Index>(p.size()), static_cast<Eigen::Index>(p.empty() ? 0 : p[0].size()));
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < p[i].size(); ++j) m(i, j) = p[i][j];
  return m;
}

// Silhouette: mean over labeled points of (b - a) / max(a, b).
inline double silhouette(const Points& x, const std::vector<int>& labels) {
  std::set<int> clusters;
  for (int l : labels)
    if (l >= 0) clusters.insert(l);
  double total = 0;
  int count = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (labels[i] < 0) continue;
    ++count;
    double a_sum = 0;
    int a_n = 0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (j != i && labels[j] == labels[i]) {
        a_sum += dist(x[i], x[j]);
        ++a_n;
      }
    }
    if (a_n == 0) continue;
    double a = a_sum / a_n;
    double b = std::numeric_limits<double>::infinity();
    for (int c : clusters) {
      if (c == labels[i]) continue;
      double s = 0;
      int n = 0;
      for (std::size_t j = 0; j < x.size(); ++j) {
        if (labels[j] == c) {
          s += dist(x[i], x[j]);
          ++n;
        }
      }
      b = std::min(b, s / n);
    }
    double m = std::max(a, b);
    total += m > 0 ? (b - a) / m : 0.0;
  }
  return total / count;
}

inline double davies_bouldin(const Points& x, const std::vector<int>& labels) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (labels[i] >= 0) groups[labels[i]].push_back(i);
  std::vector<std::vector<double>> cent;
  std::vector<double> scat;
  for (auto& [c, rows] : groups) {
    std::vector<double> m(x[0].size(), 0.0);
    for (auto r : rows)
      for (std::size_t d = 0; d < m.size(); ++d) m[d] += x[r][d] / rows.size();
    double s = 0;
    for (auto r : rows) s += dist(x[r], m);
    cent.push_back(m);
    scat.push_back(s / rows.size());
  }
  double total = 0;
  for (std::size_t i = 0; i < cent.size(); ++i) {
    double worst = 0;
    for (std::size_t j = 0; j < cent.size(); ++j)
      if (i != j) worst = std::max(worst, (scat[i] + scat[j]) / dist(cent[i], cent[j]));
    total += worst;
  }
  return total / cent.size();
}

// Phi via the 2x2 contingency closed form.
inline double phi(const std::vector<int>& x, const std::vector<int>& y) {
  double a = 0, b = 0, c = 0, d = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] && y[i]) ++a;
    else if (x[i] && !y[i]) ++b;
    else if (!x[i] && y[i]) ++c;
    else ++d;
  }
  return (a * d - b * c) / std::sqrt((a + b) * (c + d) * (a + c) * (b + d));
}

// Macro-F1 from a confusion matrix (rows = truth, cols = prediction).
inline double macro_f1(const std::vector<std::vector<long>>& cm) {
  const std::size_t k = cm.size();
  double total = 0;
  for (std::size_t c = 0; c < k; ++c) {
    long tp = cm[c][c], fp = 0, fn = 0;
    for (std::size_t o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += cm[o][c];
      fn += cm[c][o];
    }
    total += (2 * tp + fp + fn) == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
  }
  return total / k;
}

// Trustworthiness by the direct rank formula.
inline double trustworthiness(const Points& high, const Points& low, std::size_t k) {
  const std::size_t n = high.size();
  double penalty = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::size_t>> hd, ld;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      hd.push_back({dist(high[i], high[j]), j});
      ld.push_back({dist(low[i], low[j]), j});
    }
    std::sort(hd.begin(), hd.end());
    std::sort(ld.begin(), ld.end());
    std::vector<std::size_t> rank(n, 0);
    for (std::size_t r = 0; r < hd.size(); ++r) rank[hd[r].second] = r + 1;
    std::set<std::size_t> high_nn;
    for (std::size_t r = 0; r < k; ++r) high_nn.insert(hd[r].second);
    for (std::size_t r = 0; r < k; ++r) {
      auto j = ld[r].second;
      if (!high_nn.count(j)) penalty += static_cast<double>(rank[j]) - static_cast<double>(k);
    }
  }
  double nn = static_cast<double>(n), kk = static_cast<double>(k);
  return 1.0 - 2.0 / (nn * kk * (2.0 * nn - 3.0 * kk - 1.0)) * penalty;
}

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns eigenpairs
// sorted by eigenvalue descending; eigenvectors are columns of `vecs`.
inline void jacobi_eigen(std::vector<std::vector<double>> a, std::vector<double>& vals,
                         std::vector<std::vector<double>>& vecs) {
  const std::size_t n = a.size();
  vecs.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) vecs[i][i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        double theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double vkp = vecs[k][p], vkq = vecs[k][q];
          vecs[k][p] = c * vkp - s * vkq;
          vecs[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return a[x][x] > a[y][y]; });
  vals.clear();
  auto v2 = vecs;
  for (std::size_t c = 0; c < n; ++c) {
    vals.push_back(a[order[c]][order[c]]);
    for (std::size_t r = 0; r < n; ++r) v2[r][c] = vecs[r][order[c]];
  }
  vecs = v2;
}

// Union-find components over a thresholded similarity matrix.
inline std::vector<int> components(const std::vector<std::vector<double>>& sim, double tau) {
  const std::size_t n = sim.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (sim[i][j] >= tau - 1e-12) parent[find(i)] = find(j);
  std::map<std::size_t, int> ids;
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = find(i);
    if (!ids.count(r)) ids[r] = static_cast<int>(ids.size());
    out[i] = ids[r];
  }
  // Canonical numbering by first occurrence.
  return out;
}

// Gaussian blobs; labels are the generating blob index.
struct Blobs {
  Points points;
  std::vector<int> labels;
};

inline Blobs gaussian_blobs(std::size_t per_blob, std::size_t dims, double sigma, double spacing,
                            std::size_t n_blobs, std::uint64_t seed) {
  themescope::util::Rng rng(seed);
  Blobs b;
  for (std::size_t c = 0; c < n_blobs; ++c) {
    std::vector<double> center(dims, 0.0);
    center[c % dims] = spacing * static_cast<double>(c + 1);
    for (std::size_t i = 0; i < per_blob; ++i) {
      std::vector<double> p(dims);
      for (std::size_t d = 0; d < dims; ++d) p[d] = center[d] + sigma * rng.normal();
      b.points.push_back(p);
      b.labels.push_back(static_cast<int>(c));
    }
  }
  return b;
}

// Best agreement between predicted and true labels under a greedy majority
// mapping (noise counts as disagreement).
inline double agreement(const std::vector<int>& truth, const std::vector<int>& pred) {
  std::map<int, std::map<int, int>> table;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (pred[i] >= 0) table[pred[i]][truth[i]]++;
  int hits = 0;
  for (auto& [p, row] : table) {
    int best = 0;
    for (auto& [t, n] : row) best = std::max(best, n);
    hits += best;
  }
  return static_cast<double>(hits) / truth.size();
}

}  // namespace oracle
