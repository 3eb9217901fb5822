#include "themescope/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "binio.hpp"

namespace themescope {

using namespace detail::binio;

Matrix PcaModel::transform(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != input_dim()) throw Error("PCA transform: dimension mismatch");
  Matrix centered = x.rowwise() - mean.transpose();
  return centered * basis;
}

std::string UmapConfig::fingerprint() const {
  return "umap(dim=" + std::to_string(target_dim) + ",k=" + std::to_string(n_neighbors) +
         ",min_dist=" + util::format_double(min_dist) + ",spread=" + util::format_double(spread) +
         ",epochs=" + std::to_string(n_epochs) + ",seed=" + std::to_string(seed) +
         ",neg=" + std::to_string(negative_sample_rate) + ",init=random)";
}

namespace projection {

namespace {

void check_finite(const Matrix& m, const char* who) {
  if (!m.allFinite()) throw Error(std::string(who) + ": input contains non-finite values");
}

}  // namespace

std::pair<PcaModel, VectorSet> pca_fit_transform(const VectorSet& x, std::size_t n_components) {
  const auto n = x.size();
  const auto d = x.dim();
  if (n < 2) throw Error("pca_fit_transform: need at least 2 points");
  if (n_components == 0 || n_components > std::min(n - 1, d)) {
    throw Error("pca_fit_transform: n_components=" + std::to_string(n_components) + " exceeds min(n-1, d)=" +
                std::to_string(std::min(n - 1, d)));
  }
  check_finite(x.matrix(), "pca_fit_transform");

  PcaModel model;
  model.mean = x.matrix().colwise().mean().transpose();
  Eigen::MatrixXd centered = x.matrix().rowwise() - model.mean.transpose();
  const auto c = static_cast<Eigen::Index>(n_components);
  const double denom = static_cast<double>(n - 1);

  if (d <= 1024) {
    Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw Error("pca_fit_transform: eigendecomposition failed");
    // Eigen returns ascending eigenvalues.
    const auto dd = static_cast<Eigen::Index>(d);
    model.basis.resize(dd, c);
    model.explained_variance.resize(c);
    for (Eigen::Index k = 0; k < c; ++k) {
      model.basis.col(k) = eig.eigenvectors().col(dd - 1 - k);
      model.explained_variance(k) = std::max(0.0, eig.eigenvalues()(dd - 1 - k));
    }
  } else {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    model.basis = svd.matrixV().leftCols(c);
    model.explained_variance = svd.singularValues().head(c).array().square() / denom;
  }

  for (Eigen::Index k = 0; k < c; ++k) {
    Eigen::Index arg = 0;
    model.basis.col(k).cwiseAbs().maxCoeff(&arg);
    if (model.basis(arg, k) < 0) model.basis.col(k) *= -1.0;
  }

  Matrix y = centered * model.basis;
  return {std::move(model), VectorSet(x.ids(), std::move(y), x.provider_fingerprint())};
}

std::pair<double, double> fit_ab(double spread, double min_dist) {
  constexpr int kSamples = 300;
  std::vector<double> xs(kSamples), ys(kSamples);
  for (int i = 0; i < kSamples; ++i) {
    xs[i] = 3.0 * spread * i / (kSamples - 1);
    ys[i] = xs[i] < min_dist ? 1.0 : std::exp(-(xs[i] - min_dist) / spread);
  }
  auto residual_sq = [&](double a, double b) {
    double s = 0;
    for (int i = 0; i < kSamples; ++i) {
      double r = 1.0 / (1.0 + a * std::pow(xs[i], 2 * b)) - ys[i];
      s += r * r;
    }
    return s;
  };

  // Levenberg-Marquardt on the two parameters.
  double a = 1.0, b = 1.0, lambda = 1e-3;
  double cost = residual_sq(a, b);
  for (int iter = 0; iter < 500; ++iter) {
    Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
    Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
    for (int i = 0; i < kSamples; ++i) {
      double x = xs[i];
      double p = x > 0 ? std::pow(x, 2 * b) : 0.0;
      double den = 1.0 + a * p;
      double f = 1.0 / den;
      double r = f - ys[i];
      Eigen::Vector2d g(-p / (den * den), x > 0 ? -a * p * 2.0 * std::log(x) / (den * den) : 0.0);
      jtj += g * g.transpose();
      jtr += g * r;
    }
    bool improved = false;
    for (int tries = 0; tries < 20 && !improved; ++tries) {
      Eigen::Matrix2d damped = jtj;
      damped.diagonal() *= (1.0 + lambda);
      Eigen::Vector2d step = damped.ldlt().solve(-jtr);
      double na = a + step(0), nb = b + step(1);
      if (na > 0 && nb > 0) {
        double nc = residual_sq(na, nb);
        if (nc < cost) {
          improved = true;
          double rel = (cost - nc) / std::max(cost, 1e-300);
          a = na;
          b = nb;
          cost = nc;
          lambda = std::max(lambda / 10.0, 1e-12);
          if (rel < 1e-14) return {a, b};
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!improved) break;
  }
  return {a, b};
}

KnnGraph exact_knn(const Matrix& x, std::size_t k) {
  const auto n = static_cast<std::size_t>(x.rows());
  k = std::min(k, n);
  KnnGraph g;
  g.indices.resize(n);
  g.distances.resize(n);
  std::vector<std::pair<double, std::size_t>> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto xi = x.row(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < n; ++j) {
      double d2 = (xi - x.row(static_cast<Eigen::Index>(j))).squaredNorm();
      row[j] = {j == i ? -1.0 : d2, j};
    }
    std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end());
    g.indices[i].resize(k);
    g.distances[i].resize(k);
    for (std::size_t t = 0; t < k; ++t) {
      g.indices[i][t] = row[t].second;
      g.distances[i][t] = row[t].first <= 0 ? 0.0 : std::sqrt(row[t].first);
    }
  }
  return g;
}

Bandwidths smooth_knn_dist(const KnnGraph& knn, double local_connectivity) {
  constexpr int kIterations = 64;
  constexpr double kTolerance = 1e-5;
  constexpr double kMinScale = 1e-3;
  const auto n = knn.indices.size();
  Bandwidths bw;
  bw.rho.assign(n, 0.0);
  bw.sigma.assign(n, 1.0);
  if (n == 0) return bw;
  const auto k = knn.distances.front().size();
  const double target = std::log2(static_cast<double>(k));

  double global_mean = 0;
  std::size_t count = 0;
  for (const auto& row : knn.distances) {
    for (double v : row) {
      global_mean += v;
      ++count;
    }
  }
  global_mean /= std::max<std::size_t>(count, 1);

  for (std::size_t i = 0; i < n; ++i) {
    const auto& dist = knn.distances[i];
    std::vector<double> nonzero;
    for (double v : dist) {
      if (v > 0) nonzero.push_back(v);
    }
    if (!nonzero.empty()) {
      auto idx = static_cast<std::size_t>(std::floor(local_connectivity));
      double interp = local_connectivity - static_cast<double>(idx);
      if (idx > 0) {
        bw.rho[i] = nonzero[std::min(idx, nonzero.size()) - 1];
        if (interp > 1e-5 && idx < nonzero.size()) bw.rho[i] += interp * (nonzero[idx] - nonzero[idx - 1]);
      } else {
        bw.rho[i] = interp * nonzero[0];
      }
    }

    double lo = 0.0, hi = std::numeric_limits<double>::infinity(), mid = 1.0;
    for (int it = 0; it < kIterations; ++it) {
      double psum = 0.0;
      for (std::size_t j = 1; j < dist.size(); ++j) {
        double dd = dist[j] - bw.rho[i];
        psum += dd > 0 ? std::exp(-dd / mid) : 1.0;
      }
      if (std::abs(psum - target) < kTolerance) break;
      if (psum > target) {
        hi = mid;
        mid = (lo + hi) / 2.0;
      } else {
        lo = mid;
        mid = std::isinf(hi) ? mid * 2.0 : (lo + hi) / 2.0;
      }
    }
    double mean_i = std::accumulate(dist.begin(), dist.end(), 0.0) / static_cast<double>(dist.size());
    if (bw.rho[i] > 0.0) mid = std::max(mid, kMinScale * mean_i);
    else mid = std::max(mid, kMinScale * global_mean);
    bw.sigma[i] = mid;
  }
  return bw;
}

std::vector<FuzzyEdge> fuzzy_simplicial_set(const KnnGraph& knn, const Bandwidths& bw) {
  const auto n = knn.indices.size();
  // Directed memberships, keyed by (i, j).
  std::vector<std::vector<std::pair<std::size_t, double>>> directed(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < knn.indices[i].size(); ++t) {
      std::size_t j = knn.indices[i][t];
      if (j == i) continue;
      double dd = knn.distances[i][t] - bw.rho[i];
      double w = dd <= 0 || bw.sigma[i] == 0 ? 1.0 : std::exp(-dd / bw.sigma[i]);
      directed[i].emplace_back(j, w);
    }
    std::sort(directed[i].begin(), directed[i].end());
  }
  auto lookup = [&](std::size_t i, std::size_t j) {
    auto& row = directed[i];
    auto it = std::lower_bound(row.begin(), row.end(), std::make_pair(j, -1.0));
    return it != row.end() && it->first == j ? it->second : 0.0;
  };
  std::vector<FuzzyEdge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (auto [j, w] : directed[i]) {
      double wt = lookup(j, i);
      double u = w + wt - w * wt;
      edges.push_back({i, j, u});
      if (wt == 0.0) edges.push_back({j, i, u});
    }
  }
  std::sort(edges.begin(), edges.end(), [](const FuzzyEdge& a, const FuzzyEdge& b) {
    return a.head != b.head ? a.head < b.head : a.tail < b.tail;
  });
  return edges;
}

namespace {

double clip(double v) { return std::clamp(v, -4.0, 4.0); }

}  // namespace

VectorSet umap_fit_transform(const VectorSet& x, const UmapConfig& cfg) {
  const auto n = x.size();
  const auto dim = cfg.target_dim;
  if (cfg.n_neighbors < 2) throw Error("umap: n_neighbors must be >= 2");
  if (dim == 0 || dim >= x.dim()) throw Error("umap: target_dim must be in [1, input dim)");
  if (n <= dim + 1) {
    throw Error("umap: need more than target_dim + 1 points (have " + std::to_string(n) + ")");
  }
  if (cfg.n_epochs == 0) throw Error("umap: n_epochs must be positive");
  check_finite(x.matrix(), "umap");

  auto knn = exact_knn(x.matrix(), std::min(cfg.n_neighbors, n));
  auto bw = smooth_knn_dist(knn);
  auto edges = fuzzy_simplicial_set(knn, bw);

  double max_w = 0.0;
  for (const auto& e : edges) max_w = std::max(max_w, e.weight);
  const double n_epochs = static_cast<double>(cfg.n_epochs);
  std::erase_if(edges, [&](const FuzzyEdge& e) { return e.weight < max_w / n_epochs; });

  auto [a, b] = fit_ab(cfg.spread, cfg.min_dist);

  util::Rng rng(cfg.seed);
  Matrix y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    for (Eigen::Index j = 0; j < y.cols(); ++j) y(i, j) = rng.uniform(-10.0, 10.0);
  }

  const auto m = edges.size();
  std::vector<double> eps(m), next_sample(m), eps_neg(m), next_neg(m);
  for (std::size_t e = 0; e < m; ++e) {
    eps[e] = max_w / edges[e].weight;
    next_sample[e] = eps[e];
    eps_neg[e] = eps[e] / static_cast<double>(cfg.negative_sample_rate);
    next_neg[e] = eps_neg[e];
  }

  const auto d = static_cast<Eigen::Index>(dim);
  std::vector<double> diff(dim);
  for (std::size_t epoch = 0; epoch < cfg.n_epochs; ++epoch) {
    const double alpha = cfg.learning_rate * (1.0 - static_cast<double>(epoch) / n_epochs);
    const double now = static_cast<double>(epoch);
    for (std::size_t e = 0; e < m; ++e) {
      if (next_sample[e] > now) continue;
      const auto j = static_cast<Eigen::Index>(edges[e].head);
      const auto k = static_cast<Eigen::Index>(edges[e].tail);

      double d2 = 0;
      for (Eigen::Index c = 0; c < d; ++c) {
        diff[c] = y(j, c) - y(k, c);
        d2 += diff[c] * diff[c];
      }
      double coeff = 0.0;
      if (d2 > 0) {
        double pw = std::pow(d2, b);
        coeff = (-2.0 * a * b * std::pow(d2, b - 1.0)) / (a * pw + 1.0);
      }
      for (Eigen::Index c = 0; c < d; ++c) {
        double g = clip(coeff * diff[c]) * alpha;
        y(j, c) += g;
        y(k, c) -= g;
      }
      next_sample[e] += eps[e];

      auto n_neg = static_cast<std::size_t>((now - next_neg[e]) / eps_neg[e]);
      for (std::size_t p = 0; p < n_neg; ++p) {
        auto q = static_cast<Eigen::Index>(rng.below(n));
        if (q == j) continue;
        double nd2 = 0;
        for (Eigen::Index c = 0; c < d; ++c) {
          diff[c] = y(j, c) - y(q, c);
          nd2 += diff[c] * diff[c];
        }
        double rc = 0.0;
        if (nd2 > 0) rc = 2.0 * cfg.repulsion_strength * b / ((0.001 + nd2) * (a * std::pow(nd2, b) + 1.0));
        for (Eigen::Index c = 0; c < d; ++c) {
          double g = rc > 0 ? clip(rc * diff[c]) : 4.0;
          y(j, c) += g * alpha;
        }
      }
      next_neg[e] += static_cast<double>(n_neg) * eps_neg[e];
    }
  }
  return VectorSet(x.ids(), std::move(y), x.provider_fingerprint());
}

// ---- serialization ---------------------------------------------------------

namespace {

constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kKindPca = 1;
constexpr std::uint32_t kKindUmap = 2;

void put_u64(std::string& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint64_t get_u64(const std::string& in, std::size_t& pos) {
  std::uint64_t lo = get_u32(in, pos);
  std::uint64_t hi = get_u32(in, pos);
  return lo | (hi << 32);
}

void header(std::string& out, std::uint32_t kind, std::size_t in_dim, std::size_t out_dim, std::uint64_t seed) {
  out = "TSPJ";
  put_u32(out, kVersion);
  put_u32(out, kind);
  put_u32(out, static_cast<std::uint32_t>(in_dim));
  put_u32(out, static_cast<std::uint32_t>(out_dim));
  put_u64(out, seed);
}

struct Header {
  std::uint32_t kind, in_dim, out_dim;
  std::uint64_t seed;
};

Header read_header(const std::string& data, std::size_t& pos, const std::filesystem::path& path) {
  if (data.size() < 4 || data.compare(0, 4, "TSPJ") != 0) throw Error("not a projection file: " + path.string());
  pos = 4;
  auto version = get_u32(data, pos);
  if (version != kVersion) throw Error("unsupported projection file version " + std::to_string(version));
  Header h{};
  h.kind = get_u32(data, pos);
  h.in_dim = get_u32(data, pos);
  h.out_dim = get_u32(data, pos);
  h.seed = get_u64(data, pos);
  return h;
}

}  // namespace

void save_pca(const PcaModel& model, const std::filesystem::path& path) {
  std::string out;
  header(out, kKindPca, model.input_dim(), model.components(), 0);
  for (Eigen::Index i = 0; i < model.mean.size(); ++i) put_f64(out, model.mean(i));
  for (Eigen::Index i = 0; i < model.basis.rows(); ++i) {
    for (Eigen::Index j = 0; j < model.basis.cols(); ++j) put_f64(out, model.basis(i, j));
  }
  for (Eigen::Index i = 0; i < model.explained_variance.size(); ++i) put_f64(out, model.explained_variance(i));
  util::write_file_atomic(path, out);
}

PcaModel load_pca(const std::filesystem::path& path) {
  auto data = util::read_file(path);
  std::size_t pos = 0;
  auto h = read_header(data, pos, path);
  if (h.kind != kKindPca) throw Error("projection file is not a PCA model: " + path.string());
  PcaModel m;
  m.mean.resize(h.in_dim);
  for (std::uint32_t i = 0; i < h.in_dim; ++i) m.mean(i) = get_f64(data, pos);
  m.basis.resize(h.in_dim, h.out_dim);
  for (std::uint32_t i = 0; i < h.in_dim; ++i) {
    for (std::uint32_t j = 0; j < h.out_dim; ++j) m.basis(i, j) = get_f64(data, pos);
  }
  m.explained_variance.resize(h.out_dim);
  for (std::uint32_t j = 0; j < h.out_dim; ++j) m.explained_variance(j) = get_f64(data, pos);
  return m;
}

void save_umap_embedding(const VectorSet& y, const UmapConfig& cfg, std::size_t input_dim,
                         const std::filesystem::path& path) {
  std::string out;
  header(out, kKindUmap, input_dim, y.dim(), cfg.seed);
  put_u32(out, static_cast<std::uint32_t>(cfg.n_neighbors));
  put_f64(out, cfg.min_dist);
  put_f64(out, cfg.spread);
  put_u32(out, static_cast<std::uint32_t>(cfg.n_epochs));
  put_u32(out, static_cast<std::uint32_t>(y.size()));
  put_str(out, y.provider_fingerprint());
  for (std::size_t i = 0; i < y.size(); ++i) {
    put_str(out, y.ids()[i]);
    for (std::size_t j = 0; j < y.dim(); ++j) {
      put_f64(out, y.matrix()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
  }
  util::write_file_atomic(path, out);
}

VectorSet load_umap_embedding(const std::filesystem::path& path, UmapConfig* cfg) {
  auto data = util::read_file(path);
  std::size_t pos = 0;
  auto h = read_header(data, pos, path);
  if (h.kind != kKindUmap) throw Error("projection file is not a UMAP embedding: " + path.string());
  UmapConfig c;
  c.target_dim = h.out_dim;
  c.seed = h.seed;
  c.n_neighbors = get_u32(data, pos);
  c.min_dist = get_f64(data, pos);
  c.spread = get_f64(data, pos);
  c.n_epochs = get_u32(data, pos);
  auto n = get_u32(data, pos);
  auto fp = get_str(data, pos);
  Matrix y(n, h.out_dim);
  std::vector<std::string> ids;
  for (std::uint32_t i = 0; i < n; ++i) {
    ids.push_back(get_str(data, pos));
    for (std::uint32_t j = 0; j < h.out_dim; ++j) y(i, j) = get_f64(data, pos);
  }
  if (cfg) *cfg = c;
  return VectorSet(std::move(ids), std::move(y), std::move(fp));
}

}  // namespace projection
}  // namespace themescope
