#include "themescope/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "binio.hpp"
#include "http.hpp"

namespace themescope {

using namespace detail::binio;

VectorSet::VectorSet(std::vector<std::string> ids, Matrix matrix, std::string provider_fingerprint)
    : ids_(std::move(ids)), matrix_(std::move(matrix)), fingerprint_(std::move(provider_fingerprint)) {
  if (static_cast<Eigen::Index>(ids_.size()) != matrix_.rows()) {
    throw Error("VectorSet: " + std::to_string(ids_.size()) + " ids for " + std::to_string(matrix_.rows()) + " rows");
  }
  if (matrix_.cols() < 2) throw Error("VectorSet: dimension must be >= 2");
}

VectorSet VectorSet::select(std::span<const std::size_t> rows) const {
  Matrix m(static_cast<Eigen::Index>(rows.size()), matrix_.cols());
  std::vector<std::string> ids;
  ids.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = matrix_.row(static_cast<Eigen::Index>(rows[i]));
    ids.push_back(ids_.at(rows[i]));
  }
  return VectorSet(std::move(ids), std::move(m), fingerprint_);
}

// ---- hashing provider ------------------------------------------------------

namespace {

std::vector<std::string> hash_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : util::casefold(text)) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(ch);
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

}  // namespace

HashingProvider::HashingProvider(std::size_t dim, std::uint64_t seed, std::string name)
    : dim_(dim), seed_(seed), name_(std::move(name)) {
  if (dim_ < 2) throw Error("HashingProvider: dim must be >= 2");
}

std::vector<double> HashingProvider::embed_one(const std::string& text) const {
  std::vector<double> acc(dim_, 0.0);
  auto tokens = hash_tokens(text);
  if (tokens.empty()) tokens.push_back(text);
  for (const auto& tok : tokens) {
    util::Rng rng(util::fnv1a64(tok) ^ seed_);
    for (auto& a : acc) a += rng.normal();
  }
  double norm = 0;
  for (double a : acc) norm += a * a;
  norm = std::sqrt(norm);
  if (norm > 0) {
    for (auto& a : acc) a /= norm;
  }
  return acc;
}

std::vector<std::vector<double>> HashingProvider::embed(std::span<const std::string> texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

// ---- remote provider -------------------------------------------------------

RemoteProvider::RemoteProvider(RemoteProviderOptions opts)
    : opts_(std::move(opts)), in_flight_(std::clamp(opts_.max_in_flight, 1, 64)) {
  if (opts_.endpoint.empty()) throw Error("RemoteProvider: endpoint not configured (EMBED_ENDPOINT)");
  if (opts_.dim < 2) throw Error("RemoteProvider: dim must be >= 2");
}

RemoteProviderOptions RemoteProvider::options_from_env(RemoteProviderOptions base) {
  if (const char* e = std::getenv("EMBED_ENDPOINT")) base.endpoint = e;
  if (const char* k = std::getenv("EMBED_API_KEY")) base.api_key = k;
  return base;
}

std::vector<std::vector<double>> RemoteProvider::embed(std::span<const std::string> texts) {
  nlohmann::json req;
  req["texts"] = std::vector<std::string>(texts.begin(), texts.end());
  const std::string body = req.dump();

  std::string last_error;
  for (int attempt = 0; attempt < opts_.max_attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(opts_.backoff_base_ms << (attempt - 1)));
    }
    detail::HttpResponse res;
    {
      in_flight_.acquire();
      try {
        res = detail::post_json(opts_.endpoint, opts_.api_key, body, opts_.timeout_seconds);
      } catch (...) {
        in_flight_.release();
        throw;
      }
      in_flight_.release();
    }
    if (res.status == 0) {
      last_error = "transport failure: " + res.error;
      continue;
    }
    if (res.status >= 500 || res.status == 429) {
      last_error = "HTTP " + std::to_string(res.status);
      continue;
    }
    if (res.status != 200) throw Error("embedding endpoint returned HTTP " + std::to_string(res.status));

    auto parsed = nlohmann::json::parse(res.body, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("vectors") || !parsed["vectors"].is_array()) {
      throw Error("embedding endpoint returned malformed JSON");
    }
    std::vector<std::vector<double>> out;
    for (const auto& row : parsed["vectors"]) out.push_back(row.get<std::vector<double>>());
    return out;
  }
  throw Error("embedding request failed after " + std::to_string(opts_.max_attempts) + " attempts: " + last_error);
}

// ---- cache -----------------------------------------------------------------

EmbeddingCache::EmbeddingCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path EmbeddingCache::file_for(const std::string& fingerprint) const {
  return dir_ / (util::sha256_hex(fingerprint).substr(0, 16) + ".vcache");
}


void EmbeddingCache::load(const std::string& fingerprint) const {
  if (loaded_[fingerprint]) return;
  loaded_[fingerprint] = true;
  auto path = file_for(fingerprint);
  if (!std::filesystem::exists(path)) return;
  auto data = util::read_file(path);
  auto& table = entries_[fingerprint];
  std::size_t pos = 0;
  while (pos < data.size()) {
    auto key = get_str(data, pos);
    auto dim = get_u32(data, pos);
    std::vector<float> v(dim);
    for (auto& x : v) x = get_f32(data, pos);
    table[key] = std::move(v);
  }
}

std::optional<std::vector<double>> EmbeddingCache::get(const std::string& fingerprint, const std::string& text) const {
  auto key = util::sha256_hex(text);
  {
    std::shared_lock lock(mu_);
    auto lit = loaded_.find(fingerprint);
    if (lit != loaded_.end() && lit->second) {
      auto fit = entries_.find(fingerprint);
      if (fit == entries_.end()) return std::nullopt;
      auto it = fit->second.find(key);
      if (it == fit->second.end()) return std::nullopt;
      return std::vector<double>(it->second.begin(), it->second.end());
    }
  }
  std::unique_lock lock(mu_);
  load(fingerprint);
  auto& table = entries_[fingerprint];
  auto it = table.find(key);
  if (it == table.end()) return std::nullopt;
  return std::vector<double>(it->second.begin(), it->second.end());
}

void EmbeddingCache::put(const std::string& fingerprint, const std::string& text, const std::vector<double>& v) {
  std::unique_lock lock(mu_);
  load(fingerprint);
  entries_[fingerprint][util::sha256_hex(text)] = std::vector<float>(v.begin(), v.end());
  dirty_[fingerprint] = true;
}

void EmbeddingCache::flush() {
  std::unique_lock lock(mu_);
  for (auto& [fp, dirty] : dirty_) {
    if (!dirty) continue;
    // Sorted keys keep the file byte-stable.
    const auto& table = entries_[fp];
    std::vector<const std::string*> keys;
    for (const auto& [k, _] : table) keys.push_back(&k);
    std::sort(keys.begin(), keys.end(), [](auto* a, auto* b) { return *a < *b; });
    std::string out;
    for (auto* k : keys) {
      const auto& v = table.at(*k);
      put_str(out, *k);
      put_u32(out, static_cast<std::uint32_t>(v.size()));
      for (float f : v) put_f32(out, f);
    }
    util::write_file_atomic(file_for(fp), out);
    dirty = false;
  }
}

namespace embedding {

VectorSet embed_batch(EmbeddingProvider& provider, std::span<const std::string> texts, std::vector<std::string> ids,
                      EmbeddingCache* cache) {
  const std::size_t n = texts.size();
  const std::size_t d = provider.dim();
  if (ids.empty()) {
    ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) ids.push_back(std::to_string(i));
  }
  if (ids.size() != n) throw Error("embed_batch: ids and texts differ in length");
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const auto fp = provider.fingerprint();
  const std::size_t batch = std::max<std::size_t>(1, provider.max_batch());

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < n; ++i) {
    if (cache) {
      if (auto hit = cache->get(fp, texts[i]); hit && hit->size() == d) {
        for (std::size_t j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (*hit)[j];
        continue;
      }
    }
    pending.push_back(i);
  }

  for (std::size_t start = 0, b = 0; start < pending.size(); start += batch, ++b) {
    std::size_t end = std::min(pending.size(), start + batch);
    std::vector<std::string> chunk;
    for (std::size_t k = start; k < end; ++k) chunk.push_back(texts[pending[k]]);
    std::vector<std::vector<double>> rows;
    try {
      rows = provider.embed(chunk);
    } catch (const DimensionMismatch&) {
      throw;
    } catch (const std::exception& e) {
      throw EmbeddingBatchError("embedding batch " + std::to_string(b) + " failed: " + e.what(), b);
    }
    if (rows.size() != chunk.size()) {
      throw EmbeddingBatchError("embedding batch " + std::to_string(b) + ": expected " + std::to_string(chunk.size()) +
                                    " vectors, got " + std::to_string(rows.size()),
                                b);
    }
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (rows[k].size() != d) {
        throw DimensionMismatch("embedding batch " + std::to_string(b) + ": provider returned dimension " +
                                std::to_string(rows[k].size()) + ", expected " + std::to_string(d));
      }
      auto r = static_cast<Eigen::Index>(pending[start + k]);
      for (std::size_t j = 0; j < d; ++j) m(r, static_cast<Eigen::Index>(j)) = rows[k][j];
      if (cache) cache->put(fp, chunk[k], rows[k]);
    }
  }
  if (cache) cache->flush();
  return VectorSet(std::move(ids), std::move(m), fp);
}

VectorSet l2_normalize(const VectorSet& v) {
  Matrix m = v.matrix();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double norm = m.row(i).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw Error("l2_normalize: zero or non-finite row for id " + v.ids()[static_cast<std::size_t>(i)]);
    }
    m.row(i) /= norm;
  }
  return VectorSet(v.ids(), std::move(m), v.provider_fingerprint());
}

double cosine_similarity(const Eigen::Ref<const Eigen::RowVectorXd>& u, const Eigen::Ref<const Eigen::RowVectorXd>& v) {
  if (u.size() != v.size()) throw Error("cosine_similarity: dimension mismatch");
  double nu = u.norm(), nv = v.norm();
  if (!(nu > 0.0) || !(nv > 0.0)) throw Error("cosine_similarity: zero-norm vector");
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  Eigen::Map<const Eigen::RowVectorXd> mu(u.data(), static_cast<Eigen::Index>(u.size()));
  Eigen::Map<const Eigen::RowVectorXd> mv(v.data(), static_cast<Eigen::Index>(v.size()));
  return cosine_similarity(mu, mv);
}

void save_vectors(const VectorSet& v, const std::filesystem::path& path) {
  std::string out = "TSVS";
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(v.size()));
  put_u32(out, static_cast<std::uint32_t>(v.dim()));
  put_str(out, v.provider_fingerprint());
  for (std::size_t i = 0; i < v.size(); ++i) {
    put_str(out, v.ids()[i]);
    for (std::size_t j = 0; j < v.dim(); ++j) {
      put_f64(out, v.matrix()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
  }
  util::write_file_atomic(path, out);
}

VectorSet load_vectors(const std::filesystem::path& path) {
  auto data = util::read_file(path);
  if (data.size() < 4 || data.compare(0, 4, "TSVS") != 0) throw Error("not a vector file: " + path.string());
  std::size_t pos = 4;
  auto version = get_u32(data, pos);
  if (version != 1) throw Error("unsupported vector file version " + std::to_string(version));
  auto n = get_u32(data, pos);
  auto d = get_u32(data, pos);
  auto fp = get_str(data, pos);
  Matrix m(n, d);
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    ids.push_back(get_str(data, pos));
    for (std::uint32_t j = 0; j < d; ++j) m(i, j) = get_f64(data, pos);
  }
  return VectorSet(std::move(ids), std::move(m), std::move(fp));
}

}  // namespace embedding
}  // namespace themescope
