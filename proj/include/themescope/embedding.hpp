#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "themescope/util.hpp"

namespace themescope {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Id-aligned embedding matrix. Row i belongs to ids()[i].
class VectorSet {
 public:
  VectorSet() = default;
  VectorSet(std::vector<std::string> ids, Matrix matrix, std::string provider_fingerprint = {});

  const std::vector<std::string>& ids() const { return ids_; }
  const Matrix& matrix() const { return matrix_; }
  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(matrix_.cols()); }
  const std::string& provider_fingerprint() const { return fingerprint_; }
  Eigen::Ref<const Eigen::RowVectorXd> row(std::size_t i) const { return matrix_.row(static_cast<Eigen::Index>(i)); }

  // Rows selected by position, keeping id alignment.
  VectorSet select(std::span<const std::size_t> rows) const;

 private:
  std::vector<std::string> ids_;
  Matrix matrix_;
  std::string fingerprint_;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::size_t max_batch() const = 0;
  // Must return texts.size() rows. Implementations are safe to call
  // concurrently.
  virtual std::vector<std::vector<double>> embed(std::span<const std::string> texts) = 0;

  std::string fingerprint() const { return name() + "/" + std::to_string(dim()); }
};

// Offline provider: each token is hashed into a seeded Gaussian direction in
// R^dim and the bag is summed and normalized. Texts that share tokens get
// correlated vectors; the mapping is stable across processes.
class HashingProvider final : public EmbeddingProvider {
 public:
  explicit HashingProvider(std::size_t dim = 256, std::uint64_t seed = 0x5eed, std::string name = "hashing-bag");

  std::string name() const override { return name_; }
  std::size_t dim() const override { return dim_; }
  std::size_t max_batch() const override { return 512; }
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

  std::vector<double> embed_one(const std::string& text) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  std::string name_;
};

struct RemoteProviderOptions {
  std::string endpoint;     // http(s)://host[:port]/path
  std::string api_key;
  std::string model_name = "remote";
  std::size_t dim = 384;
  std::size_t max_batch = 64;
  int max_attempts = 3;
  int backoff_base_ms = 500;
  int max_in_flight = 4;
  int timeout_seconds = 60;
};

// JSON protocol: POST {"texts": [...]} -> {"vectors": [[...], ...]}.
class RemoteProvider final : public EmbeddingProvider {
 public:
  explicit RemoteProvider(RemoteProviderOptions opts);

  // Reads EMBED_ENDPOINT and EMBED_API_KEY.
  static RemoteProviderOptions options_from_env(RemoteProviderOptions base = {});

  std::string name() const override { return opts_.model_name; }
  std::size_t dim() const override { return opts_.dim; }
  std::size_t max_batch() const override { return opts_.max_batch; }
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

 private:
  RemoteProviderOptions opts_;
  std::counting_semaphore<64> in_flight_;
};

// On-disk vector cache keyed by (provider fingerprint, content hash).
// File layout per record: u32 key length, key bytes, u32 dim, dim x f32 (LE).
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path dir);

  std::optional<std::vector<double>> get(const std::string& fingerprint, const std::string& text) const;
  void put(const std::string& fingerprint, const std::string& text, const std::vector<double>& v);
  void flush();

 private:
  std::filesystem::path file_for(const std::string& fingerprint) const;
  void load(const std::string& fingerprint) const;

  std::filesystem::path dir_;
  mutable std::shared_mutex mu_;
  mutable std::unordered_map<std::string, std::unordered_map<std::string, std::vector<float>>> entries_;
  mutable std::unordered_map<std::string, bool> loaded_;
  std::unordered_map<std::string, bool> dirty_;
};

class EmbeddingBatchError : public Error {
 public:
  EmbeddingBatchError(std::string message, std::size_t batch) : Error(std::move(message)), batch_(batch) {}
  std::size_t batch_index() const { return batch_; }

 private:
  std::size_t batch_;
};

namespace embedding {

// Embeds texts in max_batch chunks. ids default to "0".."n-1" when empty.
VectorSet embed_batch(EmbeddingProvider& provider, std::span<const std::string> texts,
                      std::vector<std::string> ids = {}, EmbeddingCache* cache = nullptr);

VectorSet l2_normalize(const VectorSet& v);

double cosine_similarity(std::span<const double> u, std::span<const double> v);
double cosine_similarity(const Eigen::Ref<const Eigen::RowVectorXd>& u, const Eigen::Ref<const Eigen::RowVectorXd>& v);

// Binary vector file: magic "TSVS", u32 version, u32 n, u32 dim,
// fingerprint (u32 len + bytes), then per row: id (u32 len + bytes) and dim x f64.
void save_vectors(const VectorSet& v, const std::filesystem::path& path);
VectorSet load_vectors(const std::filesystem::path& path);

}  // namespace embedding
}  // namespace themescope
