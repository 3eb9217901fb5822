#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include "themescope/embedding.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

using namespace themescope;

namespace {

// Local HTTP endpoint answering with vectors of a chosen dimension.
class FakeEmbedServer {
 public:
  explicit FakeEmbedServer(std::size_t dim, int fail_first = 0) : dim_(dim), fail_first_(fail_first) {
    server_.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      if (requests_ <= fail_first_) {
        res.status = 503;
        return;
      }
      auto body = nlohmann::json::parse(req.body);
      nlohmann::json out;
      out["vectors"] = nlohmann::json::array();
      for (std::size_t i = 0; i < body["texts"].size(); ++i) {
        std::vector<double> v(dim_, 0.0);
        v[i % dim_] = 1.0;
        out["vectors"].push_back(v);
      }
      res.set_content(out.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEmbedServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/embed"; }
  int requests() const { return requests_; }

 private:
  httplib::Server server_;
  std::size_t dim_;
  int fail_first_;
  std::atomic<int> requests_{0};
  int port_ = 0;
  std::thread thread_;
};

RemoteProviderOptions remote(const std::string& url, std::size_t dim) {
  RemoteProviderOptions o;
  o.endpoint = url;
  o.dim = dim;
  o.max_batch = 2;
  o.backoff_base_ms = 1;
  o.timeout_seconds = 5;
  return o;
}

}  // namespace

TEST(Embedding, HashingProviderIsDeterministic) {
  HashingProvider p(64);
  std::vector<std::string> texts{"solar panels", "solar panels", "oil drilling"};
  auto v = embedding::embed_batch(p, texts);
  EXPECT_EQ(v.row(0), v.row(1));
  EXPECT_NE(v.row(0), v.row(2));
  HashingProvider again(64);
  EXPECT_EQ(again.embed_one("solar panels"), p.embed_one("solar panels"));
  EXPECT_EQ(v.provider_fingerprint(), "hashing-bag/64");
}

TEST(Embedding, OverlappingTokensAreMoreSimilar) {
  HashingProvider p(256);
  std::vector<std::string> texts{"rooftop solar panels save money", "solar panels on every rooftop",
                                 "crude pipeline construction"};
  auto v = embedding::embed_batch(p, texts);
  EXPECT_GT(embedding::cosine_similarity(v.row(0), v.row(1)), embedding::cosine_similarity(v.row(0), v.row(2)));
}

TEST(Embedding, EmptyInputKeepsProviderDim) {
  HashingProvider p(32);
  auto v = embedding::embed_batch(p, std::vector<std::string>{});
  EXPECT_EQ(v.size(), 0u);
  EXPECT_EQ(v.dim(), 32u);
}

TEST(Embedding, RemoteDimensionMismatch) {
  FakeEmbedServer server(3);
  RemoteProvider p(remote(server.url(), 4));
  std::vector<std::string> texts{"a", "b"};
  EXPECT_THROW(embedding::embed_batch(p, texts), DimensionMismatch);
}

TEST(Embedding, RemoteRetriesThenSucceeds) {
  FakeEmbedServer server(4, 2);
  RemoteProvider p(remote(server.url(), 4));
  std::vector<std::string> texts{"a", "b", "c"};
  auto v = embedding::embed_batch(p, texts);
  EXPECT_EQ(v.size(), 3u);
  EXPECT_EQ(server.requests(), 4);  // two failures, then two batches
}

TEST(Embedding, RemoteFailureCarriesBatchIndex) {
  FakeEmbedServer server(4, 100);
  RemoteProvider p(remote(server.url(), 4));
  std::vector<std::string> texts{"a", "b"};
  try {
    embedding::embed_batch(p, texts);
    FAIL();
  } catch (const EmbeddingBatchError& e) {
    EXPECT_EQ(e.batch_index(), 0u);
  }
  EXPECT_EQ(server.requests(), 3);
}

TEST(Embedding, L2Normalize) {
  Matrix m(2, 2);
  m << 3, 4, 0, 1;
  auto v = embedding::l2_normalize(VectorSet({"a", "b"}, m));
  EXPECT_NEAR(v.matrix()(0, 0), 0.6, 1e-12);
  EXPECT_NEAR(v.matrix()(0, 1), 0.8, 1e-12);
  EXPECT_EQ(v.matrix()(1, 1), 1.0);
  Matrix z = Matrix::Zero(1, 2);
  try {
    embedding::l2_normalize(VectorSet({"zero-row"}, z));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("zero-row"), std::string::npos);
  }
}

TEST(Embedding, CosineBasics) {
  std::vector<double> a{1, 0}, b{0, 1}, c{-1, 0}, z{0, 0}, d3{1, 0, 0};
  EXPECT_DOUBLE_EQ(embedding::cosine_similarity(a, a), 1.0);
  EXPECT_DOUBLE_EQ(embedding::cosine_similarity(a, b), 0.0);
  EXPECT_DOUBLE_EQ(embedding::cosine_similarity(a, c), -1.0);
  EXPECT_THROW(embedding::cosine_similarity(a, z), Error);
  EXPECT_THROW(embedding::cosine_similarity(a, d3), Error);
}

TEST(Embedding, CosineEqualsDotForUnitRowsAndIsSymmetric) {
  util::Rng rng(3);
  Matrix m(20, 8);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal();
  std::vector<std::string> ids;
  for (int i = 0; i < 20; ++i) ids.push_back(std::to_string(i));
  auto v = embedding::l2_normalize(VectorSet(ids, m));
  for (std::size_t i = 0; i < 20; ++i) {
    for (std::size_t j = 0; j < 20; ++j) {
      double c = embedding::cosine_similarity(v.row(i), v.row(j));
      EXPECT_NEAR(c, v.row(i).dot(v.row(j)), 1e-12);
      EXPECT_EQ(c, embedding::cosine_similarity(v.row(j), v.row(i)));
    }
  }
}

TEST(Embedding, CacheServesRepeatRequests) {
  auto dir = std::filesystem::temp_directory_path() / "themescope-cache-test";
  std::filesystem::remove_all(dir);
  FakeEmbedServer server(4);
  RemoteProvider p(remote(server.url(), 4));
  std::vector<std::string> texts{"a", "b"};
  {
    EmbeddingCache cache(dir);
    embedding::embed_batch(p, texts, {}, &cache);
  }
  const int after_first = server.requests();
  EmbeddingCache cache(dir);
  auto v = embedding::embed_batch(p, texts, {}, &cache);
  EXPECT_EQ(server.requests(), after_first);
  EXPECT_EQ(v.matrix()(1, 1), 1.0);
  std::filesystem::remove_all(dir);
}

TEST(Embedding, VectorFileRoundTrip) {
  auto path = std::filesystem::temp_directory_path() / "themescope-vectors.tsvs";
  HashingProvider p(16);
  std::vector<std::string> texts{"one", "two"};
  auto v = embedding::embed_batch(p, texts, {"x", "y"});
  embedding::save_vectors(v, path);
  auto back = embedding::load_vectors(path);
  EXPECT_EQ(back.ids(), v.ids());
  EXPECT_EQ(back.provider_fingerprint(), v.provider_fingerprint());
  EXPECT_TRUE(back.matrix().isApprox(v.matrix(), 1e-6));
  std::filesystem::remove(path);
}
