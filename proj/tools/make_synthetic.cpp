// Writes the synthetic three-topic corpus and its mock chat script.
#include <iostream>

#include <CLI11.hpp>

#include "themescope/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"synthetic topic corpus generator", "themescope-synth"};
  std::size_t n = 600;
  std::uint64_t seed = 11;
  std::string corpus_path = "synthetic.jsonl", script_path = "synthetic_mock.json";
  app.add_option("-n,--docs", n, "number of documents");
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--corpus", corpus_path, "output JSONL corpus");
  app.add_option("--script", script_path, "output mock chat script");
  CLI11_PARSE(app, argc, argv);
  try {
    auto topics = themescope::synthetic::default_topics();
    auto tc = themescope::synthetic::make_topic_corpus(n, seed, topics);
    themescope::util::write_file_atomic(corpus_path, themescope::corpus::to_jsonl(tc.corpus));
    themescope::util::write_file_atomic(script_path, themescope::synthetic::mock_script(topics).dump(2) + "\n");
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 0;
}
