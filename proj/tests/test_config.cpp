#include <doctest.h>

#include <map>
#include <stdexcept>
#include <string>

#include "config.hpp"
#include "testutil.hpp"

using namespace ocor;
using testutil::TempDir;
using testutil::write_file;

TEST_SUITE("config") {

TEST_CASE("parses flat key = value text") {
  const auto kv = parse_config_text(
      "# comment\n"
      "\n"
      "depth = 2\n"
      "  dropout=0.1  \n"
      "out_dir = /tmp/run a\n");
  CHECK(kv.at("depth") == "2");
  CHECK(kv.at("dropout") == "0.1");
  CHECK(kv.at("out_dir") == "/tmp/run a");
}

TEST_CASE("rejects unknown keys and malformed lines with line numbers") {
  CHECK_THROWS_WITH_AS(parse_config_text("depth = 2\nwat = 3\n"),
                       doctest::Contains("line 2"), std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_config_text("depth = 2\nwat = 3\n"),
                       doctest::Contains("wat"), std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_config_text("just words\n"),
                       doctest::Contains("line 1"), std::runtime_error);
  CHECK_THROWS_AS(parse_config_text("= 3\n"), std::runtime_error);
}

TEST_CASE("missing config file names the path") {
  CHECK_THROWS_WITH_AS(parse_config_file("/nonexistent/conf"),
                       doctest::Contains("/nonexistent/conf"),
                       std::runtime_error);
}

TEST_CASE("defaults match the full-scale configuration") {
  const ModelConfig cfg;
  CHECK(cfg.depth == 3);
  CHECK(cfg.embed_dim == 256);
  CHECK(cfg.heads == 8);
  CHECK(cfg.conv_width_first == 1024);
  CHECK(cfg.dropout == 0.2);
  const TrainConfig tc;
  CHECK(tc.learning_rate == 1e-4);
  CHECK(tc.negatives == 5);
  const RunConfig rc;
  CHECK(rc.lambda == 0.1);
}

TEST_CASE("apply overrides only the present keys") {
  ModelConfig cfg;
  cfg.apply(parse_config_text("embed_dim = 64\nheads = 4\n"));
  CHECK(cfg.embed_dim == 64);
  CHECK(cfg.heads == 4);
  CHECK(cfg.depth == 3);  // untouched default
  CHECK_THROWS_AS(
      [] {
        ModelConfig c;
        c.apply(parse_config_text("embed_dim = many\n"));
      }(),
      std::runtime_error);
}

TEST_CASE("validation rejects inconsistent settings") {
  ModelConfig cfg;
  cfg.embed_dim = 65;  // odd
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.embed_dim = 64;
  cfg.heads = 5;  // does not divide 64
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.heads = 4;
  cfg.conv_kernel = 4;  // even
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.conv_kernel = 3;
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.dropout = 0.2;
  CHECK_NOTHROW(cfg.validate());

  RunConfig run;
  CHECK_THROWS_AS(run.apply(parse_config_text("lambda = 1.5\n")),
                  std::invalid_argument);
}

TEST_CASE("canonical text round-trips and hashes stably") {
  ModelConfig cfg;
  cfg.embed_dim = 64;
  cfg.heads = 4;
  cfg.dropout = 0.15;
  const std::string text = cfg.to_text();
  const ModelConfig back = ModelConfig::from_text(text);
  CHECK(back.to_text() == text);
  CHECK(back.hash() == cfg.hash());

  ModelConfig other = cfg;
  other.depth = 2;
  CHECK(other.hash() != cfg.hash());

  // Readable shortest decimal forms.
  CHECK(text.find("dropout = 0.15\n") != std::string::npos);
  RunConfig run;
  const std::string full = run.to_text();
  CHECK(full.find("learning_rate = 0.0001\n") != std::string::npos);
  CHECK(full.find("dropout = 0.2\n") != std::string::npos);
  CHECK(full.find("lambda = 0.1\n") != std::string::npos);
}

TEST_CASE("run config renders train fields and optional paths") {
  RunConfig run;
  run.apply(parse_config_text("epochs = 7\nout_dir = /tmp/ocr\n"));
  const std::string text = run.to_text();
  CHECK(text.find("epochs = 7\n") != std::string::npos);
  CHECK(text.find("out_dir = /tmp/ocr\n") != std::string::npos);
  CHECK(text.find("dev_corpus") == std::string::npos);
}

TEST_CASE("config file parsing reports the file path on errors") {
  TempDir dir;
  const std::string path = dir.file("run.conf");
  write_file(path, "depth = 2\nbogus = 1\n");
  CHECK_THROWS_WITH_AS(parse_config_file(path), doctest::Contains("run.conf"),
                       std::runtime_error);
  write_file(path, "depth = 2\nepochs = 9\n");
  const auto kv = parse_config_file(path);
  CHECK(kv.at("epochs") == "9");
}

}  // TEST_SUITE
