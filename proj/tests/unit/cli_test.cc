#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "cli.h"
#include "em3/binary_io.h"
#include "em3/cost_model.h"
#include "em3/tokenizer.h"
#include "oracles/fixtures.h"

namespace em3 {
namespace {

struct Result {
  int rc = -1;
  std::string out, err;
  std::map<std::string, std::string> stats;
  std::vector<std::string> body;  // lines before the stats marker
};

Result em3(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.rc = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  std::istringstream in(r.out);
  std::string line;
  bool in_stats = false;
  while (std::getline(in, line)) {
    if (line == "---") {
      in_stats = true;
    } else if (in_stats) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) r.stats[line.substr(0, eq)] = line.substr(eq + 1);
    } else {
      r.body.push_back(line);
    }
  }
  return r;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

// A toy model, 100 references, and an index/bank pair, built through the CLI.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir();
    std::string refs;
    for (const auto& line : testing::toy_corpus(100, 1)) refs += line + "\n";
    write_text(path("refs.txt"), refs);
    ASSERT_EQ(em3({"init-model", "--out", path("m.em3m"), "--seed", "3"}).rc, 0);
    const auto b = em3({"build-bank", "--refs", path("refs.txt"), "--model", path("m.em3m"),
                        "--bank", path("b.em3b"), "--index", path("i.em3i")});
    ASSERT_EQ(b.rc, 0) << b.err;
  }
  static void TearDownTestSuite() { delete dir_; }
  static std::string path(const std::string& name) { return (*dir_ / name).string(); }

  static std::vector<std::string> engine_flags() {
    return {"--model", path("m.em3m"), "--bank", path("b.em3b"), "--index", path("i.em3i")};
  }

  static std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }

  static testing::TempDir* dir_;
};

testing::TempDir* CliTest::dir_ = nullptr;

std::string prompt_text(int n) {
  std::string s;
  for (const auto& line : testing::toy_corpus(40, 9)) s += line + " ";
  return s.substr(0, static_cast<std::size_t>(n));
}

TEST_F(CliTest, InitModelReportsParams) {
  const auto r = em3({"init-model", "--out", path("m2.em3m"), "--seed", "3"});
  ASSERT_EQ(r.rc, 0);
  EXPECT_EQ(read_file(path("m2.em3m")), read_file(path("m.em3m")));
  EXPECT_EQ(r.stats.at("non_embedding_params"),
            std::to_string(non_embedding_param_count(ModelConfig::toy())));
}

TEST_F(CliTest, BuildBankCountsAndDeterminism) {
  const auto a = em3({"build-bank", "--refs", path("refs.txt"), "--model", path("m.em3m"),
                      "--bank", path("b1.em3b"), "--index", path("i1.em3i"), "--threads", "3"});
  const auto b = em3({"build-bank", "--refs", path("refs.txt"), "--model", path("m.em3m"),
                      "--bank", path("b2.em3b"), "--index", path("i2.em3i"), "--threads", "1"});
  ASSERT_EQ(a.rc, 0) << a.err;
  ASSERT_EQ(b.rc, 0) << b.err;
  EXPECT_GE(std::stoi(a.stats.at("bank_count")), 100);
  EXPECT_EQ(a.stats.at("bank_count"), a.stats.at("index_count"));
  EXPECT_EQ(a.stats.at("bank_checksum"), b.stats.at("bank_checksum"));
  EXPECT_EQ(read_file(path("b1.em3b")), read_file(path("b2.em3b")));
  EXPECT_EQ(std::stod(a.stats.at("sparsity_factor")), 8.0 / 4 * 4 * 32 / 4);
}

TEST_F(CliTest, BuildBankQuantized) {
  const auto r = em3({"build-bank", "--refs", path("refs.txt"), "--model", path("m.em3m"),
                      "--bank", path("q.em3b"), "--index", path("qi.em3i"), "--quantize",
                      "--codebook", path("q.em3q"), "--seed", "2"});
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_EQ(r.stats.at("quantized"), "1");
  EXPECT_NEAR(std::stod(r.stats.at("reference_quant_ratio")), 11.4, 0.05);
  EXPECT_DOUBLE_EQ(std::stod(r.stats.at("quant_ratio")), 16.0);
  const auto again = em3({"build-bank", "--refs", path("refs.txt"), "--model", path("m.em3m"),
                          "--bank", path("q2.em3b"), "--index", path("qi2.em3i"), "--quantize",
                          "--codebook", path("q2.em3q"), "--seed", "2"});
  EXPECT_EQ(r.stats.at("bank_checksum"), again.stats.at("bank_checksum"));
  EXPECT_EQ(em3({"build-bank", "--refs", path("refs.txt"), "--model", path("m.em3m"), "--bank",
                 path("x.em3b"), "--index", path("x.em3i"), "--quantize"})
                .rc,
            cli::kExitUsage);
}

TEST_F(CliTest, BuildBankRejectsInvalidUtf8) {
  write_text(path("bad.txt"), "fine line\nbad \xff\xfe line\n");
  const auto r = em3({"build-bank", "--refs", path("bad.txt"), "--model", path("m.em3m"),
                      "--bank", path("bad.em3b"), "--index", path("bad.em3i")});
  EXPECT_EQ(r.rc, cli::kExitIo);
  EXPECT_NE(r.err.find(":2:"), std::string::npos) << r.err;
}

TEST_F(CliTest, InferRetrievalCount) {
  const auto r = em3(cat({"infer", "--prompt", prompt_text(128), "--n-tokens", "128",
                          "--chunk-len", "64"},
                         engine_flags()));
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_EQ(r.stats.at("retrievals"), "3");
  EXPECT_EQ(r.stats.at("expected_retrievals"), "3");
  EXPECT_EQ(r.stats.at("generated_tokens"), "128");
  EXPECT_GT(std::stoi(r.stats.at("memories_attached")), 0);
}

TEST_F(CliTest, InferWarmEqualsColdAndNoMemory) {
  const auto base = cat({"infer", "--prompt", prompt_text(50), "--n-tokens", "40"}, engine_flags());
  const auto warm = em3(base);
  const auto cold = em3({"infer", "--prompt", prompt_text(50), "--n-tokens", "40", "--model",
                         path("m.em3m"), "--index", path("i.em3i"), "--bank", path("absent.em3b"),
                         "--mode", "cold"});
  ASSERT_EQ(warm.rc, 0) << warm.err;
  ASSERT_EQ(cold.rc, 0) << cold.err;
  EXPECT_EQ(warm.stats.at("output_tokens"), cold.stats.at("output_tokens"));
  EXPECT_EQ(warm.body, cold.body);
  EXPECT_NE(cold.stats.at("cold_encodes"), "0");

  const auto off = em3(cat(base, {"--no-memory"}));
  ASSERT_EQ(off.rc, 0);
  EXPECT_EQ(off.stats.at("memories_attached"), "0");
  // Memory-free generation through the library, outside the CLI.
  const auto model = Model::load(path("m.em3m"));
  auto res = std::make_shared<EngineResources>();
  res->model = std::make_shared<const Model>(model);
  Session s(res);
  const auto tokens = s.generate(ByteTokenizer{}.encode(prompt_text(50)), 40);
  std::string joined;
  for (std::size_t i = 0; i < tokens.size(); ++i) joined += (i ? " " : "") + std::to_string(tokens[i]);
  EXPECT_EQ(off.stats.at("output_tokens"), joined);
}

TEST_F(CliTest, ConfigFileAndPrecedence) {
  write_text(path("engine.cfg"), "model = m.em3m\nbank = b.em3b\nindex = i.em3i\nchunk_len = 8\n");
  const std::vector<std::string> base = {"infer", "--prompt", prompt_text(32), "--n-tokens", "2",
                                         "--config", path("engine.cfg")};
  const auto from_file = em3(base);
  ASSERT_EQ(from_file.rc, 0) << from_file.err;
  EXPECT_EQ(from_file.stats.at("retrievals"), "4");
  const auto flag_wins = em3(cat(base, {"--chunk-len", "16"}));
  EXPECT_EQ(flag_wins.stats.at("retrievals"), "2");
  const auto file_wins = em3(cat(base, {"--chunk-len", "16", "--config-precedence"}));
  EXPECT_EQ(file_wins.stats.at("retrievals"), "4");
}

TEST_F(CliTest, CostDefaults) {
  const auto r = em3({"cost", "--n", "100"});
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_NEAR(std::stod(r.stats.at("n_lo")) / 0.494, 1.0, 0.02);
  EXPECT_NEAR(std::stod(r.stats.at("n_hi")) / 13400, 1.0, 0.02);
  EXPECT_EQ(r.stats.at("format"), "explicit");
  ASSERT_FALSE(r.body.empty());
  EXPECT_EQ(r.body[0], "n,implicit,explicit,external,argmin");
  // Rows piped back agree with optimal_format.
  const auto p = CostParams::reference();
  for (std::size_t i = 1; i < r.body.size(); i += 7) {
    std::istringstream row(r.body[i]);
    std::string n, argmin, cell;
    std::getline(row, n, ',');
    for (int c = 0; c < 3; ++c) std::getline(row, cell, ',');
    std::getline(row, argmin);
    EXPECT_EQ(argmin, to_string(optimal_format(p, std::stod(n)).format)) << r.body[i];
  }
}

TEST_F(CliTest, CostDegenerateShapes) {
  const auto r = em3({"cost", "--L", "1", "--L-mem", "1"});
  EXPECT_EQ(r.rc, 0) << r.err;
  EXPECT_TRUE(r.stats.count("n_lo"));
  EXPECT_EQ(em3({"cost", "--L", "2", "--L-mem", "3"}).rc, cli::kExitUsage);
}

TEST_F(CliTest, Bench) {
  const auto only = em3(cat({"bench", "--retrievals-only", "--prompt-len", "256", "--n-tokens",
                             "64", "--chunk-len", "64"},
                            engine_flags()));
  ASSERT_EQ(only.rc, 0) << only.err;
  EXPECT_EQ(only.stats.at("retrievals"), "4");
  EXPECT_FALSE(only.stats.count("ratio"));

  const auto r = em3(cat({"bench", "--prompt-len", "64", "--n-tokens", "64", "--repeats", "3"},
                         engine_flags()));
  ASSERT_EQ(r.rc, 0) << r.err;
  const double ratio = std::stod(r.stats.at("ratio"));
  const double plain = std::stod(r.stats.at("tokens_per_sec_plain"));
  const double memory = std::stod(r.stats.at("tokens_per_sec_memory"));
  EXPECT_GT(ratio, 0.0);
  EXPECT_NEAR(ratio, memory / plain, 1e-5 * ratio);
  EXPECT_EQ(em3(cat({"bench", "--repeats", "1"}, engine_flags())).rc, cli::kExitUsage);
}

TEST(MeanAfterWarmup, DropsFirstRun) {
  const std::vector<double> runs = {100.0, 1.0, 2.0, 3.0};
  EXPECT_DOUBLE_EQ(cli::mean_after_warmup(runs), 2.0);
  const std::vector<double> one = {5.0};
  EXPECT_THROW(cli::mean_after_warmup(one), Error);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(em3({}).rc, cli::kExitUsage);
  EXPECT_EQ(em3({"frobnicate"}).rc, cli::kExitUsage);
  EXPECT_EQ(em3({"cost", "--L", "banana"}).rc, cli::kExitUsage);
  EXPECT_EQ(em3({"infer", "--prompt", "x", "--model", path("nope.em3m")}).rc, cli::kExitIo);
  EXPECT_EQ(em3({"build-bank", "--refs", path("nope.txt"), "--model", path("m.em3m"), "--bank",
                 path("n.em3b"), "--index", path("n.em3i")})
                .rc,
            cli::kExitIo);
  EXPECT_EQ(em3({"init-model", "--out", path("other.em3m"), "--seed", "4"}).rc, 0);
  const auto mismatch = em3({"infer", "--prompt", "hello", "--model", path("other.em3m"),
                             "--bank", path("b.em3b"), "--index", path("i.em3i")});
  EXPECT_EQ(mismatch.rc, cli::kExitCompat) << mismatch.err;
  EXPECT_EQ(em3({"--help"}).rc, cli::kExitOk);
}

}  // namespace
}  // namespace em3
