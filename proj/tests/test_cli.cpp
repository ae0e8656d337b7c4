#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>

#include "test_util.hpp"

using namespace maxrobust;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr discarded and returns its exit code and stdout.
CliRun cli(const std::string& args) {
  const std::string cmd = std::string("\"") + MAXROBUST_CLI_PATH + "\" " + args + " 2>/dev/null";
  CliRun r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  std::size_t got = 0;
  while ((got = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), got);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("maxrobust_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, HelpListsSubcommands) {
  const CliRun r = cli("--help");
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"gen-data", "train", "attack", "margin", "oracle", "sweep", "emit-figure"})
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
}

TEST_F(CliTest, GenDataMatchesLibrary) {
  ASSERT_EQ(cli("gen-data --d 20 --ratio 4 --seed 3 --out " + path("ds.bin")).code, 0);
  EXPECT_EQ(load_dataset(path("ds.bin")), generate_gaussian_separable(20, 5, 3, true));
  ASSERT_EQ(cli("gen-data --d 20 --n 7 --no-augment --out " + path("plain.bin")).code, 0);
  EXPECT_EQ(load_dataset(path("plain.bin")), generate_gaussian_separable(20, 7, 0, false));
}

TEST_F(CliTest, TrainMarginAttackPipeline) {
  ASSERT_EQ(cli("gen-data --d 16 --n 4 --out " + path("ds.bin")).code, 0);
  const CliRun train = cli("train --data " + path("ds.bin") + " --method gd --steps 500 --out " + path("m.json") +
                        " --trace " + path("t.csv"));
  ASSERT_EQ(train.code, 0);
  const auto summary = nlohmann::json::parse(train.out);
  const Dataset ds = load_dataset(path("ds.bin"));
  const Model m = load_model(path("m.json"));
  EXPECT_NEAR(summary.at("margin_l2").get<double>(), margin(m, ds, NormKind::L2), 1e-12);
  EXPECT_TRUE(fs::exists(path("t.csv")));

  const CliRun mr = cli("margin --model " + path("m.json") + " --data " + path("ds.bin"));
  ASSERT_EQ(mr.code, 0);
  const auto margins = nlohmann::json::parse(mr.out);
  for (NormKind k : kAttackNorms)
    EXPECT_NEAR(margins.at("margin_" + column_name(k)).get<double>(), margin(m, ds, k), 1e-12) << to_string(k);

  const CliRun ar = cli("attack --model " + path("m.json") + " --data " + path("ds.bin") +
                     " --norm fourier-linf --eps 0.1 --mask low:8 --out " + path("report.csv"));
  ASSERT_EQ(ar.code, 0);
  const std::string report = detail::read_text(path("report.csv"));
  EXPECT_EQ(std::count(report.begin(), report.end(), '\n'), 5);
  EXPECT_EQ(report.rfind("index,clean,adversarial,flipped", 0), 0u);
}

TEST_F(CliTest, TrainEveryMethod) {
  ASSERT_EQ(cli("gen-data --d 8 --n 4 --out " + path("ds.bin")).code, 0);
  for (const std::string method :
       {"gd", "signgd", "cd", "gd-ls", "prox --reg fourier-l1 --lambda 1e-4", "adv --eps 0.05 --attack l2", "conv-gd"}) {
    const CliRun r = cli("train --data " + path("ds.bin") + " --steps 200 --method " + method + " --out " +
                      path("m.json") + " --trace " + path("t.jsonl"));
    EXPECT_EQ(r.code, 0) << method;
  }
  EXPECT_EQ(model_kind(load_model(path("m.json"))), "conv");
}

TEST_F(CliTest, OracleWritesRecordAndModel) {
  ASSERT_EQ(cli("gen-data --d 10 --n 5 --out " + path("ds.bin")).code, 0);
  const CliRun r = cli("oracle --data " + path("ds.bin") + " --attack linf --model-out " + path("o.json"));
  ASSERT_EQ(r.code, 0);
  const auto recs = sweep_records_from_csv(r.out);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_TRUE(recs[0].oracle_converged);
  const Dataset ds = load_dataset(path("ds.bin"));
  EXPECT_NEAR(margin(load_model(path("o.json")), ds, NormKind::Linf), recs[0].oracle_margin,
              1e-8 * recs[0].oracle_margin);
}

TEST_F(CliTest, SweepAndEmitFigure) {
  const CliRun s = cli("sweep --d 12 --ratios 1,4 --seeds 0,1 --methods gd,cd,prox-l1@0.001 --attacks l2,linf "
                    "--steps 200 --prox-steps 100 --record-every 100 --workers 1 --out " +
                    path("sweep.csv"));
  ASSERT_EQ(s.code, 0);
  const auto recs = load_sweep_records(path("sweep.csv"));
  EXPECT_EQ(recs.size(), 2u * 2u * 3u * 2u);
  EXPECT_TRUE(fs::exists(path("sweep.csv.manifest.json")));
  EXPECT_TRUE(fs::exists(path("sweep.csv.timing.csv")));
  const CliRun f = cli("emit-figure linear-linf --input " + path("sweep.csv"));
  ASSERT_EQ(f.code, 0);
  EXPECT_EQ(f.out, emit_figure(recs, "linear-linf"));

  // Reruns are byte-identical.
  ASSERT_EQ(cli("sweep --d 12 --ratios 1,4 --seeds 0,1 --methods gd,cd,prox-l1@0.001 --attacks l2,linf "
                "--steps 200 --prox-steps 100 --record-every 100 --workers 2 --out " +
                path("again.csv"))
                .code,
            0);
  EXPECT_EQ(detail::read_text(path("again.csv")), detail::read_text(path("sweep.csv")));
}

TEST_F(CliTest, ConfigFileSuppliesOptions) {
  detail::write_text(path("gen.toml"), "[gen-data]\nd = 9\nn = 3\nseed = 4\n");
  ASSERT_EQ(cli("--config " + path("gen.toml") + " gen-data --out " + path("ds.bin")).code, 0);
  EXPECT_EQ(load_dataset(path("ds.bin")), generate_gaussian_separable(9, 3, 4, true));
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("train --data").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
  ASSERT_EQ(cli("gen-data --d 6 --n 3 --out " + path("ds.bin")).code, 0);
  EXPECT_EQ(cli("train --data " + path("ds.bin") + " --method nope --out " + path("m.json")).code, 2);
  EXPECT_EQ(cli("oracle --data " + path("ds.bin") + " --attack fourier-l1").code, 2);
  detail::write_text(path("bad.bin"), "not a dataset");
  EXPECT_EQ(cli("margin --model " + path("m.json") + " --data " + path("bad.bin")).code, 2);
  EXPECT_EQ(cli("margin --model " + path("missing.json") + " --data " + path("ds.bin")).code, 2);
  // Runtime failure: a huge step on non-separable data diverges.
  Dataset bad;
  bad.X = Matrix::Zero(3, 2);
  bad.X.col(0) << 1.0, 3.0, 2.0;
  bad.y = Vector::Ones(3);
  bad.y[2] = -1.0;
  bad.teacher = Vector::Zero(2);
  save_dataset(bad, path("nonsep.bin"));
  EXPECT_EQ(cli("train --data " + path("nonsep.bin") + " --steps 10 --step-size 1000 --out " + path("d.json")).code, 3);
  EXPECT_EQ(cli("oracle --data " + path("ds.bin") + " --attack l1 --max-iter 2").code, 4);
}
