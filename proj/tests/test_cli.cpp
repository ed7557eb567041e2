#include <gtest/gtest.h>

#include <sstream>

#include "mgpatree/cli.hpp"
#include "mgpatree/io.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = mgpa::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string path(const fs::path& p) { return p.string(); }

// A small simulated data set shared by the tests below.
const fs::path& small_sim() {
  static const fs::path dir = [] {
    const auto d = oracle::fresh_dir("cli_sim");
    const auto r = run({"simulate", "--m", "2000", "--k", "8", "--seed", "3", "--out-dir", path(d)});
    EXPECT_EQ(r.code, 0) << r.err;
    return d;
  }();
  return dir;
}

}  // namespace

TEST(Cli, NoCommandIsUsageError) {
  EXPECT_EQ(run({}).code, mgpa::cli::kUsage);
  EXPECT_EQ(run({"frobnicate"}).code, mgpa::cli::kUsage);
  EXPECT_EQ(run({"--help"}).code, mgpa::cli::kSuccess);
}

TEST(Cli, SimulateRejectsTooFewAnnotations) {
  const auto d = oracle::fresh_dir("cli_k5");
  const auto r = run({"simulate", "--u", "0.2", "--k", "5", "--out-dir", path(d)});
  EXPECT_EQ(r.code, mgpa::cli::kUsage);
  EXPECT_NE(r.err.find("K must be >= 6"), std::string::npos) << r.err;
}

TEST(Cli, SimulateRejectsOversizedBlocks) {
  const auto d = oracle::fresh_dir("cli_u");
  EXPECT_EQ(run({"simulate", "--u", "0.2", "--out-dir", path(d)}).code, mgpa::cli::kUsage);
  EXPECT_EQ(run({"simulate", "--m", "abc", "--out-dir", path(d)}).code, mgpa::cli::kUsage);
}

TEST(Cli, SimulatePrintsOverlapAndIsDeterministic) {
  const auto a = oracle::fresh_dir("cli_sim_a");
  const auto b = oracle::fresh_dir("cli_sim_b");
  const auto ra = run({"simulate", "--seed", "1", "--v", "0.5", "--out-dir", path(a)});
  const auto rb = run({"simulate", "--seed", "1", "--v", "0.5", "--out-dir", path(b)});
  ASSERT_EQ(ra.code, 0) << ra.err;
  EXPECT_NE(ra.out.find("|A1&A2| = 500"), std::string::npos) << ra.out;
  EXPECT_NE(ra.out.find("state 11: 500"), std::string::npos);
  EXPECT_EQ(ra.out, rb.out);
  for (const char* f : {"gwas.tsv", "annotations.tsv", "truth.tsv", "simulation.json"}) {
    EXPECT_EQ(oracle::slurp(a / f), oracle::slurp(b / f)) << f;
  }
}

TEST(Cli, FitWritesReportAndIsDeterministic) {
  const auto& sim = small_sim();
  const auto out = oracle::fresh_dir("cli_fit");
  const std::vector<std::string> args{"fit",      "--gwas",       path(sim / "gwas.tsv"), "--annot",
                                      path(sim / "annotations.tsv"), "--fdr-level", "0.05",
                                      "--baseline", "--out-dir",   path(out)};
  const auto first = run(args);
  ASSERT_TRUE(first.code == 0 || first.code == 2) << first.err;
  EXPECT_NE(first.out.find("multi_gpa_tree global@0.05: P1="), std::string::npos) << first.out;
  EXPECT_NE(first.out.find("baseline lfdr@0.2"), std::string::npos);
  const std::string summary = oracle::slurp(out / "summary.tsv");
  const std::string snps = oracle::slurp(out / "snps.tsv");
  EXPECT_EQ(summary.substr(0, summary.find('\n')),
            "model\trule\tlevel\tmarginal_P1\tmarginal_P2\tjoint_P1_P2\tselected_annotations");

  const auto second = run(args);
  EXPECT_EQ(second.code, first.code);
  EXPECT_EQ(second.out, first.out);
  EXPECT_EQ(oracle::slurp(out / "summary.tsv"), summary);
  EXPECT_EQ(oracle::slurp(out / "snps.tsv"), snps);
}

TEST(Cli, FitIterationCapExitsTwoWithReport) {
  const auto& sim = small_sim();
  const auto out = oracle::fresh_dir("cli_fit_cap");
  const auto r = run({"fit", "--gwas", path(sim / "gwas.tsv"), "--annot", path(sim / "annotations.tsv"),
                      "--max-iter-stage1", "2", "--out-dir", path(out)});
  EXPECT_EQ(r.code, mgpa::cli::kNotConverged);
  EXPECT_TRUE(fs::exists(out / "summary.json"));
}

TEST(Cli, FitReordersAnnotationRowsById) {
  const auto& sim = small_sim();
  // Reverse the annotation rows; the fit must match the original order.
  const auto table = mgpa::read_table(sim / "annotations.tsv");
  std::string text;
  for (std::size_t i = 0; i < table.header.size(); ++i) text += (i ? "\t" : "") + table.header[i];
  text += "\n";
  for (auto it = table.rows.rbegin(); it != table.rows.rend(); ++it) {
    for (std::size_t i = 0; i < it->size(); ++i) text += (i ? "\t" : "") + (*it)[i];
    text += "\n";
  }
  const auto dir = oracle::fresh_dir("cli_reorder");
  mgpa::write_text(dir / "annotations.tsv", text);
  const auto a = oracle::fresh_dir("cli_reorder_a");
  const auto b = oracle::fresh_dir("cli_reorder_b");
  run({"fit", "--gwas", path(sim / "gwas.tsv"), "--annot", path(sim / "annotations.tsv"), "--out-dir", path(a)});
  run({"fit", "--gwas", path(sim / "gwas.tsv"), "--annot", path(dir / "annotations.tsv"), "--out-dir", path(b)});
  EXPECT_EQ(oracle::slurp(a / "snps.tsv"), oracle::slurp(b / "snps.tsv"));
}

TEST(Cli, FitRejectsMisalignedIds) {
  const auto& sim = small_sim();
  const auto dir = oracle::fresh_dir("cli_misaligned");
  mgpa::write_text(dir / "annot.tsv", "snp_id\tA1\nother1\t1\nother2\t0\n");
  const auto r = run({"fit", "--gwas", path(sim / "gwas.tsv"), "--annot", path(dir / "annot.tsv"),
                      "--out-dir", path(dir / "out")});
  EXPECT_EQ(r.code, mgpa::cli::kDataError);
}

TEST(Cli, FitUsageErrors) {
  const auto& sim = small_sim();
  const auto dir = oracle::fresh_dir("cli_fit_usage");
  EXPECT_EQ(run({"fit", "--gwas", path(dir / "missing.tsv"), "--annot", path(sim / "annotations.tsv"),
                 "--out-dir", path(dir)})
                .code,
            mgpa::cli::kUsage);
  EXPECT_EQ(run({"fit", "--gwas", path(sim / "gwas.tsv"), "--annot", path(sim / "annotations.tsv"),
                 "--fdr-level", "1.5", "--out-dir", path(dir)})
                .code,
            mgpa::cli::kUsage);
  EXPECT_EQ(run({"fit", "--gwas", path(sim / "gwas.tsv"), "--annot", path(sim / "annotations.tsv"), "--cp",
                 "2", "--out-dir", path(dir)})
                .code,
            mgpa::cli::kUsage);
}

TEST(Cli, FitBadInputFileIsDataError) {
  const auto& sim = small_sim();
  const auto dir = oracle::fresh_dir("cli_badfile");
  mgpa::write_text(dir / "gwas.tsv", "snp_id\tP1\tP2\nsnp1\t1.2\t0.5\n");
  const auto r = run({"fit", "--gwas", path(dir / "gwas.tsv"), "--annot", path(sim / "annotations.tsv"),
                      "--out-dir", path(dir / "out")});
  EXPECT_EQ(r.code, mgpa::cli::kDataError);
  EXPECT_NE(r.err.find("gwas.tsv:2"), std::string::npos) << r.err;
}

TEST(Cli, PrioritizeAtNewLevels) {
  const auto& sim = small_sim();
  const auto dir = oracle::fresh_dir("cli_prio");
  run({"fit", "--gwas", path(sim / "gwas.tsv"), "--annot", path(sim / "annotations.tsv"), "--out-dir",
       path(dir / "fit")});
  const auto r = run({"prioritize", "--fit-dir", path(dir / "fit"), "--fdr-level", "0.1", "--lfdr-level",
                      "0.3", "--out", path(dir / "prio.tsv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = mgpa::read_table(dir / "prio.tsv");
  EXPECT_EQ(t.rows.size(), 2000u);
  EXPECT_TRUE(t.find_column("global_0.1_P1_P2").has_value());
  EXPECT_TRUE(t.find_column("lfdr_0.3_P2").has_value());
  EXPECT_EQ(run({"prioritize", "--fit-dir", path(dir / "nope"), "--out", path(dir / "x.tsv")}).code,
            mgpa::cli::kUsage);
}

TEST(Cli, EvaluateIsIndependentOfThreadCount) {
  const auto root = oracle::fresh_dir("cli_eval");
  std::vector<std::string> args{"evaluate"};
  for (int seed = 1; seed <= 3; ++seed) {
    const auto sim = root / ("sim" + std::to_string(seed));
    const auto fit = root / ("fit" + std::to_string(seed));
    run({"simulate", "--m", "1500", "--k", "7", "--seed", std::to_string(seed), "--out-dir", path(sim)});
    run({"fit", "--gwas", path(sim / "gwas.tsv"), "--annot", path(sim / "annotations.tsv"), "--baseline",
         "--out-dir", path(fit)});
    args.insert(args.end(), {"--fit-dir", path(fit), "--truth", path(sim / "truth.tsv")});
  }
  auto serial = args;
  serial.insert(serial.end(), {"--threads", "1", "--out", path(root / "serial.tsv")});
  auto parallel = args;
  parallel.insert(parallel.end(), {"--threads", "3", "--out", path(root / "parallel.tsv")});
  const auto a = run(serial);
  const auto b = run(parallel);
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(oracle::slurp(root / "serial.tsv"), oracle::slurp(root / "parallel.tsv"));
  const auto t = mgpa::read_table(root / "serial.tsv", "replicate");
  EXPECT_EQ(t.rows.size(), 6u + 4u);  // 3 fits x 2 methods, then mean and sd per method
}

TEST(Cli, EvaluateRejectsMismatchedTruth) {
  const auto& sim = small_sim();
  const auto root = oracle::fresh_dir("cli_eval_bad");
  run({"fit", "--gwas", path(sim / "gwas.tsv"), "--annot", path(sim / "annotations.tsv"), "--out-dir",
       path(root / "fit")});
  run({"simulate", "--m", "1000", "--k", "6", "--out-dir", path(root / "other")});
  const auto r = run({"evaluate", "--fit-dir", path(root / "fit"), "--truth", path(root / "other" / "truth.tsv"),
                      "--out", path(root / "m.tsv")});
  EXPECT_EQ(r.code, mgpa::cli::kDataError);
}
