#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "mgpatree/errors.hpp"
#include "mgpatree/fdr.hpp"
#include "mgpatree/io.hpp"
#include "mgpatree/simgen.hpp"
#include "oracles.hpp"

using namespace mgpa;
namespace fs = std::filesystem;

namespace {

fs::path write_file(const std::string& dir, const std::string& name, const std::string& contents) {
  const auto path = fs::path(MGPA_TEST_TMP) / dir / name;
  fs::create_directories(path.parent_path());
  write_text(path, contents);
  return path;
}

template <typename E>
std::string error_message(const std::function<void()>& f) {
  try {
    f();
  } catch (const E& e) {
    return e.what();
  }
  return "no exception";
}

}  // namespace

TEST(Numbers, RoundTripExactly) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unit(0, 1);
  for (int i = 0; i < 1000; ++i) {
    const double x = std::pow(unit(rng), 20.0);
    EXPECT_EQ(parse_double(format_double(x)), x);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(1e-30), "1e-30");
  EXPECT_EQ(parse_double("+0.25"), 0.25);
  EXPECT_THROW(parse_double("abc"), DataError);
  EXPECT_THROW(parse_double("0.5x"), DataError);
  EXPECT_THROW(parse_double(""), DataError);
}

TEST(Tables, SplitsTabsAndKeepsEmptyFields) {
  EXPECT_EQ(split_tabs("a\t\tb"), (std::vector<std::string>{"a", "", "b"}));
  EXPECT_EQ(split_tabs("x"), (std::vector<std::string>{"x"}));
}

TEST(Tables, HeaderAndRaggedRowErrors) {
  const auto no_header = write_file("io", "noheader.tsv", "rs1\t0.5\n");
  EXPECT_THROW(read_table(no_header), FormatError);
  const auto empty = write_file("io", "empty.tsv", "");
  EXPECT_THROW(read_table(empty), FormatError);
  const auto ragged = write_file("io", "ragged.tsv", "snp_id\tA\nrs1\t0.5\nrs2\n");
  EXPECT_NE(error_message<FormatError>([&] { read_table(ragged); }).find("ragged.tsv:3"), std::string::npos);
  EXPECT_THROW(read_table(fs::path(MGPA_TEST_TMP) / "io" / "missing.tsv"), IoError);
}

TEST(Tables, ToleratesCrlfAndBlankLines) {
  const auto path = write_file("io", "crlf.tsv", "snp_id\tT\r\nrs1\t0.5\r\n\r\nrs2\t0.25\r\n");
  const auto t = read_table(path);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][1], "0.25");
  EXPECT_EQ(t.line_numbers[1], 4u);
}

TEST(Gwas, ClampsUnderflowToFloor) {
  const auto path = write_file("io", "clamp.tsv", "snp_id\tT\nrs1\t0.5\nrs2\t1e-40\nrs3\t1.0\nrs4\t0\n");
  const auto p = load_gwas(path);
  EXPECT_EQ(p.values()(0, 0), 0.5);
  EXPECT_EQ(p.values()(1, 0), 1e-30);
  EXPECT_EQ(p.values()(2, 0), 1.0);
  EXPECT_EQ(p.values()(3, 0), 1e-30);
}

TEST(Gwas, TraitNamesFromHeader) {
  const auto path = write_file("io", "names.tsv", "snp_id\tSLE\tRA\nrs1\t0.5\t0.1\n");
  EXPECT_EQ(load_gwas(path).trait_names(), (std::vector<std::string>{"SLE", "RA"}));
}

TEST(Gwas, OutOfRangeValueReportsLine) {
  const auto path = write_file("io", "bad.tsv", "snp_id\tT\nrs1\t0.5\nrs2\t1.2\n");
  const auto msg = error_message<DataError>([&] { load_gwas(path); });
  EXPECT_NE(msg.find("bad.tsv:3"), std::string::npos) << msg;
  const auto nan = write_file("io", "nan.tsv", "snp_id\tT\nrs1\tnan\n");
  EXPECT_THROW(load_gwas(nan), DataError);
  const auto neg = write_file("io", "neg.tsv", "snp_id\tT\nrs1\t-0.1\n");
  EXPECT_THROW(load_gwas(neg), DataError);
}

TEST(Gwas, DuplicateIdsRejected) {
  const auto path = write_file("io", "dup.tsv", "snp_id\tT\nrs1\t0.5\nrs1\t0.4\n");
  EXPECT_THROW(load_gwas(path), DataError);
}

TEST(Gwas, RoundTripIsLossless) {
  SimConfig c;
  c.snps = 800;
  const auto sim = simulate(c);
  const auto path = fs::path(MGPA_TEST_TMP) / "io" / "gwas_rt.tsv";
  write_gwas(sim.gwas, path);
  const auto back = load_gwas(path);
  EXPECT_EQ(back.snp_ids(), sim.gwas.snp_ids());
  EXPECT_EQ(back.trait_names(), sim.gwas.trait_names());
  EXPECT_EQ(back.values(), sim.gwas.values());
}

TEST(Annotations, ThresholdScores) {
  const auto path = write_file("io", "scores.tsv", "snp_id\tBlood\nrs1\t0.49\nrs2\t0.50\nrs3\t0.51\n");
  const auto a = load_annotations(path, 0.5);
  EXPECT_EQ(a.values()(0, 0), 0);
  EXPECT_EQ(a.values()(1, 0), 1);
  EXPECT_EQ(a.values()(2, 0), 1);
  const auto zero = load_annotations(path, 0.0);
  EXPECT_EQ(zero.values().cast<int>().sum(), 3);
}

TEST(Annotations, NonBinaryWithoutThresholdRejected) {
  const auto path = write_file("io", "scores2.tsv", "snp_id\tBlood\nrs1\t0.49\n");
  EXPECT_THROW(load_annotations(path), DataError);
}

TEST(Annotations, BinaryPassthroughAndRoundTrip) {
  SimConfig c;
  c.snps = 800;
  const auto sim = simulate(c);
  const auto path = fs::path(MGPA_TEST_TMP) / "io" / "annot_rt.tsv";
  write_annotations(sim.annotations, path);
  const auto back = load_annotations(path);
  EXPECT_EQ(back.names(), sim.annotations.names());
  EXPECT_EQ(back.snp_ids(), sim.annotations.snp_ids());
  EXPECT_EQ(back.values(), sim.annotations.values());
}

TEST(FitReport, WritesAllFilesAndReloads) {
  SimConfig c;
  c.snps = 2000;
  c.annotations = 8;
  const auto sim = simulate(c);
  const auto config = EmConfig::defaults_for(c.snps);
  const auto result = fit(sim.gwas, sim.annotations, config);
  const auto base = fit_baseline(sim.gwas, config, sim.annotations.names());
  const auto pr = prioritize(result.posteriors, sim.gwas.snp_ids(), {"P1", "P2"}, {0.05}, {0.2});
  const auto bpr = prioritize(base.posteriors, sim.gwas.snp_ids(), {"P1", "P2"}, {0.05}, {0.2});
  const auto dir = oracle::fresh_dir("fit_report");
  write_fit_report({result, pr, sim.gwas, &base, &bpr, {{"note", "test"}}}, dir);
  for (const char* name : {"summary.json", "summary.tsv", "tree.txt", "snps.tsv", "trace.tsv"}) {
    EXPECT_TRUE(fs::exists(dir / name)) << name;
  }
  const auto snps = read_table(dir / "snps.tsv");
  EXPECT_EQ(snps.rows.size(), c.snps);
  EXPECT_TRUE(snps.find_column("post_11").has_value());
  EXPECT_TRUE(snps.find_column("fdr_P1_P2").has_value());
  EXPECT_TRUE(snps.find_column("baseline_fdr_P1").has_value());

  const auto loaded = load_fit_report(dir);
  EXPECT_EQ(loaded.snp_ids, sim.gwas.snp_ids());
  EXPECT_EQ(loaded.alpha, result.params.alpha());
  EXPECT_EQ(loaded.selected_annotations, selected_annotations(result.tree));
  EXPECT_EQ(loaded.posteriors, result.posteriors.values());
  EXPECT_EQ(loaded.fdr, pr.fdr);
  EXPECT_TRUE(loaded.has_baseline);
  EXPECT_EQ(loaded.baseline_fdr, bpr.fdr);

  const auto trace = read_table(dir / "trace.tsv", "model");
  EXPECT_EQ(trace.header, (std::vector<std::string>{"model", "stage", "iteration", "loglik", "alpha_P1",
                                                    "alpha_P2", "accepted"}));
  const auto summary = read_table(dir / "summary.tsv", "model");
  EXPECT_EQ(summary.rows.size(), 4u);
  EXPECT_EQ(summary.rows[0][0], "multi_gpa_tree");
  EXPECT_EQ(summary.rows[3][0], "baseline");
}

TEST(FitReport, SingleLeafHasNoSelectedAnnotations) {
  SimConfig c;
  c.snps = 600;
  const auto sim = simulate(c);
  const auto base = fit_baseline(sim.gwas, EmConfig::defaults_for(c.snps), sim.annotations.names());
  const auto pr = prioritize(base.posteriors, sim.gwas.snp_ids(), {"P1", "P2"}, {0.05}, {});
  const auto dir = oracle::fresh_dir("fit_report_leaf");
  write_fit_report({base, pr, sim.gwas}, dir);
  const auto loaded = load_fit_report(dir);
  EXPECT_TRUE(loaded.selected_annotations.empty());
  EXPECT_FALSE(loaded.has_baseline);
}

TEST(FitReport, UnwritableDirectoryThrows) {
  SimConfig c;
  c.snps = 600;
  const auto sim = simulate(c);
  const auto base = fit_baseline(sim.gwas, EmConfig::defaults_for(c.snps), sim.annotations.names());
  const auto pr = prioritize(base.posteriors, sim.gwas.snp_ids(), {"P1", "P2"}, {0.05}, {});
  const auto blocker = write_file("io", "not_a_dir", "x");
  EXPECT_THROW(write_fit_report({base, pr, sim.gwas}, blocker / "sub"), IoError);
}
