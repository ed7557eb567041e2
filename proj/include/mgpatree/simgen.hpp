#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mgpatree/em.hpp"
#include "mgpatree/io.hpp"
#include "mgpatree/model.hpp"

namespace mgpa {

// Independent random streams, one per purpose, so each group of draws can be
// reproduced on its own. Engine: mt19937_64 seeded through splitmix64.
enum class RngStream : std::uint64_t { kAnnotations = 1, kNoise = 2, kPValues = 3 };

class Rng {
 public:
  Rng(std::uint64_t seed, RngStream stream);

  double uniform();              // [0, 1), 53-bit resolution
  double uniform_positive();     // (0, 1]
  std::uint64_t below(std::uint64_t n);  // uniform on [0, n), unbiased

  // k distinct indices from [0, n) in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Two-trait design: L1 = A1 & A2 drives trait 1, L2 = A3 & A4 trait 2, and
// L3 = A5 & A6 both; A7..AK are noise.
struct SimConfig {
  std::size_t snps = 10000;
  int annotations = 25;
  double annotated_fraction = 0.10;  // u: share of SNPs in each of A1..A6
  double overlap = 0.50;             // v: |A_j & A_partner| / |A_j|
  std::vector<double> alpha = {0.4, 0.3};
  double noise_min = 0.1;
  double noise_max = 0.3;
  std::uint64_t seed = 1;

  std::size_t block_size() const;  // ceil(u M)
  void validate() const;
  nlohmann::json to_json() const;
};

inline constexpr int kTrueAnnotationCount = 6;

struct SimTruth {
  std::vector<int> state;  // canonical state index per SNP
  std::vector<std::uint8_t> in_l1, in_l2, in_l3;
  std::vector<double> alpha;

  std::size_t count(int s) const;
};

struct Simulation {
  PValuePanel gwas;
  AnnotationPanel annotations;
  SimTruth truth;
};

Simulation simulate(const SimConfig& config);

// gwas.tsv, annotations.tsv, truth.tsv and simulation.json under `dir`.
void write_simulation(const Simulation& sim, const SimConfig& config, const std::filesystem::path& dir);
void write_truth(const SimTruth& truth, const std::vector<std::string>& snp_ids,
                 const std::filesystem::path& path);

struct LoadedTruth {
  std::vector<std::string> snp_ids;
  SimTruth truth;
};
// Reads truth.tsv; alpha comes from simulation.json beside it when present.
LoadedTruth load_truth(const std::filesystem::path& path);

// Area under the ROC curve when SNPs are ranked by ascending local fdr; tied
// scores count one half. Undefined without both classes.
std::optional<double> auc(std::span<const double> fdr, const std::vector<bool>& positive);

struct TargetMetrics {
  std::string target;
  std::size_t positives = 0;
  std::optional<double> auc;
  // Per-SNP thresholding at the lfdr level.
  std::size_t declared = 0;
  std::optional<double> power;
  double fdp = 0.0;
  std::optional<double> mean_declared_lfdr;
  // Direct posterior probability rule at the same level.
  std::size_t declared_global = 0;
  std::optional<double> power_global;
  double fdp_global = 0.0;
};

struct SelectionMetrics {
  bool exact_recovery = false;
  std::optional<double> noise_proportion;
  std::optional<double> true_proportion;
};

struct MetricsReport {
  std::vector<TargetMetrics> targets;
  std::vector<double> alpha_hat;
  std::vector<double> alpha_error;  // alpha_hat - alpha_true
  SelectionMetrics selection;
};

struct EvaluationInput {
  std::vector<double> alpha;
  std::vector<std::string> selected_annotations;
  std::vector<std::string> target_names;
  std::vector<std::vector<double>> fdr;  // per target, in default_targets order
};

EvaluationInput evaluation_input(const FitResult& fit, const std::vector<std::string>& trait_names);

MetricsReport evaluate(const EvaluationInput& input, const SimTruth& truth, double level);
MetricsReport evaluate(const FitResult& fit, const SimTruth& truth, double level,
                       const std::vector<std::string>& trait_names = {"P1", "P2"});

// True annotations are A1..A6; anything else selected counts as noise.
SelectionMetrics selection_metrics(const std::vector<std::string>& selected);

struct MetricsRow {
  std::string replicate;
  std::string source;
  std::string method;
  MetricsReport report;
};

// Per-replicate rows followed by mean and sd rows per method.
std::string metrics_table(const std::vector<MetricsRow>& rows);

}  // namespace mgpa
