#include "mgpatree/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "mgpatree/errors.hpp"
#include "mgpatree/fdr.hpp"

namespace mgpa {

namespace fs = std::filesystem;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, RngStream stream)
    : engine_(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream)))) {}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::uniform_positive() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ConfigError("Rng::below requires n > 0");
  const std::uint64_t threshold = (0 - n) % n;
  while (true) {
    const std::uint64_t x = engine_();
    if (x >= threshold) return x % n;
  }
}

std::vector<std::size_t> Rng::sample(std::size_t n, std::size_t k) {
  if (k > n) throw ConfigError("cannot sample more items than available");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

std::size_t SimConfig::block_size() const {
  return static_cast<std::size_t>(std::ceil(annotated_fraction * static_cast<double>(snps) - 1e-9));
}

void SimConfig::validate() const {
  if (snps < 1) throw ConfigError("M must be >= 1");
  if (annotations < kTrueAnnotationCount) {
    throw ConfigError("K must be >= 6: the design needs 6 true annotations, got K = " +
                      std::to_string(annotations));
  }
  if (!(annotated_fraction > 0.0 && annotated_fraction < 1.0)) throw ConfigError("u must be in (0, 1)");
  if (!(overlap >= 0.0 && overlap <= 1.0)) throw ConfigError("v must be in [0, 1]");
  if (alpha.size() != 2) throw ConfigError("the simulation design has exactly two traits");
  for (double a : alpha) {
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("alpha must be in (0, 1)");
  }
  if (!(noise_min >= 0.0 && noise_min <= noise_max && noise_max <= 1.0)) {
    throw ConfigError("noise density range must satisfy 0 <= min <= max <= 1");
  }
  if (6 * block_size() > snps) {
    throw ConfigError("6 * ceil(u M) = " + std::to_string(6 * block_size()) + " exceeds M = " +
                      std::to_string(snps));
  }
}

nlohmann::json SimConfig::to_json() const {
  return {{"snps", snps},         {"annotations", annotations},
          {"u", annotated_fraction}, {"v", overlap},
          {"alpha", alpha},       {"noise_density", {noise_min, noise_max}},
          {"seed", seed}};
}

std::size_t SimTruth::count(int s) const {
  return static_cast<std::size_t>(std::count(state.begin(), state.end(), s));
}

Simulation simulate(const SimConfig& config) {
  config.validate();
  const std::size_t m = config.snps;
  const std::size_t block = config.block_size();
  const auto shared = static_cast<std::size_t>(std::llround(config.overlap * static_cast<double>(block)));
  const auto k_total = static_cast<Eigen::Index>(config.annotations);

  BinaryMatrix a = BinaryMatrix::Zero(static_cast<Eigen::Index>(m), k_total);
  Rng ann_rng(config.seed, RngStream::kAnnotations);
  const std::vector<std::size_t> order = ann_rng.sample(m, m);
  std::size_t cursor = 0;

  // A1, A3, A5: disjoint blocks.
  std::vector<std::vector<std::size_t>> primary(3);
  for (int p = 0; p < 3; ++p) {
    primary[static_cast<std::size_t>(p)].assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                                order.begin() + static_cast<std::ptrdiff_t>(cursor + block));
    cursor += block;
    for (std::size_t i : primary[static_cast<std::size_t>(p)]) a(static_cast<Eigen::Index>(i), 2 * p) = 1;
  }
  // A2, A4, A6: `shared` members of the partner plus never-used SNPs.
  for (int p = 0; p < 3; ++p) {
    const auto& partner = primary[static_cast<std::size_t>(p)];
    const Eigen::Index col = 2 * p + 1;
    for (std::size_t j : ann_rng.sample(partner.size(), shared)) {
      a(static_cast<Eigen::Index>(partner[j]), col) = 1;
    }
    for (std::size_t j = 0; j < block - shared; ++j) a(static_cast<Eigen::Index>(order[cursor++]), col) = 1;
  }

  Rng noise_rng(config.seed, RngStream::kNoise);
  for (Eigen::Index k = kTrueAnnotationCount; k < k_total; ++k) {
    const double density = config.noise_min + (config.noise_max - config.noise_min) * noise_rng.uniform();
    const auto count = static_cast<std::size_t>(std::llround(density * static_cast<double>(m)));
    for (std::size_t i : noise_rng.sample(m, count)) a(static_cast<Eigen::Index>(i), k) = 1;
  }

  SimTruth truth;
  truth.alpha = config.alpha;
  truth.state.resize(m);
  truth.in_l1.resize(m);
  truth.in_l2.resize(m);
  truth.in_l3.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    truth.in_l1[i] = a(r, 0) && a(r, 1);
    truth.in_l2[i] = a(r, 2) && a(r, 3);
    truth.in_l3[i] = a(r, 4) && a(r, 5);
    // Blocks are disjoint, so at most one L-set holds; L3 takes precedence regardless.
    truth.state[i] = truth.in_l3[i] ? 3 : truth.in_l1[i] ? 1 : truth.in_l2[i] ? 2 : 0;
  }

  Rng p_rng(config.seed, RngStream::kPValues);
  Matrix p(static_cast<Eigen::Index>(m), 2);
  for (std::size_t i = 0; i < m; ++i) {
    for (int d = 0; d < 2; ++d) {
      const double u = p_rng.uniform_positive();
      const bool non_null = (truth.state[i] >> d) & 1;
      // Beta(alpha, 1) by inversion of F(y) = y^alpha.
      const double y = non_null ? std::pow(u, 1.0 / config.alpha[static_cast<std::size_t>(d)]) : u;
      p(static_cast<Eigen::Index>(i), d) = PValuePanel::clamp(y);
    }
  }

  std::vector<std::string> ids(m);
  for (std::size_t i = 0; i < m; ++i) ids[i] = "snp" + std::to_string(i + 1);
  std::vector<std::string> names;
  for (Eigen::Index k = 0; k < k_total; ++k) names.push_back("A" + std::to_string(k + 1));

  return Simulation{PValuePanel(ids, {"P1", "P2"}, std::move(p)),
                    AnnotationPanel(ids, std::move(names), std::move(a)), std::move(truth)};
}

void write_truth(const SimTruth& truth, const std::vector<std::string>& snp_ids, const fs::path& path) {
  if (snp_ids.size() != truth.state.size()) throw ShapeError("truth and SNP ids differ in length");
  const StateSpace space(static_cast<int>(truth.alpha.size()));
  std::string out = "snp_id\ttrue_state\tin_L1\tin_L2\tin_L3\n";
  for (std::size_t i = 0; i < snp_ids.size(); ++i) {
    out += snp_ids[i];
    out += '\t';
    out += space.label(truth.state[i]);
    out += truth.in_l1[i] ? "\t1" : "\t0";
    out += truth.in_l2[i] ? "\t1" : "\t0";
    out += truth.in_l3[i] ? "\t1" : "\t0";
    out += '\n';
  }
  write_text(path, out);
}

void write_simulation(const Simulation& sim, const SimConfig& config, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_gwas(sim.gwas, dir / "gwas.tsv");
  write_annotations(sim.annotations, dir / "annotations.tsv");
  write_truth(sim.truth, sim.gwas.snp_ids(), dir / "truth.tsv");
  write_text(dir / "simulation.json", config.to_json().dump(2) + "\n");
}

LoadedTruth load_truth(const fs::path& path) {
  const Table table = read_table(path);
  const std::size_t state_col = table.column("true_state");
  const std::size_t l1 = table.column("in_L1");
  const std::size_t l2 = table.column("in_L2");
  const std::size_t l3 = table.column("in_L3");

  LoadedTruth out;
  out.truth.alpha = SimConfig{}.alpha;
  const fs::path config_path = path.parent_path() / "simulation.json";
  if (fs::exists(config_path)) {
    std::ifstream in(config_path);
    try {
      out.truth.alpha = nlohmann::json::parse(in).at("alpha").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(config_path.string() + ": " + e.what());
    }
  }
  const StateSpace space(static_cast<int>(out.truth.alpha.size()));
  const auto labels = space.labels();
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto it = std::find(labels.begin(), labels.end(), row[state_col]);
    if (it == labels.end()) {
      throw DataError(path.string() + ":" + std::to_string(table.line_numbers[r]) + ": unknown state '" +
                      row[state_col] + "'");
    }
    out.snp_ids.push_back(row[0]);
    out.truth.state.push_back(static_cast<int>(it - labels.begin()));
    out.truth.in_l1.push_back(row[l1] == "1");
    out.truth.in_l2.push_back(row[l2] == "1");
    out.truth.in_l3.push_back(row[l3] == "1");
  }
  return out;
}

std::optional<double> auc(std::span<const double> fdr, const std::vector<bool>& positive) {
  if (fdr.size() != positive.size()) throw ShapeError("fdr and labels differ in length");
  const auto pos_total = static_cast<double>(std::count(positive.begin(), positive.end(), true));
  const double neg_total = static_cast<double>(positive.size()) - pos_total;
  if (pos_total == 0.0 || neg_total == 0.0) return std::nullopt;

  std::vector<std::size_t> order(fdr.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fdr[a] < fdr[b]; });
  // Sweep tie groups from most to least confident; every count is an exact
  // integer (or half-integer) so the sum is exact.
  double area = 0.0;
  double neg_seen = 0.0;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start;
    double pos_group = 0.0, neg_group = 0.0;
    while (end < order.size() && fdr[order[end]] == fdr[order[start]]) {
      (positive[order[end]] ? pos_group : neg_group) += 1.0;
      ++end;
    }
    area += pos_group * (neg_total - neg_seen - neg_group) + 0.5 * pos_group * neg_group;
    neg_seen += neg_group;
    start = end;
  }
  return area / (pos_total * neg_total);
}

SelectionMetrics selection_metrics(const std::vector<std::string>& selected) {
  std::set<std::string> truth;
  for (int k = 1; k <= kTrueAnnotationCount; ++k) truth.insert("A" + std::to_string(k));
  const std::set<std::string> chosen(selected.begin(), selected.end());
  SelectionMetrics out;
  out.exact_recovery = chosen == truth;
  if (!chosen.empty()) {
    const auto hits = static_cast<double>(
        std::count_if(chosen.begin(), chosen.end(), [&](const std::string& s) { return truth.count(s) > 0; }));
    const auto n = static_cast<double>(chosen.size());
    out.true_proportion = hits / n;
    out.noise_proportion = (n - hits) / n;
  }
  return out;
}

EvaluationInput evaluation_input(const FitResult& fit, const std::vector<std::string>& trait_names) {
  EvaluationInput input;
  input.alpha = fit.params.alpha();
  input.selected_annotations = selected_annotations(fit.tree);
  for (const auto& target : default_targets(fit.params.traits())) {
    input.target_names.push_back(target.name(trait_names));
    input.fdr.push_back(local_fdr(fit.posteriors, target));
  }
  return input;
}

MetricsReport evaluate(const EvaluationInput& input, const SimTruth& truth, double level) {
  const int traits = static_cast<int>(truth.alpha.size());
  const auto targets = default_targets(traits);
  if (input.alpha.size() != truth.alpha.size() || input.fdr.size() != targets.size()) {
    throw DataError("fit and truth disagree on the number of traits");
  }
  const std::size_t m = truth.state.size();
  MetricsReport report;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto& fdr = input.fdr[t];
    if (fdr.size() != m) throw DataError("fit and truth disagree on the number of SNPs");
    int mask = 0;
    for (int d : targets[t].traits) mask |= 1 << d;
    std::vector<bool> positive(m);
    for (std::size_t i = 0; i < m; ++i) positive[i] = (truth.state[i] & mask) == mask;

    TargetMetrics tm;
    tm.target = t < input.target_names.size() ? input.target_names[t] : std::to_string(t);
    tm.positives = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
    tm.auc = auc(fdr, positive);

    auto summarize = [&](const std::vector<bool>& flags, std::size_t& declared,
                         std::optional<double>& power, double& fdp) {
      std::size_t tp = 0;
      declared = 0;
      for (std::size_t i = 0; i < m; ++i) {
        if (!flags[i]) continue;
        ++declared;
        if (positive[i]) ++tp;
      }
      if (tm.positives > 0) power = static_cast<double>(tp) / static_cast<double>(tm.positives);
      fdp = static_cast<double>(declared - tp) / static_cast<double>(std::max<std::size_t>(1, declared));
    };
    const auto local = declare_at_lfdr(fdr, level);
    summarize(local, tm.declared, tm.power, tm.fdp);
    if (tm.declared > 0) {
      double sum = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        if (local[i]) sum += fdr[i];
      }
      tm.mean_declared_lfdr = sum / static_cast<double>(tm.declared);
    }
    summarize(control_global_fdr(fdr, level), tm.declared_global, tm.power_global, tm.fdp_global);
    report.targets.push_back(std::move(tm));
  }
  report.alpha_hat = input.alpha;
  for (std::size_t d = 0; d < input.alpha.size(); ++d) {
    report.alpha_error.push_back(input.alpha[d] - truth.alpha[d]);
  }
  report.selection = selection_metrics(input.selected_annotations);
  return report;
}

MetricsReport evaluate(const FitResult& fit, const SimTruth& truth, double level,
                       const std::vector<std::string>& trait_names) {
  if (fit.posteriors.rows() != truth.state.size()) throw DataError("fit and truth differ in SNP count");
  return evaluate(evaluation_input(fit, trait_names), truth, level);
}

namespace {

using Cell = std::optional<double>;

std::vector<Cell> metric_cells(const MetricsReport& r) {
  std::vector<Cell> cells;
  for (const auto& t : r.targets) {
    cells.insert(cells.end(), {t.auc, t.power, t.fdp, t.mean_declared_lfdr, t.power_global, t.fdp_global});
  }
  for (std::size_t d = 0; d < r.alpha_hat.size(); ++d) {
    cells.push_back(r.alpha_hat[d]);
    cells.push_back(r.alpha_error[d]);
  }
  cells.push_back(r.selection.exact_recovery ? 1.0 : 0.0);
  cells.push_back(r.selection.noise_proportion);
  cells.push_back(r.selection.true_proportion);
  return cells;
}

std::string format_cell(const Cell& c) { return c ? format_double(*c) : "NA"; }

}  // namespace

std::string metrics_table(const std::vector<MetricsRow>& rows) {
  std::string out = "replicate\tsource\tmethod";
  if (rows.empty()) return out + "\n";
  const MetricsReport& first = rows.front().report;
  for (const auto& t : first.targets) {
    for (const char* metric : {"auc", "power", "fdp", "mean_lfdr", "power_global", "fdp_global"}) {
      out += std::string("\t") + metric + "_" + t.target;
    }
  }
  for (std::size_t d = 0; d < first.alpha_hat.size(); ++d) {
    const std::string trait = d < first.targets.size() ? first.targets[d].target : std::to_string(d + 1);
    out += "\talpha_hat_" + trait + "\talpha_err_" + trait;
  }
  out += "\texact_recovery\tnoise_prop\ttrue_prop\n";

  std::vector<std::string> methods;
  for (const auto& row : rows) {
    out += row.replicate + "\t" + row.source + "\t" + row.method;
    for (const auto& c : metric_cells(row.report)) out += "\t" + format_cell(c);
    out += "\n";
    if (std::find(methods.begin(), methods.end(), row.method) == methods.end()) methods.push_back(row.method);
  }

  for (const auto& method : methods) {
    std::vector<std::vector<double>> columns;
    for (const auto& row : rows) {
      if (row.method != method) continue;
      const auto cells = metric_cells(row.report);
      columns.resize(std::max(columns.size(), cells.size()));
      for (std::size_t c = 0; c < cells.size(); ++c) {
        if (cells[c]) columns[c].push_back(*cells[c]);
      }
    }
    std::string mean_row = "mean\tall\t" + method;
    std::string sd_row = "sd\tall\t" + method;
    for (const auto& values : columns) {
      Cell mean, sd;
      if (!values.empty()) {
        mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
      }
      if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - *mean) * (v - *mean);
        sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
      }
      mean_row += "\t" + format_cell(mean);
      sd_row += "\t" + format_cell(sd);
    }
    out += mean_row + "\n" + sd_row + "\n";
  }
  return out;
}

}  // namespace mgpa
