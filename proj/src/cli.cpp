#include "mgpatree/cli.hpp"

#include <algorithm>
#include <future>
#include <iostream>
#include <sstream>
#include <unordered_map>

#include <CLI11.hpp>

#include "mgpatree/em.hpp"
#include "mgpatree/errors.hpp"
#include "mgpatree/fdr.hpp"
#include "mgpatree/io.hpp"
#include "mgpatree/simgen.hpp"

namespace mgpa::cli {

namespace fs = std::filesystem;

namespace {

struct SimulateArgs {
  SimConfig config;
  std::string out_dir;
};

struct FitArgs {
  std::string gwas;
  std::string annot;
  std::optional<double> annot_threshold;
  double cp = 0.01;
  std::optional<std::size_t> min_leaf;
  int max_depth = 10;
  std::vector<double> fdr_levels{0.05};
  std::vector<double> lfdr_levels{0.20};
  std::string out_dir;
  bool baseline = false;
  int max_iter_stage1 = 1000;
  int max_iter_stage2 = 200;
  double tol_loglik = 1e-4;
  double tol_alpha = 1e-6;
};

struct PrioritizeArgs {
  std::string fit_dir;
  std::vector<double> fdr_levels{0.05};
  std::vector<double> lfdr_levels{0.20};
  std::string out;
};

struct EvaluateArgs {
  std::vector<std::string> fit_dirs;
  std::vector<std::string> truths;
  double lfdr_level = 0.20;
  std::string out;
  unsigned threads = 1;
};

// Annotations reordered to the GWAS SNP order; the id sets must agree.
AnnotationPanel align(const PValuePanel& gwas, const AnnotationPanel& annotations) {
  if (gwas.snp_ids() == annotations.snp_ids()) return annotations;
  if (gwas.snps() != annotations.snps()) {
    throw DataError("GWAS has " + std::to_string(gwas.snps()) + " SNPs but annotations have " +
                    std::to_string(annotations.snps()));
  }
  std::unordered_map<std::string, Eigen::Index> index;
  for (std::size_t i = 0; i < annotations.snps(); ++i) {
    index.emplace(annotations.snp_ids()[i], static_cast<Eigen::Index>(i));
  }
  BinaryMatrix values(annotations.values().rows(), annotations.values().cols());
  for (std::size_t i = 0; i < gwas.snps(); ++i) {
    const auto it = index.find(gwas.snp_ids()[i]);
    if (it == index.end()) throw DataError("SNP " + gwas.snp_ids()[i] + " has no annotation row");
    values.row(static_cast<Eigen::Index>(i)) = annotations.values().row(it->second);
  }
  return AnnotationPanel(gwas.snp_ids(), annotations.names(), std::move(values));
}

std::string join(const std::vector<std::string>& items, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? sep : "") + items[i];
  return out;
}

void print_counts(std::ostream& out, const std::string& model, const PrioritizationReport& report) {
  for (const auto& decl : report.declarations) {
    out << model << " " << to_string(decl.rule) << "@" << format_double(decl.level) << ":";
    for (std::size_t t = 0; t < report.targets.size(); ++t) {
      out << " " << report.target_names[t] << "=" << decl.counts[t];
    }
    out << "\n";
  }
}

void check_levels(const std::vector<double>& levels, const char* flag) {
  for (double level : levels) {
    if (!(level > 0.0 && level < 1.0)) {
      throw ConfigError(std::string(flag) + " must be in (0, 1), got " + format_double(level));
    }
  }
}

int cmd_simulate(const SimulateArgs& args, std::ostream& out) {
  const Simulation sim = simulate(args.config);
  write_simulation(sim, args.config, args.out_dir);
  const StateSpace space(2);
  for (int s = 0; s < space.size(); ++s) {
    out << "state " << space.label(s) << ": " << sim.truth.count(s) << "\n";
  }
  const auto& a = sim.annotations.values();
  for (int p = 0; p < 3; ++p) {
    const auto both = (a.col(2 * p).array() * a.col(2 * p + 1).array()).cast<int>().sum();
    out << "|A" << 2 * p + 1 << "&A" << 2 * p + 2 << "| = " << both << "\n";
  }
  return kSuccess;
}

int cmd_fit(const FitArgs& args, std::ostream& out) {
  check_levels(args.fdr_levels, "--fdr-level");
  check_levels(args.lfdr_levels, "--lfdr-level");
  const PValuePanel gwas = load_gwas(args.gwas);
  const AnnotationPanel annotations = align(gwas, load_annotations(args.annot, args.annot_threshold));

  EmConfig config = EmConfig::defaults_for(gwas.snps());
  config.tree.cp = args.cp;
  if (args.min_leaf) config.tree.min_leaf = *args.min_leaf;
  config.tree.max_depth = args.max_depth;
  config.max_iter_stage1 = args.max_iter_stage1;
  config.max_iter_stage2 = args.max_iter_stage2;
  config.tol_loglik = args.tol_loglik;
  config.tol_alpha = args.tol_alpha;
  config.validate();

  const FitResult result = fit(gwas, annotations, config);
  const PrioritizationReport prio =
      prioritize(result.posteriors, gwas.snp_ids(), gwas.trait_names(), args.fdr_levels, args.lfdr_levels);

  std::optional<FitResult> baseline;
  std::optional<PrioritizationReport> baseline_prio;
  if (args.baseline) {
    baseline = fit_baseline(gwas, config, annotations.names());
    baseline_prio = prioritize(baseline->posteriors, gwas.snp_ids(), gwas.trait_names(), args.fdr_levels,
                               args.lfdr_levels);
  }

  nlohmann::json echo = {{"gwas", args.gwas},
                         {"annotations", args.annot},
                         {"cp", config.tree.cp},
                         {"min_leaf", config.tree.min_leaf},
                         {"max_depth", config.tree.max_depth},
                         {"alpha_init", config.alpha_init},
                         {"max_iter_stage1", config.max_iter_stage1},
                         {"max_iter_stage2", config.max_iter_stage2},
                         {"tol_loglik", config.tol_loglik},
                         {"tol_alpha", config.tol_alpha},
                         {"baseline", args.baseline}};
  if (args.annot_threshold) echo["annot_threshold"] = *args.annot_threshold;

  FitReport report{result, prio, gwas, baseline ? &*baseline : nullptr,
                   baseline_prio ? &*baseline_prio : nullptr, echo};
  write_fit_report(report, args.out_dir);

  out << "alpha:";
  for (double a : result.params.alpha()) out << " " << format_double(a);
  out << "\nselected annotations: " << join(selected_annotations(result.tree), ",") << " ("
      << result.tree.leaf_count() << " leaves)\n";
  print_counts(out, "multi_gpa_tree", prio);
  if (baseline_prio) print_counts(out, "baseline", *baseline_prio);
  if (!result.converged()) {
    out << "warning: iteration cap reached before convergence\n";
    return kNotConverged;
  }
  return kSuccess;
}

int cmd_prioritize(const PrioritizeArgs& args, std::ostream& out) {
  check_levels(args.fdr_levels, "--fdr-level");
  check_levels(args.lfdr_levels, "--lfdr-level");
  const LoadedFit loaded = load_fit_report(args.fit_dir);
  const ProbMatrix posteriors(loaded.posteriors, ProbRole::kPosterior);
  const PrioritizationReport report =
      prioritize(posteriors, loaded.snp_ids, loaded.trait_names, args.fdr_levels, args.lfdr_levels);

  std::string text = "snp_id";
  for (const auto& t : report.target_names) text += "\tfdr_" + t;
  for (const auto& decl : report.declarations) {
    for (const auto& t : report.target_names) {
      text += "\t" + to_string(decl.rule) + "_" + format_double(decl.level) + "_" + t;
    }
  }
  text += "\n";
  for (std::size_t i = 0; i < report.snp_ids.size(); ++i) {
    text += report.snp_ids[i];
    for (const auto& fdr : report.fdr) text += "\t" + format_double(fdr[i]);
    for (const auto& decl : report.declarations) {
      for (const auto& flags : decl.flags) text += flags[i] ? "\t1" : "\t0";
    }
    text += "\n";
  }
  write_text(args.out, text);
  print_counts(out, "multi_gpa_tree", report);
  return kSuccess;
}

std::vector<MetricsRow> evaluate_one(const std::string& fit_dir, const std::string& truth_path,
                                     std::size_t replicate, double level) {
  const LoadedFit fit = load_fit_report(fit_dir);
  const LoadedTruth truth = load_truth(truth_path);
  if (fit.snp_ids != truth.snp_ids) {
    throw DataError("truth " + truth_path + " does not match the SNPs of fit " + fit_dir);
  }
  std::vector<MetricsRow> rows;
  const std::string rep = std::to_string(replicate);
  EvaluationInput input{fit.alpha, fit.selected_annotations, fit.target_names, fit.fdr};
  rows.push_back({rep, fit_dir, "multi_gpa_tree", evaluate(input, truth.truth, level)});
  if (fit.has_baseline) {
    EvaluationInput base{fit.baseline_alpha, {}, fit.target_names, fit.baseline_fdr};
    rows.push_back({rep, fit_dir, "baseline", evaluate(base, truth.truth, level)});
  }
  return rows;
}

int cmd_evaluate(const EvaluateArgs& args, std::ostream& out) {
  if (args.truths.size() != 1 && args.truths.size() != args.fit_dirs.size()) {
    throw ConfigError("--truth must be given once or once per --fit-dir");
  }
  const std::size_t n = args.fit_dirs.size();
  std::vector<std::vector<MetricsRow>> per_fit(n);
  const std::size_t threads = std::max(1u, args.threads);
  for (std::size_t start = 0; start < n; start += threads) {
    std::vector<std::future<std::vector<MetricsRow>>> jobs;
    for (std::size_t i = start; i < std::min(n, start + threads); ++i) {
      const std::string& truth = args.truths.size() == 1 ? args.truths[0] : args.truths[i];
      jobs.push_back(std::async(threads > 1 ? std::launch::async : std::launch::deferred, evaluate_one,
                                args.fit_dirs[i], truth, i + 1, args.lfdr_level));
    }
    for (std::size_t j = 0; j < jobs.size(); ++j) per_fit[start + j] = jobs[j].get();
  }
  std::vector<MetricsRow> rows;
  for (auto& group : per_fit) rows.insert(rows.end(), group.begin(), group.end());
  const std::string table = metrics_table(rows);
  write_text(args.out, table);

  // Echo the aggregate rows.
  std::istringstream lines(table);
  std::string line;
  std::getline(lines, line);
  out << line << "\n";
  while (std::getline(lines, line)) {
    if (line.rfind("mean\t", 0) == 0 || line.rfind("sd\t", 0) == 0) out << line << "\n";
  }
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pleiotropy- and annotation-tree-guided prioritization of GWAS results", "mgpatree"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "Generate a simulated two-trait data set");
  simulate_cmd->add_option("--m", sim.config.snps, "Number of SNPs")->capture_default_str();
  simulate_cmd->add_option("--k", sim.config.annotations, "Number of annotations")->capture_default_str();
  simulate_cmd->add_option("--u", sim.config.annotated_fraction, "Fraction annotated in A1-A6")
      ->capture_default_str();
  simulate_cmd->add_option("--v", sim.config.overlap, "Overlap between paired true annotations")
      ->capture_default_str();
  simulate_cmd->add_option("--alpha1", sim.config.alpha[0], "Beta shape for trait 1")->capture_default_str();
  simulate_cmd->add_option("--alpha2", sim.config.alpha[1], "Beta shape for trait 2")->capture_default_str();
  simulate_cmd->add_option("--noise-min", sim.config.noise_min)->capture_default_str();
  simulate_cmd->add_option("--noise-max", sim.config.noise_max)->capture_default_str();
  simulate_cmd->add_option("--seed", sim.config.seed)->capture_default_str();
  simulate_cmd->add_option("--out-dir", sim.out_dir)->required();

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the two-stage model and prioritize SNPs");
  fit_cmd->add_option("--gwas", fit_args.gwas, "TSV: snp_id then one p-value column per trait")
      ->required()
      ->check(CLI::ExistingFile);
  fit_cmd->add_option("--annot", fit_args.annot, "TSV: snp_id then one column per annotation")
      ->required()
      ->check(CLI::ExistingFile);
  fit_cmd->add_option("--annot-threshold", fit_args.annot_threshold, "Binarize scores at this cutoff");
  fit_cmd->add_option("--cp", fit_args.cp, "Tree complexity parameter")->capture_default_str();
  fit_cmd->add_option("--min-leaf", fit_args.min_leaf, "Minimum SNPs per leaf (default max(20, 0.1% of M))");
  fit_cmd->add_option("--max-depth", fit_args.max_depth)->capture_default_str();
  fit_cmd->add_option("--fdr-level", fit_args.fdr_levels, "Global FDR level (repeatable)")
      ->capture_default_str();
  fit_cmd->add_option("--lfdr-level", fit_args.lfdr_levels, "Local fdr threshold (repeatable)")
      ->capture_default_str();
  fit_cmd->add_option("--out-dir", fit_args.out_dir)->required();
  fit_cmd->add_flag("--baseline", fit_args.baseline, "Also fit the annotation-blind model");
  fit_cmd->add_option("--max-iter-stage1", fit_args.max_iter_stage1)->capture_default_str();
  fit_cmd->add_option("--max-iter-stage2", fit_args.max_iter_stage2)->capture_default_str();
  fit_cmd->add_option("--tol-loglik", fit_args.tol_loglik)->capture_default_str();
  fit_cmd->add_option("--tol-alpha", fit_args.tol_alpha)->capture_default_str();

  PrioritizeArgs prio_args;
  auto* prio_cmd = app.add_subcommand("prioritize", "Re-declare SNPs from a fit at other levels");
  prio_cmd->add_option("--fit-dir", prio_args.fit_dir)->required()->check(CLI::ExistingDirectory);
  prio_cmd->add_option("--fdr-level", prio_args.fdr_levels)->capture_default_str();
  prio_cmd->add_option("--lfdr-level", prio_args.lfdr_levels)->capture_default_str();
  prio_cmd->add_option("--out", prio_args.out)->required();

  EvaluateArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score fits against simulation truth");
  eval_cmd->add_option("--fit-dir", eval_args.fit_dirs, "Fit output directory (repeatable)")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--truth", eval_args.truths, "truth.tsv, once or once per fit")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--lfdr-level", eval_args.lfdr_level)->capture_default_str();
  eval_cmd->add_option("--out", eval_args.out)->required();
  eval_cmd->add_option("--threads", eval_args.threads)->capture_default_str();

  std::vector<std::string> argv_store{"mgpatree"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsage;
  }

  try {
    if (*simulate_cmd) return cmd_simulate(sim, out);
    if (*fit_cmd) return cmd_fit(fit_args, out);
    if (*prio_cmd) return cmd_prioritize(prio_args, out);
    if (*eval_cmd) return cmd_evaluate(eval_args, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace mgpa::cli
