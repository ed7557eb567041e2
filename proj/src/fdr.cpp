#include "mgpatree/fdr.hpp"

#include <algorithm>
#include <numeric>

#include "mgpatree/errors.hpp"

namespace mgpa {

namespace {

void check_level(double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("FDR level must be in (0, 1)");
}

}  // namespace

void FdrTarget::validate(int trait_count) const {
  if (traits.empty()) throw ConfigError("FDR target lists no traits");
  if (kind == Kind::kMarginal && traits.size() != 1) {
    throw ConfigError("marginal FDR target must name exactly one trait");
  }
  for (std::size_t i = 0; i < traits.size(); ++i) {
    if (traits[i] < 0 || traits[i] >= trait_count) throw ConfigError("FDR target trait out of range");
    for (std::size_t j = 0; j < i; ++j) {
      if (traits[i] == traits[j]) throw ConfigError("FDR target repeats a trait");
    }
  }
}

std::string FdrTarget::name(const std::vector<std::string>& trait_names) const {
  std::string out;
  for (std::size_t i = 0; i < traits.size(); ++i) {
    if (i) out += '_';
    out += trait_names.at(static_cast<std::size_t>(traits[i]));
  }
  return out;
}

std::vector<FdrTarget> default_targets(int trait_count) {
  std::vector<FdrTarget> out;
  for (int d = 0; d < trait_count; ++d) out.push_back(FdrTarget::marginal(d));
  if (trait_count > 1) {
    std::vector<int> all(static_cast<std::size_t>(trait_count));
    std::iota(all.begin(), all.end(), 0);
    out.push_back(FdrTarget::joint(std::move(all)));
  }
  return out;
}

std::vector<double> local_fdr(const ProbMatrix& posteriors, const FdrTarget& target) {
  int trait_count = 0;
  while ((1 << trait_count) < posteriors.states()) ++trait_count;
  if ((1 << trait_count) != posteriors.states()) throw ShapeError("state count is not a power of two");
  target.validate(trait_count);

  int mask = 0;
  for (int d : target.traits) mask |= 1 << d;
  // Null for the target unless every targeted trait bit is set.
  std::vector<double> out(posteriors.rows());
  for (std::size_t i = 0; i < posteriors.rows(); ++i) {
    double null_mass = 0.0;
    for (int l = 0; l < posteriors.states(); ++l) {
      if ((l & mask) != mask) null_mass += posteriors(i, l);
    }
    out[i] = std::clamp(null_mass, 0.0, 1.0);
  }
  return out;
}

std::vector<bool> declare_at_lfdr(std::span<const double> fdr, double level) {
  check_level(level);
  std::vector<bool> out(fdr.size());
  for (std::size_t i = 0; i < fdr.size(); ++i) out[i] = fdr[i] <= level;
  return out;
}

std::vector<bool> control_global_fdr(std::span<const double> fdr, double level) {
  check_level(level);
  std::vector<std::size_t> order(fdr.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fdr[a] < fdr[b]; });

  // The running mean of ascending values is non-decreasing, so the answer is
  // the last tie-group boundary where it is still within level.
  std::size_t declared = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    sum += fdr[order[k]];
    const bool group_end = k + 1 == order.size() || fdr[order[k + 1]] != fdr[order[k]];
    if (!group_end) continue;
    if (sum / static_cast<double>(k + 1) > level) break;
    declared = k + 1;
  }
  std::vector<bool> out(fdr.size(), false);
  for (std::size_t k = 0; k < declared; ++k) out[order[k]] = true;
  return out;
}

std::string to_string(DeclarationRule rule) {
  return rule == DeclarationRule::kGlobalFdr ? "global" : "lfdr";
}

PrioritizationReport prioritize(const ProbMatrix& posteriors, const std::vector<std::string>& snp_ids,
                                const std::vector<std::string>& trait_names,
                                const std::vector<double>& global_levels,
                                const std::vector<double>& lfdr_levels) {
  if (snp_ids.size() != posteriors.rows()) throw ShapeError("SNP ids do not match posterior rows");
  if ((1 << trait_names.size()) != posteriors.states()) throw ShapeError("trait names do not match states");

  PrioritizationReport report;
  report.snp_ids = snp_ids;
  report.targets = default_targets(static_cast<int>(trait_names.size()));
  for (const auto& target : report.targets) {
    report.target_names.push_back(target.name(trait_names));
    report.fdr.push_back(local_fdr(posteriors, target));
  }
  auto declare = [&](DeclarationRule rule, double level) {
    Declaration decl{rule, level, {}, {}};
    for (const auto& fdr : report.fdr) {
      auto flags = rule == DeclarationRule::kGlobalFdr ? control_global_fdr(fdr, level)
                                                       : declare_at_lfdr(fdr, level);
      decl.counts.push_back(static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true)));
      decl.flags.push_back(std::move(flags));
    }
    report.declarations.push_back(std::move(decl));
  };
  for (double level : global_levels) declare(DeclarationRule::kGlobalFdr, level);
  for (double level : lfdr_levels) declare(DeclarationRule::kLocalFdr, level);
  return report;
}

}  // namespace mgpa
