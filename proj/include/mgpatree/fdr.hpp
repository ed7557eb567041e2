#pragma once

#include <span>
#include <string>
#include <vector>

#include "mgpatree/model.hpp"

namespace mgpa {

// A local fdr target: marginal for one trait, or joint over a set of traits.
struct FdrTarget {
  enum class Kind { kMarginal, kJoint };

  Kind kind = Kind::kMarginal;
  std::vector<int> traits;

  static FdrTarget marginal(int trait) { return {Kind::kMarginal, {trait}}; }
  static FdrTarget joint(std::vector<int> traits) { return {Kind::kJoint, std::move(traits)}; }

  void validate(int trait_count) const;
  // "P1" for a marginal target, "P1_P2" for a joint one.
  std::string name(const std::vector<std::string>& trait_names) const;

  bool operator==(const FdrTarget&) const = default;
};

// Every marginal target, then the joint target over all traits when D > 1.
std::vector<FdrTarget> default_targets(int trait_count);

// Posterior probability that the SNP is null for the target.
std::vector<double> local_fdr(const ProbMatrix& posteriors, const FdrTarget& target);

std::vector<bool> declare_at_lfdr(std::span<const double> fdr, double level);

// Direct posterior probability rule: the largest set of smallest local fdr
// values whose mean is at most `level`. Equal values enter or leave together.
std::vector<bool> control_global_fdr(std::span<const double> fdr, double level);

enum class DeclarationRule { kGlobalFdr, kLocalFdr };

std::string to_string(DeclarationRule rule);

struct Declaration {
  DeclarationRule rule = DeclarationRule::kGlobalFdr;
  double level = 0.05;
  std::vector<std::vector<bool>> flags;  // per target, per SNP
  std::vector<std::size_t> counts;       // per target
};

struct PrioritizationReport {
  std::vector<std::string> snp_ids;
  std::vector<FdrTarget> targets;
  std::vector<std::string> target_names;
  std::vector<std::vector<double>> fdr;  // per target, per SNP
  std::vector<Declaration> declarations;
};

PrioritizationReport prioritize(const ProbMatrix& posteriors, const std::vector<std::string>& snp_ids,
                                const std::vector<std::string>& trait_names,
                                const std::vector<double>& global_levels,
                                const std::vector<double>& lfdr_levels);

}  // namespace mgpa
