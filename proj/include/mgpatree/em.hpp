#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mgpatree/model.hpp"
#include "mgpatree/mvtree.hpp"

namespace mgpa {

struct EmConfig {
  double alpha_init = 0.1;
  int max_iter_stage1 = 1000;
  int max_iter_stage2 = 200;
  double tol_loglik = 1e-4;  // absolute change in incomplete log-likelihood
  double tol_alpha = 1e-6;   // absolute change in every alpha_d
  TreeConfig tree;

  static EmConfig defaults_for(std::size_t snps);
  void validate() const;
};

struct TraceEntry {
  int stage = 1;
  int iteration = 0;  // 0 is the initial state
  double loglik = 0.0;
  std::vector<double> alpha;
  bool accepted = true;

  bool operator==(const TraceEntry&) const = default;
};

enum class StopReason { kConverged, kRejected, kIterationCap };

std::string to_string(StopReason reason);

struct Stage1Result {
  MixtureParams params;
  ProbMatrix priors;
  std::vector<TraceEntry> trace;
  StopReason stop = StopReason::kIterationCap;
  int iterations = 0;
  // Annotation indices dropped from the linear design as linearly dependent.
  std::vector<int> dropped_annotations;
  // Traits whose alpha update had no non-null weight in some iteration.
  std::vector<int> zero_weight_traits;
  // Consecutive log-likelihood decreases larger than 1e-6.
  int monotonicity_violations = 0;

  bool converged() const { return stop == StopReason::kConverged; }
};

struct FitResult {
  MixtureParams params;
  AnnotationTree tree;
  ProbMatrix priors;
  ProbMatrix posteriors;
  std::vector<TraceEntry> trace;  // stage 1 entries followed by stage 2 entries
  Stage1Result stage1;
  StopReason stage2_stop = StopReason::kIterationCap;
  int stage2_accepted = 0;
  int stage2_rejected = 0;
  // Whether the first tree fit raised the likelihood over the stage-1 linear prior.
  bool first_tree_improved = true;

  // Log-likelihood of the returned state: the last accepted trace entry.
  double loglik() const {
    for (auto it = trace.rbegin(); it != trace.rend(); ++it) {
      if (it->accepted) return it->loglik;
    }
    return trace.back().loglik;
  }
  bool converged() const {
    return stage1.converged() && stage2_stop != StopReason::kIterationCap;
  }
};

ProbMatrix e_step(const Matrix& log_dens, const ProbMatrix& priors);
ProbMatrix e_step(const PValuePanel& y, const ProbMatrix& priors, const MixtureParams& params);

struct AlphaUpdate {
  MixtureParams params;
  std::vector<int> zero_weight_traits;
};

// Closed-form Beta(alpha, 1) update from posterior non-null weights; traits
// with no weight keep their previous value.
AlphaUpdate update_alpha(const Matrix& log_y, const ProbMatrix& posteriors,
                         const MixtureParams& previous);
AlphaUpdate update_alpha(const PValuePanel& y, const ProbMatrix& posteriors,
                         const MixtureParams& previous);

// Floors entries at 1e-6 and renormalizes each row to sum to one.
ProbMatrix project_to_simplex(Matrix raw);

// OLS of every posterior column on [1, a_1, ..., a_K] with a fixed design.
class LinearPriorModel {
 public:
  explicit LinearPriorModel(const BinaryMatrix& annotations);

  Matrix fitted(const ProbMatrix& posteriors) const;
  ProbMatrix fit(const ProbMatrix& posteriors) const { return project_to_simplex(fitted(posteriors)); }

  const std::vector<int>& dropped_annotations() const { return dropped_; }

 private:
  Matrix design_;
  Eigen::LLT<Matrix> gram_;
  std::vector<int> dropped_;
};

ProbMatrix fit_linear_prior(const ProbMatrix& posteriors, const AnnotationPanel& annotations);

Stage1Result run_stage1(const PValuePanel& y, const AnnotationPanel& annotations,
                        const EmConfig& config);
FitResult run_stage2(const PValuePanel& y, const AnnotationPanel& annotations,
                     const Stage1Result& stage1, const EmConfig& config);
FitResult fit(const PValuePanel& y, const AnnotationPanel& annotations, const EmConfig& config);

// Annotation-blind comparator: priors constant across SNPs (global mixture
// proportions), alpha estimated jointly; the tree is a single leaf.
FitResult fit_baseline(const PValuePanel& y, const EmConfig& config,
                       std::vector<std::string> annotation_names = {});

}  // namespace mgpa
