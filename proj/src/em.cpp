#include "mgpatree/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mgpatree/errors.hpp"

namespace mgpa {

namespace {

constexpr double kSimplexFloor = 1e-6;
constexpr double kMonotonicitySlack = 1e-6;
// Relative residual below which a design column counts as dependent.
constexpr double kRankTolerance = 1e-9;

void check_aligned(const PValuePanel& y, const AnnotationPanel& annotations) {
  if (y.snp_ids() != annotations.snp_ids()) {
    throw DataError("p-value and annotation panels list different SNP ids or orders");
  }
}

std::string dump_state(int stage, int iteration, const MixtureParams& params, double loglik) {
  std::ostringstream os;
  os << "non-finite log-likelihood in stage " << stage << " iteration " << iteration
     << " (loglik=" << loglik << ", alpha=";
  for (int d = 0; d < params.traits(); ++d) os << (d ? "," : "") << params.alpha(d);
  os << ")";
  return os.str();
}

TraceEntry trace_entry(int stage, int iteration, double loglik, const MixtureParams& params,
                       bool accepted = true) {
  return TraceEntry{stage, iteration, loglik, params.alpha(), accepted};
}

void merge_flags(std::vector<int>& into, const std::vector<int>& from) {
  for (int d : from) {
    if (std::find(into.begin(), into.end(), d) == into.end()) into.push_back(d);
  }
  std::sort(into.begin(), into.end());
}

// Shared EM loop for the linear-prior stage and the annotation-blind baseline.
Stage1Result run_linear_em(const PValuePanel& y, const BinaryMatrix& annotations,
                           const EmConfig& config) {
  config.validate();
  const StateSpace space(y.traits());
  const Matrix log_y = y.log_values();
  const LinearPriorModel model(annotations);

  MixtureParams params(std::vector<double>(static_cast<std::size_t>(y.traits()), config.alpha_init));
  ProbMatrix priors = ProbMatrix::constant(
      y.snps(), Vector::Constant(space.size(), 1.0 / space.size()), ProbRole::kPrior);
  Matrix log_dens = log_densities(log_y, params);
  double loglik = incomplete_loglik(log_dens, priors);

  Stage1Result result{params, priors, {}, StopReason::kIterationCap, 0, model.dropped_annotations(),
                      {}, 0};
  result.trace.push_back(trace_entry(1, 0, loglik, params));

  for (int iter = 1; iter <= config.max_iter_stage1; ++iter) {
    const ProbMatrix posteriors = e_step(log_dens, priors);
    ProbMatrix next_priors = model.fit(posteriors);
    AlphaUpdate update = update_alpha(log_y, posteriors, params);
    merge_flags(result.zero_weight_traits, update.zero_weight_traits);

    log_dens = log_densities(log_y, update.params);
    double next_loglik = std::numeric_limits<double>::quiet_NaN();
    try {
      next_loglik = incomplete_loglik(log_dens, next_priors);
    } catch (const NumericError&) {
    }
    if (!std::isfinite(next_loglik)) throw NumericError(dump_state(1, iter, update.params, next_loglik));

    double alpha_delta = 0.0;
    for (int d = 0; d < params.traits(); ++d) {
      alpha_delta = std::max(alpha_delta, std::abs(update.params.alpha(d) - params.alpha(d)));
    }
    const double loglik_delta = next_loglik - loglik;
    if (loglik_delta < -kMonotonicitySlack) ++result.monotonicity_violations;

    params = std::move(update.params);
    priors = std::move(next_priors);
    loglik = next_loglik;
    result.iterations = iter;
    result.trace.push_back(trace_entry(1, iter, loglik, params));

    if (std::abs(loglik_delta) < config.tol_loglik && alpha_delta < config.tol_alpha) {
      result.stop = StopReason::kConverged;
      break;
    }
  }
  result.params = std::move(params);
  result.priors = std::move(priors);
  return result;
}

}  // namespace

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::kConverged: return "converged";
    case StopReason::kRejected: return "rejected";
    case StopReason::kIterationCap: return "iteration_cap";
  }
  return "unknown";
}

EmConfig EmConfig::defaults_for(std::size_t snps) {
  EmConfig config;
  config.tree = TreeConfig::defaults_for(snps);
  return config;
}

void EmConfig::validate() const {
  if (!(alpha_init > 0.0 && alpha_init < 1.0)) throw ConfigError("alpha_init must be in (0, 1)");
  if (max_iter_stage1 < 1 || max_iter_stage2 < 1) throw ConfigError("iteration caps must be >= 1");
  if (!(tol_loglik > 0.0) || !(tol_alpha > 0.0)) throw ConfigError("tolerances must be > 0");
  tree.validate();
}

ProbMatrix e_step(const Matrix& log_dens, const ProbMatrix& priors) {
  if (static_cast<std::size_t>(log_dens.rows()) != priors.rows() ||
      log_dens.cols() != priors.states()) {
    throw ShapeError("prior matrix shape does not match densities");
  }
  const int states = priors.states();
  Matrix out(log_dens.rows(), states);
  std::vector<double> terms(static_cast<std::size_t>(states));
  for (Eigen::Index i = 0; i < log_dens.rows(); ++i) {
    double hi = -std::numeric_limits<double>::infinity();
    for (int l = 0; l < states; ++l) {
      const double t = std::log(priors(static_cast<std::size_t>(i), l)) + log_dens(i, l);
      terms[static_cast<std::size_t>(l)] = t;
      hi = std::max(hi, t);
    }
    if (!std::isfinite(hi)) throw NumericError("all-zero prior row " + std::to_string(i));
    double norm = 0.0;
    for (int l = 0; l < states; ++l) {
      double& t = terms[static_cast<std::size_t>(l)];
      t = std::exp(t - hi);
      norm += t;
    }
    for (int l = 0; l < states; ++l) out(i, l) = terms[static_cast<std::size_t>(l)] / norm;
  }
  return ProbMatrix(std::move(out), ProbRole::kPosterior);
}

ProbMatrix e_step(const PValuePanel& y, const ProbMatrix& priors, const MixtureParams& params) {
  return e_step(log_densities(y, params), priors);
}

AlphaUpdate update_alpha(const Matrix& log_y, const ProbMatrix& posteriors,
                         const MixtureParams& previous) {
  const int traits = static_cast<int>(log_y.cols());
  if (static_cast<std::size_t>(log_y.rows()) != posteriors.rows() || previous.traits() != traits ||
      posteriors.states() != (1 << traits)) {
    throw ShapeError("alpha update inputs differ in shape");
  }
  const StateSpace space(traits);
  std::vector<double> alpha = previous.alpha();
  std::vector<int> zero_weight;
  for (int d = 0; d < traits; ++d) {
    double weight = 0.0;
    double weighted_log = 0.0;
    for (Eigen::Index i = 0; i < log_y.rows(); ++i) {
      double w = 0.0;
      for (int l = 0; l < space.size(); ++l) {
        if (space.non_null(l, d)) w += posteriors(static_cast<std::size_t>(i), l);
      }
      weight += w;
      weighted_log += w * log_y(i, d);
    }
    if (!(weight > 0.0) || !(weighted_log < 0.0)) {
      zero_weight.push_back(d);
      continue;
    }
    alpha[static_cast<std::size_t>(d)] = std::clamp(-weight / weighted_log, kAlphaMin, kAlphaMax);
  }
  return {MixtureParams(std::move(alpha)), std::move(zero_weight)};
}

AlphaUpdate update_alpha(const PValuePanel& y, const ProbMatrix& posteriors,
                         const MixtureParams& previous) {
  return update_alpha(y.log_values(), posteriors, previous);
}

ProbMatrix project_to_simplex(Matrix raw) {
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index l = 0; l < raw.cols(); ++l) {
      double& v = raw(i, l);
      if (!std::isfinite(v)) throw NumericError("non-finite fitted prior at row " + std::to_string(i));
      v = std::max(v, kSimplexFloor);
      sum += v;
    }
    raw.row(i) /= sum;
  }
  return ProbMatrix(std::move(raw), ProbRole::kPrior);
}

LinearPriorModel::LinearPriorModel(const BinaryMatrix& annotations) {
  const Eigen::Index rows = annotations.rows();
  const Eigen::Index candidates = annotations.cols() + 1;
  Matrix full(rows, candidates);
  full.col(0).setOnes();
  if (annotations.cols() > 0) full.rightCols(annotations.cols()) = annotations.cast<double>();
  const Matrix gram = full.transpose() * full;

  // Greedy column selection in design order: a Cholesky sweep that skips
  // columns whose residual after projection on earlier kept columns vanishes.
  std::vector<Eigen::Index> kept;
  Matrix chol = Matrix::Zero(candidates, candidates);
  for (Eigen::Index j = 0; j < candidates; ++j) {
    const auto k = static_cast<Eigen::Index>(kept.size());
    Vector row(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      double v = gram(kept[static_cast<std::size_t>(a)], j);
      for (Eigen::Index b = 0; b < a; ++b) v -= chol(a, b) * row(b);
      row(a) = v / chol(a, a);
    }
    const double residual = gram(j, j) - row.squaredNorm();
    if (gram(j, j) > 0.0 && residual > kRankTolerance * gram(j, j)) {
      chol.row(k).head(k) = row.transpose();
      chol(k, k) = std::sqrt(residual);
      kept.push_back(j);
    } else {
      // j == 0 is the intercept, which is never dependent on an empty set.
      dropped_.push_back(static_cast<int>(j - 1));
    }
  }

  design_.resize(rows, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t c = 0; c < kept.size(); ++c) {
    design_.col(static_cast<Eigen::Index>(c)) = full.col(kept[c]);
  }
  gram_.compute(design_.transpose() * design_);
  if (gram_.info() != Eigen::Success) throw NumericError("design Gram matrix is not positive definite");
}

Matrix LinearPriorModel::fitted(const ProbMatrix& posteriors) const {
  if (static_cast<Eigen::Index>(posteriors.rows()) != design_.rows()) {
    throw ShapeError("posterior rows do not match the design");
  }
  const Matrix coef = gram_.solve(design_.transpose() * posteriors.values());
  return design_ * coef;
}

ProbMatrix fit_linear_prior(const ProbMatrix& posteriors, const AnnotationPanel& annotations) {
  if (posteriors.rows() != annotations.snps()) throw ShapeError("posterior and annotation rows differ");
  return LinearPriorModel(annotations.values()).fit(posteriors);
}

Stage1Result run_stage1(const PValuePanel& y, const AnnotationPanel& annotations,
                        const EmConfig& config) {
  check_aligned(y, annotations);
  return run_linear_em(y, annotations.values(), config);
}

FitResult run_stage2(const PValuePanel& y, const AnnotationPanel& annotations,
                     const Stage1Result& stage1, const EmConfig& config) {
  config.validate();
  check_aligned(y, annotations);
  const MixtureParams& params = stage1.params;
  const Matrix log_dens = log_densities(y, params);

  ProbMatrix priors = stage1.priors;
  double loglik = incomplete_loglik(log_dens, priors);
  std::optional<AnnotationTree> tree;
  std::vector<TraceEntry> trace = stage1.trace;
  trace.push_back(trace_entry(2, 0, loglik, params));

  StopReason stop = StopReason::kIterationCap;
  int accepted = 0;
  int rejected = 0;
  bool first_tree_improved = true;
  for (int iter = 1; iter <= config.max_iter_stage2; ++iter) {
    const ProbMatrix posteriors = e_step(log_dens, priors);
    AnnotationTree candidate = prune(grow(annotations, posteriors, config.tree), config.tree.cp);
    ProbMatrix next_priors = predict(candidate, annotations);
    double next_loglik = std::numeric_limits<double>::quiet_NaN();
    try {
      next_loglik = incomplete_loglik(log_dens, next_priors);
    } catch (const NumericError&) {
    }
    if (!std::isfinite(next_loglik)) throw NumericError(dump_state(2, iter, params, next_loglik));

    const double delta = next_loglik - loglik;
    // The first tree fit starts the tree-prior chain: the stage-1 state it is
    // compared against has no tree, so it is kept even without a gain.
    const bool first = !tree.has_value();
    if (first) first_tree_improved = delta > 0.0;
    if (!first && !(delta > 0.0)) {
      ++rejected;
      trace.push_back(trace_entry(2, iter, next_loglik, params, false));
      stop = StopReason::kRejected;
      break;
    }
    ++accepted;
    tree = std::move(candidate);
    priors = std::move(next_priors);
    loglik = next_loglik;
    trace.push_back(trace_entry(2, iter, loglik, params));
    if (!first && delta < config.tol_loglik) {
      stop = StopReason::kConverged;
      break;
    }
  }

  ProbMatrix posteriors = e_step(log_dens, priors);
  FitResult result{params,
                   std::move(*tree),
                   std::move(priors),
                   std::move(posteriors),
                   std::move(trace),
                   stage1,
                   stop,
                   accepted,
                   rejected,
                   first_tree_improved};
  return result;
}

FitResult fit(const PValuePanel& y, const AnnotationPanel& annotations, const EmConfig& config) {
  return run_stage2(y, annotations, run_stage1(y, annotations, config), config);
}

FitResult fit_baseline(const PValuePanel& y, const EmConfig& config,
                       std::vector<std::string> annotation_names) {
  Stage1Result stage1 = run_linear_em(y, BinaryMatrix(static_cast<Eigen::Index>(y.snps()), 0), config);
  const Vector mean = stage1.priors.values().row(0).transpose();
  AnnotationTree tree = AnnotationTree::single_leaf(mean, y.snps(), std::move(annotation_names));
  ProbMatrix posteriors = e_step(y, stage1.priors, stage1.params);
  FitResult result{stage1.params, std::move(tree), stage1.priors, std::move(posteriors),
                   stage1.trace,  stage1,          stage1.stop,   0,
                   0,             true};
  return result;
}

}  // namespace mgpa
