#include "mgpatree/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "mgpatree/errors.hpp"

namespace mgpa {

StateSpace::StateSpace(int traits) : traits_(traits) {
  if (traits < 1 || traits > kMaxTraits) {
    throw ConfigError("trait count must be in [1, " + std::to_string(kMaxTraits) + "], got " +
                      std::to_string(traits));
  }
}

std::string StateSpace::label(int state) const {
  std::string out(static_cast<std::size_t>(traits_), '0');
  for (int d = 0; d < traits_; ++d) {
    if (non_null(state, d)) out[static_cast<std::size_t>(d)] = '1';
  }
  return out;
}

std::vector<std::string> StateSpace::labels() const {
  std::vector<std::string> out;
  for (int s = 0; s < size(); ++s) out.push_back(label(s));
  return out;
}

std::vector<std::vector<int>> StateSpace::states() const {
  std::vector<std::vector<int>> out;
  for (int s = 0; s < size(); ++s) {
    std::vector<int> bits(static_cast<std::size_t>(traits_));
    for (int d = 0; d < traits_; ++d) bits[static_cast<std::size_t>(d)] = non_null(s, d);
    out.push_back(std::move(bits));
  }
  return out;
}

StateSpace state_space(int traits) { return StateSpace(traits); }

namespace {

void check_unique(const std::vector<std::string>& ids, const char* what) {
  std::unordered_set<std::string> seen;
  seen.reserve(ids.size());
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw DataError(std::string("duplicate ") + what + ": " + id);
  }
}

}  // namespace

PValuePanel::PValuePanel(std::vector<std::string> snp_ids, std::vector<std::string> trait_names,
                         Matrix values)
    : snp_ids_(std::move(snp_ids)), trait_names_(std::move(trait_names)), values_(std::move(values)) {
  if (snp_ids_.empty()) throw ShapeError("p-value panel has no SNPs");
  if (trait_names_.empty()) throw ShapeError("p-value panel has no traits");
  if (static_cast<std::size_t>(values_.rows()) != snp_ids_.size() ||
      static_cast<std::size_t>(values_.cols()) != trait_names_.size()) {
    throw ShapeError("p-value matrix is " + std::to_string(values_.rows()) + "x" +
                     std::to_string(values_.cols()) + ", expected " +
                     std::to_string(snp_ids_.size()) + "x" + std::to_string(trait_names_.size()));
  }
  for (Eigen::Index j = 0; j < values_.cols(); ++j) {
    for (Eigen::Index i = 0; i < values_.rows(); ++i) {
      const double p = values_(i, j);
      if (!(p > 0.0 && p <= 1.0)) {
        throw DomainError("p-value outside (0, 1] for SNP " + snp_ids_[static_cast<std::size_t>(i)]);
      }
    }
  }
  check_unique(snp_ids_, "SNP id");
}

double PValuePanel::clamp(double p) { return std::clamp(p, kPValueFloor, 1.0); }

AnnotationPanel::AnnotationPanel(std::vector<std::string> snp_ids, std::vector<std::string> names,
                                 BinaryMatrix values)
    : snp_ids_(std::move(snp_ids)), names_(std::move(names)), values_(std::move(values)) {
  if (names_.empty()) throw ShapeError("annotation panel has no annotations");
  if (static_cast<std::size_t>(values_.rows()) != snp_ids_.size() ||
      static_cast<std::size_t>(values_.cols()) != names_.size()) {
    throw ShapeError("annotation matrix shape does not match ids/names");
  }
  if ((values_.array() > 1).any()) throw DataError("annotation entries must be 0 or 1");
  check_unique(snp_ids_, "SNP id");
}

MixtureParams::MixtureParams(std::vector<double> alpha) : alpha_(std::move(alpha)) {
  if (alpha_.empty()) throw ConfigError("alpha must have at least one trait");
  for (double a : alpha_) {
    if (!(a > 0.0 && a < 1.0)) throw DomainError("alpha must lie in (0, 1), got " + std::to_string(a));
  }
}

ProbMatrix::ProbMatrix(Matrix values, ProbRole role) : values_(std::move(values)), role_(role) {
  for (Eigen::Index i = 0; i < values_.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index l = 0; l < values_.cols(); ++l) {
      const double v = values_(i, l);
      if (!(v >= 0.0 && v <= 1.0)) {
        throw NumericError("probability entry outside [0, 1] at row " + std::to_string(i));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      throw NumericError("probability row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
  }
}

ProbMatrix ProbMatrix::constant(std::size_t rows, const Vector& row, ProbRole role) {
  Matrix values = row.transpose().replicate(static_cast<Eigen::Index>(rows), 1);
  return ProbMatrix(std::move(values), role);
}

double log_component_density(std::span<const double> y, int state, const MixtureParams& params) {
  if (static_cast<int>(y.size()) != params.traits()) throw ShapeError("p-value row length != D");
  double out = 0.0;
  for (int d = 0; d < params.traits(); ++d) {
    const double yd = y[static_cast<std::size_t>(d)];
    if (!(yd > 0.0 && yd <= 1.0)) throw DomainError("p-value outside (0, 1]");
    if ((state >> d) & 1) {
      const double a = params.alpha(d);
      out += std::log(a) + (a - 1.0) * std::log(yd);
    }
  }
  return out;
}

double component_density(std::span<const double> y, int state, const MixtureParams& params) {
  return std::exp(log_component_density(y, state, params));
}

Matrix log_densities(const Matrix& log_y, const MixtureParams& params) {
  const int traits = params.traits();
  if (log_y.cols() != traits) throw ShapeError("p-value panel trait count != alpha length");
  const StateSpace space(traits);
  // Per-trait non-null log density; null contributes 0.
  Matrix non_null(log_y.rows(), traits);
  for (int d = 0; d < traits; ++d) {
    const double a = params.alpha(d);
    non_null.col(d) = (std::log(a) + (a - 1.0) * log_y.col(d).array()).matrix();
  }
  Matrix out = Matrix::Zero(log_y.rows(), space.size());
  for (int s = 0; s < space.size(); ++s) {
    for (int d = 0; d < traits; ++d) {
      if (space.non_null(s, d)) out.col(s) += non_null.col(d);
    }
  }
  return out;
}

Matrix log_densities(const PValuePanel& y, const MixtureParams& params) {
  return log_densities(y.log_values(), params);
}

double log_sum_exp(std::span<const double> values) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) hi = std::max(hi, v);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

double incomplete_loglik(const Matrix& log_dens, const ProbMatrix& priors) {
  if (static_cast<std::size_t>(log_dens.rows()) != priors.rows() ||
      log_dens.cols() != priors.states()) {
    throw ShapeError("prior matrix shape does not match densities");
  }
  const int states = priors.states();
  std::vector<double> terms(static_cast<std::size_t>(states));
  double total = 0.0;
  for (Eigen::Index i = 0; i < log_dens.rows(); ++i) {
    for (int l = 0; l < states; ++l) {
      terms[static_cast<std::size_t>(l)] =
          std::log(priors(static_cast<std::size_t>(i), l)) + log_dens(i, l);
    }
    const double row = log_sum_exp(terms);
    if (!std::isfinite(row)) {
      throw NumericError("non-finite mixture density at row " + std::to_string(i));
    }
    total += row;
  }
  return total;
}

double incomplete_loglik(const PValuePanel& y, const ProbMatrix& priors,
                         const MixtureParams& params) {
  if (y.snps() != priors.rows()) throw ShapeError("p-value panel and priors differ in rows");
  return incomplete_loglik(log_densities(y, params), priors);
}

double complete_loglik(const PValuePanel& y, const ProbMatrix& priors,
                       const ProbMatrix& posteriors, const MixtureParams& params) {
  if (y.snps() != priors.rows() || priors.rows() != posteriors.rows() ||
      priors.states() != posteriors.states()) {
    throw ShapeError("complete log-likelihood inputs differ in shape");
  }
  const Matrix log_dens = log_densities(y, params);
  if (log_dens.cols() != priors.states()) throw ShapeError("state count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < priors.rows(); ++i) {
    for (int l = 0; l < priors.states(); ++l) {
      const double z = posteriors(i, l);
      if (z == 0.0) continue;
      total += z * (std::log(std::max(priors(i, l), 1e-12)) +
                    log_dens(static_cast<Eigen::Index>(i), l));
    }
  }
  return total;
}

double entropy(const ProbMatrix& posteriors) {
  double total = 0.0;
  for (std::size_t i = 0; i < posteriors.rows(); ++i) {
    for (int l = 0; l < posteriors.states(); ++l) {
      const double z = posteriors(i, l);
      if (z > 0.0) total -= z * std::log(z);
    }
  }
  return total;
}

}  // namespace mgpa
