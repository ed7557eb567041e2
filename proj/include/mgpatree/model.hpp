#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mgpa {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr int kMaxTraits = 4;
inline constexpr double kPValueFloor = 1e-30;
inline constexpr double kAlphaMin = 1e-6;
inline constexpr double kAlphaMax = 1.0 - 1e-6;
inline constexpr double kRowSumTolerance = 1e-9;

// Association states over D traits. State index s encodes the non-null
// pattern in binary with trait 1 as the lowest bit, so for D = 2 the order
// is 00, 10, 01, 11 (labels list trait 1 first).
class StateSpace {
 public:
  explicit StateSpace(int traits);

  int traits() const { return traits_; }
  int size() const { return 1 << traits_; }
  bool non_null(int state, int trait) const { return (state >> trait) & 1; }
  int all_non_null() const { return size() - 1; }
  std::string label(int state) const;
  std::vector<std::string> labels() const;
  // Bit vectors, one per state, each of length D.
  std::vector<std::vector<int>> states() const;

 private:
  int traits_;
};

StateSpace state_space(int traits);

// M x D matrix of association p-values, each in (0, 1].
class PValuePanel {
 public:
  PValuePanel(std::vector<std::string> snp_ids, std::vector<std::string> trait_names,
              Matrix values);

  const std::vector<std::string>& snp_ids() const { return snp_ids_; }
  const std::vector<std::string>& trait_names() const { return trait_names_; }
  const Matrix& values() const { return values_; }
  std::size_t snps() const { return snp_ids_.size(); }
  int traits() const { return static_cast<int>(trait_names_.size()); }
  Matrix log_values() const { return values_.array().log().matrix(); }

  static double clamp(double p);

 private:
  std::vector<std::string> snp_ids_;
  std::vector<std::string> trait_names_;
  Matrix values_;
};

// M x K binary annotation indicators.
class AnnotationPanel {
 public:
  AnnotationPanel(std::vector<std::string> snp_ids, std::vector<std::string> names,
                  BinaryMatrix values);

  const std::vector<std::string>& snp_ids() const { return snp_ids_; }
  const std::vector<std::string>& names() const { return names_; }
  const BinaryMatrix& values() const { return values_; }
  std::size_t snps() const { return snp_ids_.size(); }
  int annotations() const { return static_cast<int>(names_.size()); }

 private:
  std::vector<std::string> snp_ids_;
  std::vector<std::string> names_;
  BinaryMatrix values_;
};

// Beta(alpha_d, 1) shape per trait, 0 < alpha_d < 1.
class MixtureParams {
 public:
  explicit MixtureParams(std::vector<double> alpha);

  const std::vector<double>& alpha() const { return alpha_; }
  double alpha(int trait) const { return alpha_[static_cast<std::size_t>(trait)]; }
  int traits() const { return static_cast<int>(alpha_.size()); }

  bool operator==(const MixtureParams&) const = default;

 private:
  std::vector<double> alpha_;
};

enum class ProbRole { kPrior, kPosterior };

// M x S row-stochastic matrix over association states.
class ProbMatrix {
 public:
  ProbMatrix(Matrix values, ProbRole role);

  const Matrix& values() const { return values_; }
  ProbRole role() const { return role_; }
  std::size_t rows() const { return static_cast<std::size_t>(values_.rows()); }
  int states() const { return static_cast<int>(values_.cols()); }
  double operator()(std::size_t i, int l) const {
    return values_(static_cast<Eigen::Index>(i), l);
  }

  // Every row equal to `row`.
  static ProbMatrix constant(std::size_t rows, const Vector& row, ProbRole role);

 private:
  Matrix values_;
  ProbRole role_;
};

double log_component_density(std::span<const double> y, int state, const MixtureParams& params);
double component_density(std::span<const double> y, int state, const MixtureParams& params);

// M x S matrix of log P(Y_i | state l) from precomputed log p-values.
Matrix log_densities(const Matrix& log_y, const MixtureParams& params);
Matrix log_densities(const PValuePanel& y, const MixtureParams& params);

double incomplete_loglik(const PValuePanel& y, const ProbMatrix& priors,
                         const MixtureParams& params);
double incomplete_loglik(const Matrix& log_dens, const ProbMatrix& priors);

double complete_loglik(const PValuePanel& y, const ProbMatrix& priors,
                       const ProbMatrix& posteriors, const MixtureParams& params);

// -sum_i sum_l z_il log z_il, with 0 log 0 = 0.
double entropy(const ProbMatrix& posteriors);

double log_sum_exp(std::span<const double> values);

}  // namespace mgpa
