#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "chunkgrpo/network.hpp"
#include "chunkgrpo/random.hpp"

namespace chunkgrpo {

enum class DistributionKind { gaussian_mixture, two_moons };

std::string_view distribution_name(DistributionKind kind);
DistributionKind parse_distribution(std::string_view name);

struct MixtureComponent {
  Vec mean;
  Vec covariance;  // row-major dim x dim
  std::size_t mode = 0;
};

/// Conditional target distribution. Each condition is an equal-weight
/// mixture over a subset of components; components carry a mode label so
/// several components (e.g. points along a moon) can form one mode.
struct DataSpec {
  DistributionKind kind = DistributionKind::gaussian_mixture;
  std::size_t dim = 2;
  std::vector<MixtureComponent> components;
  std::vector<std::vector<std::size_t>> conditions;

  std::size_t num_conditions() const { return conditions.size(); }
  std::size_t num_modes() const;
  /// Components of `mode`.
  std::vector<std::size_t> mode_components(std::size_t mode) const;

  /// Throws InputError on empty conditions, bad indices or non-PD covariances.
  void validate() const;

  /// `modes` isotropic Gaussians on a circle; condition c owns the
  /// contiguous block of modes [c*M/C, (c+1)*M/C).
  static DataSpec circle_mixture(std::size_t modes = 8, double radius = 4.0, double sigma = 0.3,
                                 std::size_t conditions = 4);
  /// Two interleaved half circles, each a dense chain of Gaussians.
  /// conditions = 1 puts both moons under one condition, 2 gives one each.
  static DataSpec two_moons(double noise = 0.1, std::size_t conditions = 2, std::size_t points_per_moon = 24);
  static DataSpec single_gaussian(Vec mean, double sigma);
};

/// Sampling and density evaluation with cached Cholesky factors.
class DataSampler {
 public:
  explicit DataSampler(DataSpec spec);

  const DataSpec& spec() const { return spec_; }

  Vec sample(std::size_t condition, RandomStream& stream) const;
  double log_density(std::span<const double> x, std::size_t condition) const;
  /// Component log-density log N(x; μ_k, Σ_k).
  double component_log_density(std::span<const double> x, std::size_t component) const;
  /// Mode of the component with the smallest Mahalanobis distance.
  std::size_t nearest_mode(std::span<const double> x) const;

 private:
  struct Factor {
    Eigen::MatrixXd chol;   // lower factor L with Σ = L Lᵀ
    double log_norm = 0.0;  // -½(d log 2π + log det Σ)
  };

  double mahalanobis_sq(std::span<const double> x, std::size_t component) const;

  DataSpec spec_;
  std::vector<Factor> factors_;
};

}  // namespace chunkgrpo
