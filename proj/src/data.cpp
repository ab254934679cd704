#include "chunkgrpo/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "chunkgrpo/error.hpp"

namespace chunkgrpo {
namespace {

Vec isotropic(std::size_t dim, double sigma) {
  Vec cov(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    cov[i * dim + i] = sigma * sigma;
  }
  return cov;
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) {
    return m;
  }
  double s = 0.0;
  for (double x : v) {
    s += std::exp(x - m);
  }
  return m + std::log(s);
}

}  // namespace

std::string_view distribution_name(DistributionKind kind) {
  return kind == DistributionKind::two_moons ? "two-moons" : "gaussian-mixture";
}

DistributionKind parse_distribution(std::string_view name) {
  if (name == "gaussian-mixture") {
    return DistributionKind::gaussian_mixture;
  }
  if (name == "two-moons") {
    return DistributionKind::two_moons;
  }
  throw InputError("unknown distribution kind '" + std::string(name) + "'");
}

std::size_t DataSpec::num_modes() const {
  std::size_t n = 0;
  for (const auto& c : components) {
    n = std::max(n, c.mode + 1);
  }
  return n;
}

std::vector<std::size_t> DataSpec::mode_components(std::size_t mode) const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < components.size(); ++k) {
    if (components[k].mode == mode) {
      out.push_back(k);
    }
  }
  return out;
}

void DataSpec::validate() const {
  if (dim == 0) {
    throw InputError("DataSpec: dimension must be positive");
  }
  if (conditions.empty()) {
    throw InputError("DataSpec: at least one condition is required");
  }
  for (std::size_t c = 0; c < conditions.size(); ++c) {
    if (conditions[c].empty()) {
      throw InputError("DataSpec: condition " + std::to_string(c) + " has no modes");
    }
    for (std::size_t k : conditions[c]) {
      if (k >= components.size()) {
        throw InputError("DataSpec: condition " + std::to_string(c) + " references missing component");
      }
    }
  }
  for (std::size_t k = 0; k < components.size(); ++k) {
    const auto& comp = components[k];
    if (comp.mean.size() != dim || comp.covariance.size() != dim * dim) {
      throw InputError("DataSpec: component " + std::to_string(k) + " has wrong dimension");
    }
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> cov(
        comp.covariance.data(), static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    if (!cov.isApprox(cov.transpose(), 1e-12)) {
      throw InputError("DataSpec: component " + std::to_string(k) + " covariance is not symmetric");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw InputError("DataSpec: component " + std::to_string(k) + " covariance is not positive definite");
    }
  }
}

DataSpec DataSpec::circle_mixture(std::size_t modes, double radius, double sigma, std::size_t conditions) {
  if (modes == 0 || conditions == 0 || conditions > modes) {
    throw InputError("circle_mixture: need 1 <= conditions <= modes");
  }
  DataSpec spec;
  spec.kind = DistributionKind::gaussian_mixture;
  spec.dim = 2;
  for (std::size_t k = 0; k < modes; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(modes);
    spec.components.push_back({{radius * std::cos(angle), radius * std::sin(angle)}, isotropic(2, sigma), k});
  }
  spec.conditions.resize(conditions);
  for (std::size_t k = 0; k < modes; ++k) {
    spec.conditions[k * conditions / modes].push_back(k);
  }
  spec.validate();
  return spec;
}

DataSpec DataSpec::two_moons(double noise, std::size_t conditions, std::size_t points_per_moon) {
  if (conditions != 1 && conditions != 2) {
    throw InputError("two_moons: conditions must be 1 or 2");
  }
  if (points_per_moon < 2) {
    throw InputError("two_moons: need at least two points per moon");
  }
  DataSpec spec;
  spec.kind = DistributionKind::two_moons;
  spec.dim = 2;
  // Scaled by 2 and centered so the support sits around the origin.
  for (std::size_t moon = 0; moon < 2; ++moon) {
    for (std::size_t i = 0; i < points_per_moon; ++i) {
      const double a = std::numbers::pi * static_cast<double>(i) / static_cast<double>(points_per_moon - 1);
      const double x = moon == 0 ? std::cos(a) : 1.0 - std::cos(a);
      const double y = moon == 0 ? std::sin(a) : 0.5 - std::sin(a);
      spec.components.push_back({{2.0 * (x - 0.5), 2.0 * (y - 0.25)}, isotropic(2, noise), moon});
    }
  }
  spec.conditions.resize(conditions);
  for (std::size_t k = 0; k < spec.components.size(); ++k) {
    spec.conditions[conditions == 1 ? 0 : spec.components[k].mode].push_back(k);
  }
  spec.validate();
  return spec;
}

DataSpec DataSpec::single_gaussian(Vec mean, double sigma) {
  DataSpec spec;
  spec.dim = mean.size();
  spec.components.push_back({std::move(mean), isotropic(spec.dim, sigma), 0});
  spec.conditions = {{0}};
  spec.validate();
  return spec;
}

DataSampler::DataSampler(DataSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const auto d = static_cast<Eigen::Index>(spec_.dim);
  for (const auto& comp : spec_.components) {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> cov(
        comp.covariance.data(), d, d);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    Factor f;
    f.chol = llt.matrixL();
    const double log_det = 2.0 * f.chol.diagonal().array().log().sum();
    f.log_norm = -0.5 * (static_cast<double>(spec_.dim) * std::log(2.0 * std::numbers::pi) + log_det);
    factors_.push_back(std::move(f));
  }
}

Vec DataSampler::sample(std::size_t condition, RandomStream& stream) const {
  if (condition >= spec_.num_conditions()) {
    throw InputError("DataSampler::sample: condition out of range");
  }
  const auto& members = spec_.conditions[condition];
  const std::size_t k = members[stream.below(members.size())];
  const auto& comp = spec_.components[k];
  Eigen::VectorXd z(spec_.dim);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    z[i] = stream.gaussian();
  }
  const Eigen::VectorXd offset = factors_[k].chol * z;
  Vec x(comp.mean);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] += offset[static_cast<Eigen::Index>(i)];
  }
  return x;
}

double DataSampler::mahalanobis_sq(std::span<const double> x, std::size_t component) const {
  const auto& comp = spec_.components[component];
  Eigen::VectorXd diff(spec_.dim);
  for (std::size_t i = 0; i < spec_.dim; ++i) {
    diff[static_cast<Eigen::Index>(i)] = x[i] - comp.mean[i];
  }
  const Eigen::VectorXd y = factors_[component].chol.triangularView<Eigen::Lower>().solve(diff);
  return y.squaredNorm();
}

double DataSampler::component_log_density(std::span<const double> x, std::size_t component) const {
  if (x.size() != spec_.dim) {
    throw InputError("DataSampler: state dimension mismatch");
  }
  return factors_[component].log_norm - 0.5 * mahalanobis_sq(x, component);
}

double DataSampler::log_density(std::span<const double> x, std::size_t condition) const {
  if (condition >= spec_.num_conditions()) {
    throw InputError("DataSampler::log_density: condition out of range");
  }
  const auto& members = spec_.conditions[condition];
  Vec terms;
  terms.reserve(members.size());
  for (std::size_t k : members) {
    terms.push_back(component_log_density(x, k));
  }
  return log_sum_exp(terms) - std::log(static_cast<double>(members.size()));
}

std::size_t DataSampler::nearest_mode(std::span<const double> x) const {
  double best = std::numeric_limits<double>::infinity();
  std::size_t mode = 0;
  for (std::size_t k = 0; k < spec_.components.size(); ++k) {
    const double m = mahalanobis_sq(x, k);
    if (m < best) {
      best = m;
      mode = spec_.components[k].mode;
    }
  }
  return mode;
}

}  // namespace chunkgrpo
