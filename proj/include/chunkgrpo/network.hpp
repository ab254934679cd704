#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chunkgrpo/random.hpp"

namespace chunkgrpo {

using Vec = std::vector<double>;

enum class Activation { silu, tanh };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

/// Shape of the velocity network. The input is
/// state ⊕ [sin(ω_k t), cos(ω_k t)]_{k<time_freqs} ⊕ one_hot(condition).
struct Architecture {
  std::size_t state_dim = 2;
  std::size_t time_freqs = 8;
  std::size_t num_conditions = 1;
  std::vector<std::size_t> hidden{64, 64, 64};
  Activation activation = Activation::silu;

  std::size_t input_dim() const { return state_dim + 2 * time_freqs + num_conditions; }
  std::size_t param_count() const;

  /// Layer widths from input to output.
  std::vector<std::size_t> widths() const;

  /// Single-line `key=value;...` form used in checkpoint headers.
  std::string describe() const;
  static Architecture parse(std::string_view text);

  bool operator==(const Architecture&) const = default;
};

/// Flat parameter vector plus its architecture. Layer l is stored as the
/// row-major weight matrix (out x in) followed by the bias (out).
class ParamVector {
 public:
  ParamVector() = default;
  ParamVector(Architecture arch, Vec values);

  static ParamVector zeros(const Architecture& arch);
  /// LeCun-normal hidden layers, small output layer, zero biases.
  static ParamVector initialize(const Architecture& arch, RandomStream& stream);

  const Architecture& arch() const { return arch_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  std::size_t size() const { return values_.size(); }

  /// Index of the first non-finite entry, or size() if all are finite.
  std::size_t first_non_finite() const;

  bool operator==(const ParamVector&) const = default;

 private:
  Architecture arch_;
  Vec values_;
};

/// Network input features for (x, t, c).
Vec encode_input(const Architecture& arch, std::span<const double> x, double t, std::size_t c);

/// v̂_θ(x, t, c).
Vec eval_velocity(const ParamVector& params, std::span<const double> x, double t, std::size_t c);

/// Forward pass that keeps every activation for a later backward pass.
struct VelocityTrace {
  Vec input;
  std::vector<Vec> pre;   // pre-activation per layer
  std::vector<Vec> post;  // post-activation per hidden layer
  Vec output;
};

VelocityTrace trace_velocity(const ParamVector& params, std::span<const double> x, double t,
                             std::size_t c);

/// Accumulates (dL/dv)ᵀ ∂v/∂θ into `grad` and, if non-empty, (dL/dv)ᵀ ∂v/∂x into `dx`.
void backprop_velocity(const ParamVector& params, const VelocityTrace& trace,
                       std::span<const double> dv, std::span<double> grad, std::span<double> dx = {});

/// ∂v/∂x as a row-major (d x d) matrix.
Vec input_jacobian(const ParamVector& params, std::span<const double> x, double t, std::size_t c);

/// Records velocity evaluations for a loss closure. The closure reads the
/// outputs, computes its scalar loss, and seeds dL/dv for each evaluation.
class LossTape {
 public:
  explicit LossTape(const ParamVector& params) : params_(&params) {}

  std::size_t record(std::span<const double> x, double t, std::size_t c);
  const Vec& output(std::size_t index) const { return traces_[index].output; }
  /// Adds `dv` to the upstream gradient of evaluation `index`.
  void seed(std::size_t index, std::span<const double> dv);
  /// Adds `scale * dv`.
  void seed(std::size_t index, std::span<const double> dv, double scale);

  std::size_t size() const { return traces_.size(); }
  const ParamVector& params() const { return *params_; }

  /// Runs backward over all evaluations in recording order.
  Vec backward() const;

 private:
  const ParamVector* params_;
  std::vector<VelocityTrace> traces_;
  std::vector<Vec> upstream_;
};

struct LossAndGradient {
  double loss = 0.0;
  Vec gradient;
};

using LossClosure = std::function<double(LossTape&)>;

/// ∂loss/∂θ for a closure built from velocity evaluations.
/// Throws NumericError naming the loss or the first non-finite gradient entry.
LossAndGradient grad_params(const ParamVector& params, const LossClosure& loss);

}  // namespace chunkgrpo
