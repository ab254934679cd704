#include "chunkgrpo/network.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "chunkgrpo/error.hpp"

namespace chunkgrpo {
namespace {

constexpr double kMaxFrequency = 32.0;

double frequency(std::size_t k, std::size_t count) {
  if (count <= 1) {
    return 1.0;
  }
  return std::pow(kMaxFrequency, static_cast<double>(k) / static_cast<double>(count - 1));
}

double activate(Activation a, double z) {
  switch (a) {
    case Activation::silu:
      return z / (1.0 + std::exp(-z));
    case Activation::tanh:
      return std::tanh(z);
  }
  return z;
}

double activate_derivative(Activation a, double z) {
  switch (a) {
    case Activation::silu: {
      const double s = 1.0 / (1.0 + std::exp(-z));
      return s * (1.0 + z * (1.0 - s));
    }
    case Activation::tanh: {
      const double th = std::tanh(z);
      return 1.0 - th * th;
    }
  }
  return 1.0;
}

void check_inputs(const ParamVector& params, std::span<const double> x, double t, std::size_t c) {
  const auto& arch = params.arch();
  if (x.size() != arch.state_dim) {
    throw InputError("velocity: state has dimension " + std::to_string(x.size()) + ", network expects " +
                     std::to_string(arch.state_dim));
  }
  if (!(t >= 0.0 && t <= 1.0)) {
    throw InputError("velocity: time " + std::to_string(t) + " outside [0,1]");
  }
  if (c >= arch.num_conditions) {
    throw InputError("velocity: condition " + std::to_string(c) + " out of range");
  }
  if (params.size() != arch.param_count()) {
    throw StateError("velocity: parameter count does not match architecture");
  }
}

void check_output(const ParamVector& params, std::span<const double> out) {
  for (double v : out) {
    if (!std::isfinite(v)) {
      const std::size_t bad = params.first_non_finite();
      if (bad < params.size()) {
        throw StateError("velocity: parameter " + std::to_string(bad) + " is not finite");
      }
      throw NumericError("velocity: non-finite network output");
    }
  }
}

}  // namespace

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::silu:
      return "silu";
    case Activation::tanh:
      return "tanh";
  }
  return "silu";
}

Activation parse_activation(std::string_view name) {
  if (name == "silu") {
    return Activation::silu;
  }
  if (name == "tanh") {
    return Activation::tanh;
  }
  throw InputError("unknown activation '" + std::string(name) + "'");
}

std::vector<std::size_t> Architecture::widths() const {
  std::vector<std::size_t> w;
  w.reserve(hidden.size() + 2);
  w.push_back(input_dim());
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(state_dim);
  return w;
}

std::size_t Architecture::param_count() const {
  const auto w = widths();
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    n += w[l + 1] * w[l] + w[l + 1];
  }
  return n;
}

std::string Architecture::describe() const {
  std::ostringstream os;
  os << "state_dim=" << state_dim << ";time_freqs=" << time_freqs << ";conditions=" << num_conditions
     << ";hidden=";
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    os << (i ? "," : "") << hidden[i];
  }
  os << ";activation=" << activation_name(activation);
  return os.str();
}

Architecture Architecture::parse(std::string_view text) {
  Architecture arch;
  arch.hidden.clear();
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find(';', pos);
    if (end == std::string_view::npos) {
      end = text.size();
    }
    const auto item = text.substr(pos, end - pos);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw InputError("architecture: malformed item '" + std::string(item) + "'");
    }
    const std::string key(item.substr(0, eq));
    const std::string value(item.substr(eq + 1));
    try {
      if (key == "state_dim") {
        arch.state_dim = std::stoul(value);
      } else if (key == "time_freqs") {
        arch.time_freqs = std::stoul(value);
      } else if (key == "conditions") {
        arch.num_conditions = std::stoul(value);
      } else if (key == "hidden") {
        std::istringstream is(value);
        std::string tok;
        while (std::getline(is, tok, ',')) {
          if (!tok.empty()) {
            arch.hidden.push_back(std::stoul(tok));
          }
        }
      } else if (key == "activation") {
        arch.activation = parse_activation(value);
      } else {
        throw InputError("architecture: unknown key '" + key + "'");
      }
    } catch (const std::logic_error& e) {
      if (dynamic_cast<const InputError*>(&e) != nullptr) {
        throw;
      }
      throw InputError("architecture: bad value for '" + key + "'");
    }
    pos = end + 1;
  }
  if (arch.state_dim == 0 || arch.num_conditions == 0) {
    throw InputError("architecture: state_dim and conditions must be positive");
  }
  return arch;
}

ParamVector::ParamVector(Architecture arch, Vec values) : arch_(std::move(arch)), values_(std::move(values)) {
  if (values_.size() != arch_.param_count()) {
    throw InputError("ParamVector: " + std::to_string(values_.size()) + " values for an architecture of " +
                     std::to_string(arch_.param_count()));
  }
  const std::size_t bad = first_non_finite();
  if (bad < values_.size()) {
    throw StateError("ParamVector: entry " + std::to_string(bad) + " is not finite");
  }
}

ParamVector ParamVector::zeros(const Architecture& arch) { return ParamVector(arch, Vec(arch.param_count(), 0.0)); }

ParamVector ParamVector::initialize(const Architecture& arch, RandomStream& stream) {
  Vec values(arch.param_count(), 0.0);
  const auto w = arch.widths();
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const std::size_t in = w[l];
    const std::size_t out = w[l + 1];
    const bool last = l + 2 == w.size();
    const double scale = (last ? 0.1 : 1.0) / std::sqrt(static_cast<double>(in));
    for (std::size_t i = 0; i < in * out; ++i) {
      values[offset + i] = scale * stream.gaussian();
    }
    offset += in * out + out;
  }
  return ParamVector(arch, std::move(values));
}

std::size_t ParamVector::first_non_finite() const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      return i;
    }
  }
  return values_.size();
}

Vec encode_input(const Architecture& arch, std::span<const double> x, double t, std::size_t c) {
  Vec in(arch.input_dim(), 0.0);
  std::size_t k = 0;
  for (double xi : x) {
    in[k++] = xi;
  }
  for (std::size_t f = 0; f < arch.time_freqs; ++f) {
    const double w = frequency(f, arch.time_freqs);
    in[k++] = std::sin(w * t);
    in[k++] = std::cos(w * t);
  }
  in[k + c] = 1.0;
  return in;
}

VelocityTrace trace_velocity(const ParamVector& params, std::span<const double> x, double t, std::size_t c) {
  check_inputs(params, x, t, c);
  const auto& arch = params.arch();
  const auto w = arch.widths();
  const auto theta = params.values();
  const std::size_t layers = w.size() - 1;

  VelocityTrace tr;
  tr.input = encode_input(arch, x, t, c);
  tr.pre.resize(layers);
  tr.post.resize(layers - 1);

  const Vec* act = &tr.input;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = w[l];
    const std::size_t out = w[l + 1];
    const double* W = theta.data() + offset;
    const double* b = W + in * out;
    Vec& z = tr.pre[l];
    z.assign(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      const double* row = W + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        s += row[i] * (*act)[i];
      }
      z[o] = s;
    }
    if (l + 1 < layers) {
      Vec& h = tr.post[l];
      h.resize(out);
      for (std::size_t o = 0; o < out; ++o) {
        h[o] = activate(arch.activation, z[o]);
      }
      act = &h;
    }
    offset += in * out + out;
  }
  tr.output = tr.pre.back();
  check_output(params, tr.output);
  return tr;
}

Vec eval_velocity(const ParamVector& params, std::span<const double> x, double t, std::size_t c) {
  return trace_velocity(params, x, t, c).output;
}

void backprop_velocity(const ParamVector& params, const VelocityTrace& trace, std::span<const double> dv,
                       std::span<double> grad, std::span<double> dx) {
  const auto& arch = params.arch();
  const auto w = arch.widths();
  const auto theta = params.values();
  const std::size_t layers = w.size() - 1;
  if (dv.size() != arch.state_dim || grad.size() != params.size()) {
    throw InputError("backprop_velocity: buffer size mismatch");
  }

  std::vector<std::size_t> offsets(layers, 0);
  for (std::size_t l = 1; l < layers; ++l) {
    offsets[l] = offsets[l - 1] + w[l - 1] * w[l] + w[l];
  }

  Vec delta(dv.begin(), dv.end());  // dL/dz for the current layer
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = w[l];
    const std::size_t out = w[l + 1];
    const Vec& act = l == 0 ? trace.input : trace.post[l - 1];
    const double* W = theta.data() + offsets[l];
    double* gW = grad.data() + offsets[l];
    double* gb = gW + in * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      gb[o] += d;
      if (d == 0.0) {
        continue;
      }
      double* grow = gW + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        grow[i] += d * act[i];
      }
    }
    if (l == 0 && dx.empty()) {
      break;
    }
    Vec below(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) {
        continue;
      }
      const double* row = W + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        below[i] += d * row[i];
      }
    }
    if (l == 0) {
      for (std::size_t i = 0; i < arch.state_dim; ++i) {
        dx[i] += below[i];
      }
      break;
    }
    const Vec& z = trace.pre[l - 1];
    for (std::size_t i = 0; i < in; ++i) {
      below[i] *= activate_derivative(arch.activation, z[i]);
    }
    delta = std::move(below);
  }
}

Vec input_jacobian(const ParamVector& params, std::span<const double> x, double t, std::size_t c) {
  const auto tr = trace_velocity(params, x, t, c);
  const std::size_t d = params.arch().state_dim;
  Vec jac(d * d, 0.0);
  Vec scratch(params.size(), 0.0);
  for (std::size_t r = 0; r < d; ++r) {
    Vec dv(d, 0.0);
    dv[r] = 1.0;
    backprop_velocity(params, tr, dv, scratch, std::span<double>(jac.data() + r * d, d));
  }
  return jac;
}

std::size_t LossTape::record(std::span<const double> x, double t, std::size_t c) {
  traces_.push_back(trace_velocity(*params_, x, t, c));
  upstream_.emplace_back(params_->arch().state_dim, 0.0);
  return traces_.size() - 1;
}

void LossTape::seed(std::size_t index, std::span<const double> dv) { seed(index, dv, 1.0); }

void LossTape::seed(std::size_t index, std::span<const double> dv, double scale) {
  if (index >= upstream_.size() || dv.size() != upstream_[index].size()) {
    throw InputError("LossTape::seed: bad index or gradient size");
  }
  for (std::size_t i = 0; i < dv.size(); ++i) {
    upstream_[index][i] += scale * dv[i];
  }
}

Vec LossTape::backward() const {
  Vec grad(params_->size(), 0.0);
  for (std::size_t k = 0; k < traces_.size(); ++k) {
    bool any = false;
    for (double g : upstream_[k]) {
      any = any || g != 0.0;
    }
    if (any) {
      backprop_velocity(*params_, traces_[k], upstream_[k], grad);
    }
  }
  return grad;
}

LossAndGradient grad_params(const ParamVector& params, const LossClosure& loss) {
  LossTape tape(params);
  LossAndGradient out;
  out.loss = loss(tape);
  if (!std::isfinite(out.loss)) {
    throw NumericError("grad_params: loss is not finite (" + std::to_string(out.loss) + ")");
  }
  out.gradient = tape.backward();
  for (std::size_t i = 0; i < out.gradient.size(); ++i) {
    if (!std::isfinite(out.gradient[i])) {
      throw NumericError("grad_params: gradient component " + std::to_string(i) + " is not finite");
    }
  }
  return out;
}

}  // namespace chunkgrpo
