#pragma once

#include "ndm/autodiff.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ndm {

using ad::Mat;
using ad::Vec;

enum class Activation { Silu };

enum class TimeEmbedding { RawScalar, Sinusoidal };

/// Shape of a fully connected time-conditioned network.
///
/// The network input is concat(x, embed(t)); `input_dim` counts both parts.
/// Hidden layers use `activation`; the output layer is affine.
struct NetSpec {
  int input_dim = 0;
  std::vector<int> hidden_widths;
  int output_dim = 0;
  Activation activation = Activation::Silu;
  TimeEmbedding time_embedding = TimeEmbedding::RawScalar;
  int frequencies = 0;  // sinusoidal only

  /// Width of embed(t): 1 for raw scalar, 2k for k sinusoidal frequencies.
  int embedding_width() const;
  /// Dimension of the x part of the input.
  int data_dim() const { return input_dim - embedding_width(); }
  std::size_t parameter_count() const;
  int layer_count() const { return static_cast<int>(hidden_widths.size()) + 1; }

  /// Throws ContractError when a width or the frequency count is invalid.
  void validate() const;

  /// Convenience: data_dim inputs plus the embedding, data_dim outputs.
  static NetSpec for_data(int data_dim, std::vector<int> hidden, TimeEmbedding embedding, int frequencies);

  bool operator==(const NetSpec&) const = default;
};

/// Flat parameter vector. Layout per layer: W (out x in, row-major) then b (out).
struct NetParams {
  std::vector<double> values;
  std::uint64_t version = 0;
};

/// Time embedding rows for each entry of t, shape (t.size() x embedding_width).
Mat embed_time(const NetSpec& spec, const Vec& t);
/// d embed_time / dt, same shape.
Mat embed_time_derivative(const NetSpec& spec, const Vec& t);

/// Fan-in scaled Gaussian init, zero biases. With `zero_output_layer` the
/// final affine layer starts at exactly zero.
NetParams init_params(const NetSpec& spec, std::mt19937_64& rng, bool zero_output_layer = false);

/// Batched forward pass: x is (B x data_dim), t has B entries.
Mat net_forward(const NetSpec& spec, const NetParams& params, const Mat& x, const Vec& t);
Vec net_forward(const NetSpec& spec, const NetParams& params, const Vec& x, double t);

struct ForwardWithTangent {
  Mat value;
  Mat time_derivative;
};

/// One forward pass carrying the tangent of the time input alongside the
/// primal values. Cost is independent of output_dim.
ForwardWithTangent net_forward_with_time_derivative(const NetSpec& spec, const NetParams& params,
                                                    const Mat& x, const Vec& t);
Vec net_time_derivative(const NetSpec& spec, const NetParams& params, const Vec& x, double t);

/// Network parameters placed on a tape, one node per weight matrix and bias.
struct BoundNet {
  const NetSpec* spec = nullptr;
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
  bool trainable = false;
};

BoundNet bind(ad::Tape& tape, const NetSpec& spec, const NetParams& params, bool trainable);

/// Records the forward pass. Throws NumericalError naming the layer if any
/// pre-activation is non-finite.
ad::Var record_forward(const BoundNet& net, ad::Var x, const Vec& t);

struct RecordedJvp {
  ad::Var value;
  ad::Var time_derivative;
};

/// Records forward pass and time tangent; both are differentiable in the
/// parameters and in x.
RecordedJvp record_forward_with_time_derivative(const BoundNet& net, ad::Var x, const Vec& t);

/// Gradient of the bound parameters after a backward sweep, in NetParams layout.
std::vector<double> collect_gradient(const ad::Tape& tape, const BoundNet& net);

/// Loss closure: receives network outputs for the batch, returns a 1x1 Var.
using LossClosure = std::function<ad::Var(ad::Var outputs)>;

/// dLoss/dparams for loss(net(x, t)).
std::vector<double> net_grad(const NetSpec& spec, const NetParams& params, const Mat& x, const Vec& t,
                             const LossClosure& loss);

}  // namespace ndm
