#include "ndm/net.hpp"

#include "ndm/errors.hpp"

#include <cmath>
#include <numbers>

namespace ndm {

namespace {

using RowMajorMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LayerShape {
  int in;
  int out;
  std::size_t offset;  // start of W; b follows at offset + in*out
};

std::vector<LayerShape> layer_shapes(const NetSpec& spec) {
  std::vector<LayerShape> shapes;
  std::size_t offset = 0;
  int in = spec.input_dim;
  auto push = [&](int out) {
    shapes.push_back({in, out, offset});
    offset += static_cast<std::size_t>(in) * out + out;
    in = out;
  };
  for (int w : spec.hidden_widths) push(w);
  push(spec.output_dim);
  return shapes;
}

Eigen::Map<const RowMajorMat> weight_view(const NetParams& p, const LayerShape& l) {
  return {p.values.data() + l.offset, l.out, l.in};
}

Eigen::Map<const Eigen::RowVectorXd> bias_view(const NetParams& p, const LayerShape& l) {
  return {p.values.data() + l.offset + static_cast<std::size_t>(l.in) * l.out, l.out};
}

void check_params(const NetSpec& spec, const NetParams& params) {
  if (params.values.size() != spec.parameter_count())
    throw ContractError("parameter count " + std::to_string(params.values.size()) +
                        " does not match spec (" + std::to_string(spec.parameter_count()) + ")");
}

void check_input(const NetSpec& spec, const Mat& x, const Vec& t) {
  if (x.cols() != spec.data_dim())
    throw ContractError("net input has " + std::to_string(x.cols()) + " columns, expected " +
                        std::to_string(spec.data_dim()));
  if (x.rows() != t.size()) throw ContractError("net input: batch size and time count differ");
  if (!t.allFinite()) throw ContractError("net input: non-finite time");
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double silu(double x) { return x * logistic(x); }
double silu_d1(double x) {
  const double s = logistic(x);
  return s * (1.0 + x * (1.0 - s));
}

}  // namespace

int NetSpec::embedding_width() const {
  switch (time_embedding) {
    case TimeEmbedding::RawScalar:
      return 1;
    case TimeEmbedding::Sinusoidal:
      return 2 * frequencies;
  }
  return 0;
}

std::size_t NetSpec::parameter_count() const {
  std::size_t n = 0;
  int in = input_dim;
  for (int w : hidden_widths) {
    n += static_cast<std::size_t>(in) * w + w;
    in = w;
  }
  return n + static_cast<std::size_t>(in) * output_dim + output_dim;
}

void NetSpec::validate() const {
  if (time_embedding == TimeEmbedding::Sinusoidal && frequencies < 1)
    throw ContractError("sinusoidal time embedding needs at least one frequency");
  if (output_dim < 1) throw ContractError("output_dim must be >= 1");
  if (input_dim <= embedding_width()) throw ContractError("input_dim must exceed the time-embedding width");
  for (int w : hidden_widths)
    if (w < 1) throw ContractError("hidden widths must be >= 1");
}

NetSpec NetSpec::for_data(int data_dim, std::vector<int> hidden, TimeEmbedding embedding, int frequencies) {
  NetSpec s;
  s.time_embedding = embedding;
  s.frequencies = embedding == TimeEmbedding::Sinusoidal ? frequencies : 0;
  s.input_dim = data_dim + s.embedding_width();
  s.hidden_widths = std::move(hidden);
  s.output_dim = data_dim;
  s.validate();
  return s;
}

// Sinusoidal frequencies are pi * j for j = 1..k: [sin(pi j t) ..., cos(pi j t) ...].
Mat embed_time(const NetSpec& spec, const Vec& t) {
  const int w = spec.embedding_width();
  Mat e(t.size(), w);
  if (spec.time_embedding == TimeEmbedding::RawScalar) {
    e.col(0) = t;
    return e;
  }
  const int k = spec.frequencies;
  for (int j = 0; j < k; ++j) {
    const double omega = std::numbers::pi * (j + 1);
    e.col(j) = (omega * t.array()).sin().matrix();
    e.col(k + j) = (omega * t.array()).cos().matrix();
  }
  return e;
}

Mat embed_time_derivative(const NetSpec& spec, const Vec& t) {
  const int w = spec.embedding_width();
  Mat e(t.size(), w);
  if (spec.time_embedding == TimeEmbedding::RawScalar) {
    e.setOnes();
    return e;
  }
  const int k = spec.frequencies;
  for (int j = 0; j < k; ++j) {
    const double omega = std::numbers::pi * (j + 1);
    e.col(j) = (omega * (omega * t.array()).cos()).matrix();
    e.col(k + j) = (-omega * (omega * t.array()).sin()).matrix();
  }
  return e;
}

NetParams init_params(const NetSpec& spec, std::mt19937_64& rng, bool zero_output_layer) {
  spec.validate();
  NetParams p;
  p.values.assign(spec.parameter_count(), 0.0);
  const auto shapes = layer_shapes(spec);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto& s = shapes[l];
    if (zero_output_layer && l + 1 == shapes.size()) continue;
    const double scale = 1.0 / std::sqrt(static_cast<double>(s.in));
    for (std::size_t i = 0; i < static_cast<std::size_t>(s.in) * s.out; ++i)
      p.values[s.offset + i] = scale * normal(rng);
  }
  return p;
}

Mat net_forward(const NetSpec& spec, const NetParams& params, const Mat& x, const Vec& t) {
  check_params(spec, params);
  check_input(spec, x, t);
  const auto shapes = layer_shapes(spec);
  Mat h(x.rows(), spec.input_dim);
  h << x, embed_time(spec, t);
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    Mat pre = h * weight_view(params, shapes[l]).transpose();
    pre.rowwise() += bias_view(params, shapes[l]);
    if (!pre.allFinite()) throw NumericalError("non-finite pre-activation", static_cast<int>(l));
    h = l + 1 < shapes.size() ? Mat(pre.unaryExpr(&silu)) : std::move(pre);
  }
  return h;
}

Vec net_forward(const NetSpec& spec, const NetParams& params, const Vec& x, double t) {
  Mat out = net_forward(spec, params, Mat(x.transpose()), Vec::Constant(1, t));
  return out.row(0).transpose();
}

ForwardWithTangent net_forward_with_time_derivative(const NetSpec& spec, const NetParams& params,
                                                    const Mat& x, const Vec& t) {
  check_params(spec, params);
  check_input(spec, x, t);
  const auto shapes = layer_shapes(spec);
  Mat h(x.rows(), spec.input_dim);
  h << x, embed_time(spec, t);
  Mat dh = Mat::Zero(x.rows(), spec.input_dim);
  dh.rightCols(spec.embedding_width()) = embed_time_derivative(spec, t);
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto w = weight_view(params, shapes[l]);
    Mat pre = h * w.transpose();
    pre.rowwise() += bias_view(params, shapes[l]);
    Mat dpre = dh * w.transpose();
    if (!pre.allFinite()) throw NumericalError("non-finite pre-activation", static_cast<int>(l));
    if (l + 1 < shapes.size()) {
      dh = dpre.cwiseProduct(pre.unaryExpr(&silu_d1));
      h = pre.unaryExpr(&silu);
    } else {
      h = std::move(pre);
      dh = std::move(dpre);
    }
  }
  return {std::move(h), std::move(dh)};
}

Vec net_time_derivative(const NetSpec& spec, const NetParams& params, const Vec& x, double t) {
  auto r = net_forward_with_time_derivative(spec, params, Mat(x.transpose()), Vec::Constant(1, t));
  return r.time_derivative.row(0).transpose();
}

BoundNet bind(ad::Tape& tape, const NetSpec& spec, const NetParams& params, bool trainable) {
  check_params(spec, params);
  BoundNet net;
  net.spec = &spec;
  net.trainable = trainable;
  for (const auto& l : layer_shapes(spec)) {
    Mat w = weight_view(params, l);
    Mat b = bias_view(params, l);
    net.weights.push_back(trainable ? tape.variable(std::move(w)) : tape.constant(std::move(w)));
    net.biases.push_back(trainable ? tape.variable(std::move(b)) : tape.constant(std::move(b)));
  }
  return net;
}

namespace {

ad::Var affine(const BoundNet& net, std::size_t l, ad::Var h) {
  return ad::matmul_nt(h, net.weights[l]) + net.biases[l];
}

void check_finite(ad::Var v, std::size_t layer) {
  if (!v.value().allFinite()) throw NumericalError("non-finite pre-activation", static_cast<int>(layer));
}

ad::Var time_input(const BoundNet& net, ad::Var x, const Vec& t) {
  const NetSpec& spec = *net.spec;
  if (x.cols() != spec.data_dim()) throw ContractError("net input: wrong data dimension");
  if (x.rows() != t.size()) throw ContractError("net input: batch size and time count differ");
  if (!t.allFinite()) throw ContractError("net input: non-finite time");
  return ad::concat_cols(x, x.tape()->constant(embed_time(spec, t)));
}

}  // namespace

ad::Var record_forward(const BoundNet& net, ad::Var x, const Vec& t) {
  ad::Var h = time_input(net, x, t);
  const std::size_t layers = net.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    ad::Var pre = affine(net, l, h);
    check_finite(pre, l);
    h = l + 1 < layers ? ad::silu(pre) : pre;
  }
  return h;
}

RecordedJvp record_forward_with_time_derivative(const BoundNet& net, ad::Var x, const Vec& t) {
  const NetSpec& spec = *net.spec;
  ad::Tape& tape = *x.tape();
  ad::Var h = time_input(net, x, t);
  Mat tangent_in = Mat::Zero(x.rows(), spec.input_dim);
  tangent_in.rightCols(spec.embedding_width()) = embed_time_derivative(spec, t);
  ad::Var dh = tape.constant(std::move(tangent_in));
  const std::size_t layers = net.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    ad::Var pre = affine(net, l, h);
    check_finite(pre, l);
    ad::Var dpre = ad::matmul_nt(dh, net.weights[l]);
    if (l + 1 < layers) {
      dh = ad::silu_grad(pre) * dpre;
      h = ad::silu(pre);
    } else {
      h = pre;
      dh = dpre;
    }
  }
  return {h, dh};
}

std::vector<double> collect_gradient(const ad::Tape& tape, const BoundNet& net) {
  std::vector<double> g(net.spec->parameter_count(), 0.0);
  const auto shapes = layer_shapes(*net.spec);
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto& s = shapes[l];
    const Mat gw = tape.grad(net.weights[l]);
    const Mat gb = tape.grad(net.biases[l]);
    Eigen::Map<RowMajorMat>(g.data() + s.offset, s.out, s.in) = gw;
    Eigen::Map<Eigen::RowVectorXd>(g.data() + s.offset + static_cast<std::size_t>(s.in) * s.out, s.out) = gb;
  }
  return g;
}

std::vector<double> net_grad(const NetSpec& spec, const NetParams& params, const Mat& x, const Vec& t,
                             const LossClosure& loss) {
  ad::Tape tape;
  BoundNet net = bind(tape, spec, params, true);
  ad::Var out = record_forward(net, tape.constant(x), t);
  ad::Var l = loss(out);
  if (!std::isfinite(l.value()(0, 0))) throw NumericalError("non-finite loss");
  tape.backward(l);
  return collect_gradient(tape, net);
}

}  // namespace ndm
