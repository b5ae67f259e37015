#pragma once

// Small dense neural stack on Eigen: graph convolution, fully connected
// layers, sigmoid guide head, dueling value head, reverse-mode gradients,
// Adam, and JSON weight files.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "eocs/env.hpp"
#include "eocs/grid.hpp"

namespace eocs::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

enum class LayerKind { graph_conv, dense };
enum class Activation { relu, sigmoid, linear };
enum class HeadKind { guide_sigmoid, dueling, plain };

inline const char* to_string(LayerKind k) { return k == LayerKind::graph_conv ? "graph_conv" : "dense"; }
inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::linear: return "linear";
  }
  return "linear";
}
inline const char* to_string(HeadKind h) {
  switch (h) {
    case HeadKind::guide_sigmoid: return "guide_sigmoid";
    case HeadKind::dueling: return "dueling";
    case HeadKind::plain: return "plain";
  }
  return "plain";
}

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  int in_dim = 0;
  int out_dim = 0;
  Activation activation = Activation::linear;

  bool operator==(const LayerSpec&) const = default;
};

struct Layer {
  LayerSpec spec;
  Matrix weight;  // in_dim x out_dim
  Matrix bias;    // 1 x out_dim

  bool operator==(const Layer& o) const { return spec == o.spec && weight == o.weight && bias == o.bias; }
};

/// Hidden layers (graph convolutions, then dense) followed by the head layers.
/// guide_sigmoid and plain have one head layer with m outputs; dueling has a
/// scalar value head followed by an m-output advantage head.
struct QNetworkParams {
  std::string case_name;
  int n = 0;
  int m = 0;
  int features = 0;  // per-node input width
  HeadKind head = HeadKind::dueling;
  std::vector<Layer> layers;
  std::vector<Layer> heads;

  bool operator==(const QNetworkParams&) const = default;
};

struct Architecture {
  std::vector<int> graph_widths{64, 64};
  std::vector<int> dense_widths{256, 128};
};

/// Every trainable tensor in declaration order (weight, bias per layer).
inline std::vector<Matrix*> tensors(QNetworkParams& p) {
  std::vector<Matrix*> out;
  for (auto* group : {&p.layers, &p.heads})
    for (auto& l : *group) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  return out;
}
inline std::vector<const Matrix*> tensors(const QNetworkParams& p) {
  std::vector<const Matrix*> out;
  for (const auto* group : {&p.layers, &p.heads})
    for (const auto& l : *group) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  return out;
}

inline QNetworkParams zeros_like(const QNetworkParams& p) {
  QNetworkParams z = p;
  for (auto* t : tensors(z)) t->setZero();
  return z;
}

inline std::size_t parameter_count(const QNetworkParams& p) {
  std::size_t total = 0;
  for (const auto* t : tensors(p)) total += static_cast<std::size_t>(t->size());
  return total;
}

/// Builds a network for n buses with `features` inputs per node (0 selects
/// 3n+1) and m line outputs.
inline QNetworkParams make_network(int n, int m, HeadKind head, const Architecture& arch, std::mt19937_64& rng,
                                   std::string case_name = {}, int features = 0) {
  if (n < 1 || m < 1) throw std::invalid_argument("make_network: n and m must be >= 1");
  QNetworkParams p;
  p.case_name = std::move(case_name);
  p.n = n;
  p.m = m;
  p.features = features > 0 ? features : 3 * n + 1;
  p.head = head;

  auto init = [&rng](const LayerSpec& spec) {
    Layer l;
    l.spec = spec;
    // He-uniform for rectifier layers, Glorot-uniform otherwise.
    const double fan_in = spec.in_dim, fan_out = spec.out_dim;
    const double limit = spec.activation == Activation::relu ? std::sqrt(6.0 / fan_in)
                                                             : std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    l.weight.resize(spec.in_dim, spec.out_dim);
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = u(rng);
    l.bias = Matrix::Zero(1, spec.out_dim);
    return l;
  };

  int width = p.features;
  for (int w : arch.graph_widths) {
    p.layers.push_back(init({LayerKind::graph_conv, width, w, Activation::relu}));
    width = w;
  }
  width *= n;  // node-major flatten
  for (int w : arch.dense_widths) {
    p.layers.push_back(init({LayerKind::dense, width, w, Activation::relu}));
    width = w;
  }
  switch (head) {
    case HeadKind::guide_sigmoid:
      p.heads.push_back(init({LayerKind::dense, width, m, Activation::sigmoid}));
      break;
    case HeadKind::plain:
      p.heads.push_back(init({LayerKind::dense, width, m, Activation::linear}));
      break;
    case HeadKind::dueling:
      p.heads.push_back(init({LayerKind::dense, width, 1, Activation::linear}));
      p.heads.push_back(init({LayerKind::dense, width, m, Activation::linear}));
      break;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Primitive operations

inline Matrix activate(const Matrix& z, Activation a) {
  switch (a) {
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::sigmoid: return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    case Activation::linear: return z;
  }
  return z;
}

/// d(activation)/dz given pre-activation z and output y.
inline Matrix activation_grad(const Matrix& z, const Matrix& y, Activation a) {
  switch (a) {
    case Activation::relu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::sigmoid: return (y.array() * (1.0 - y.array())).matrix();
    case Activation::linear: return Matrix::Ones(z.rows(), z.cols());
  }
  return Matrix::Ones(z.rows(), z.cols());
}

/// activation(Â·H·W + bias), bias broadcast per row.
inline Matrix gcn_forward(const Matrix& h, const Matrix& adjacency, const Matrix& weight, const Matrix& bias,
                          Activation activation) {
  if (adjacency.cols() != h.rows() || h.cols() != weight.rows() || bias.cols() != weight.cols())
    throw std::invalid_argument("gcn_forward: shape mismatch");
  Matrix z = adjacency * h * weight;
  z.rowwise() += bias.row(0);
  return activate(z, activation);
}

/// Q_a = V + A_a - mean(A).
inline Vector dueling_combine(double value, const Vector& advantage) {
  if (advantage.size() < 1) throw std::invalid_argument("dueling_combine: empty advantage vector");
  return (advantage.array() + (value - advantage.mean())).matrix();
}

inline int argmax_valid(const Vector& q, std::span<const std::uint8_t> valid) {
  int best = -1;
  for (int a = 0; a < q.size(); ++a) {
    if (!valid.empty() && !valid[static_cast<std::size_t>(a)]) continue;
    if (best < 0 || q(a) > q(best)) best = a;
  }
  return best;
}

/// Blended double-DQN target: (1-α)·Q_p(s,a) + α·(r + γ·Q_t(s', argmax_a' Q_p(s',a'))).
inline double d3qn_target(double q_pred_sa, double reward, bool done, const Vector& q_pred_next,
                          const Vector& q_tgt_next, std::span<const std::uint8_t> valid_next, double alpha,
                          double gamma) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("d3qn_target: alpha must lie in (0,1]");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("d3qn_target: gamma must lie in (0,1]");
  double bootstrap = reward;
  if (!done) {
    const int a_star = argmax_valid(q_pred_next, valid_next);
    if (a_star >= 0) bootstrap += gamma * q_tgt_next(a_star);
  }
  return (1.0 - alpha) * q_pred_sa + alpha * bootstrap;
}

/// Lines to trip from guide outputs: in-service, non-protected lines scoring
/// above 0.5, at most k of them, highest output first (ties: lower id).
inline std::vector<LineId> select_eoc(const Vector& outputs, int k, LineId protected_line,
                                      const TopologyState& status) {
  if (k < 1) throw std::invalid_argument("select_eoc: k must be >= 1");
  std::vector<LineId> candidates;
  for (LineId l = 0; l < outputs.size(); ++l)
    if (l != protected_line && status.in_service(l) && outputs(l) > 0.5) candidates.push_back(l);
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](LineId a, LineId b) { return outputs(a) > outputs(b); });
  if (static_cast<int>(candidates.size()) > k) candidates.resize(static_cast<std::size_t>(k));
  return candidates;
}

// ---------------------------------------------------------------------------
// Forward / backward

/// Intermediate values of one forward pass, kept for backpropagation.
struct ForwardTrace {
  std::vector<Matrix> inputs;      // per hidden layer input (node matrix or flattened row)
  std::vector<Matrix> aggregated;  // Â·H for graph layers, input row for dense layers
  std::vector<Matrix> pre;         // pre-activations
  std::vector<Matrix> post;        // activations
  int flatten_rows = 0;            // node count at the graph->dense boundary
  int flatten_cols = 0;
  Matrix trunk;                    // 1 x width input to the heads
  std::vector<Matrix> head_pre;    // per head layer
  Vector logits;                   // guide: pre-sigmoid scores; otherwise equals output
  Vector output;                   // guide: probabilities; value: Q
};

namespace detail {

inline Matrix flatten_node_major(const Matrix& h) {
  Matrix row(1, h.size());
  for (Eigen::Index i = 0; i < h.rows(); ++i)
    for (Eigen::Index j = 0; j < h.cols(); ++j) row(0, i * h.cols() + j) = h(i, j);
  return row;
}

inline Matrix unflatten_node_major(const Matrix& row, int rows, int cols) {
  Matrix h(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) h(i, j) = row(0, static_cast<Eigen::Index>(i) * cols + j);
  return h;
}

}  // namespace detail

inline ForwardTrace forward(const QNetworkParams& p, const Observation& obs) {
  if (obs.features.rows() != p.n || obs.adjacency.rows() != p.n || obs.features.cols() != p.features)
    throw std::invalid_argument("forward: observation is " + std::to_string(obs.features.rows()) + "x" +
                                std::to_string(obs.features.cols()) + ", network expects " + std::to_string(p.n) +
                                "x" + std::to_string(p.features));
  ForwardTrace t;
  Matrix h = obs.features;
  bool flattened = false;
  for (const auto& layer : p.layers) {
    if (layer.spec.kind == LayerKind::graph_conv) {
      if (flattened) throw std::invalid_argument("forward: graph layer after dense layer");
      if (h.cols() != layer.spec.in_dim) throw std::invalid_argument("forward: graph layer input width mismatch");
      t.inputs.push_back(h);
      Matrix agg = obs.adjacency * h;
      Matrix z = agg * layer.weight;
      z.rowwise() += layer.bias.row(0);
      t.aggregated.push_back(std::move(agg));
      h = activate(z, layer.spec.activation);
      t.pre.push_back(std::move(z));
      t.post.push_back(h);
    } else {
      if (!flattened) {
        t.flatten_rows = static_cast<int>(h.rows());
        t.flatten_cols = static_cast<int>(h.cols());
        h = detail::flatten_node_major(h);
        flattened = true;
      }
      if (h.cols() != layer.spec.in_dim) throw std::invalid_argument("forward: dense layer input width mismatch");
      t.inputs.push_back(h);
      t.aggregated.push_back(h);
      Matrix z = h * layer.weight + layer.bias;
      h = activate(z, layer.spec.activation);
      t.pre.push_back(std::move(z));
      t.post.push_back(h);
    }
  }
  if (!flattened) {
    t.flatten_rows = static_cast<int>(h.rows());
    t.flatten_cols = static_cast<int>(h.cols());
    h = detail::flatten_node_major(h);
  }
  t.trunk = h;
  for (const auto& head : p.heads) {
    if (h.cols() != head.spec.in_dim) throw std::invalid_argument("forward: head input width mismatch");
    t.head_pre.push_back(h * head.weight + head.bias);
  }
  switch (p.head) {
    case HeadKind::guide_sigmoid:
      t.logits = t.head_pre.at(0).row(0).transpose();
      t.output = activate(t.logits, Activation::sigmoid);
      break;
    case HeadKind::plain:
      t.logits = t.head_pre.at(0).row(0).transpose();
      t.output = t.logits;
      break;
    case HeadKind::dueling: {
      const double v = t.head_pre.at(0)(0, 0);
      t.output = dueling_combine(v, t.head_pre.at(1).row(0).transpose());
      t.logits = t.output;
      break;
    }
  }
  return t;
}

inline Vector guide_forward(const Observation& obs, const QNetworkParams& p) {
  if (p.head != HeadKind::guide_sigmoid) throw std::invalid_argument("guide_forward: network is not a guide network");
  return forward(p, obs).output;
}

inline Vector value_forward(const Observation& obs, const QNetworkParams& p) {
  if (p.head == HeadKind::guide_sigmoid) throw std::invalid_argument("value_forward: network is a guide network");
  return forward(p, obs).output;
}

/// Accumulates parameter gradients into `grad` given d(loss)/d(logits), where
/// logits are pre-sigmoid scores for the guide head and Q otherwise.
inline void backward(const QNetworkParams& p, const Observation& obs, const ForwardTrace& t, const Vector& d_logits,
                     QNetworkParams& grad) {
  const RowVector d_out = d_logits.transpose();
  Matrix d_trunk;
  if (p.head == HeadKind::dueling) {
    const double dv = d_out.sum();
    const RowVector da = d_out.array() - d_out.mean();
    grad.heads[0].weight += t.trunk.transpose() * dv;
    grad.heads[0].bias(0, 0) += dv;
    grad.heads[1].weight += t.trunk.transpose() * da;
    grad.heads[1].bias += da;
    d_trunk = p.heads[0].weight.transpose() * dv + da * p.heads[1].weight.transpose();
  } else {
    grad.heads[0].weight += t.trunk.transpose() * d_out;
    grad.heads[0].bias += d_out;
    d_trunk = d_out * p.heads[0].weight.transpose();
  }

  Matrix d_h = d_trunk;
  bool in_graph_part = false;
  for (int i = static_cast<int>(p.layers.size()) - 1; i >= 0; --i) {
    const auto& layer = p.layers[static_cast<std::size_t>(i)];
    auto& g = grad.layers[static_cast<std::size_t>(i)];
    if (layer.spec.kind == LayerKind::graph_conv && !in_graph_part) {
      d_h = detail::unflatten_node_major(d_h, t.flatten_rows, t.flatten_cols);
      in_graph_part = true;
    }
    const Matrix d_z =
        d_h.cwiseProduct(activation_grad(t.pre[static_cast<std::size_t>(i)], t.post[static_cast<std::size_t>(i)],
                                         layer.spec.activation));
    g.weight.noalias() += t.aggregated[static_cast<std::size_t>(i)].transpose() * d_z;
    g.bias += d_z.colwise().sum();
    if (i == 0) break;
    if (layer.spec.kind == LayerKind::graph_conv)
      d_h = obs.adjacency.transpose() * (d_z * layer.weight.transpose());
    else
      d_h = d_z * layer.weight.transpose();
  }
}

// ---------------------------------------------------------------------------
// Losses and training

enum class LossKind { bce, mse };

/// One training example. For bce `target` holds m labels; for mse it holds the
/// scalar target for `action`.
struct TrainSample {
  const Observation* obs = nullptr;
  Vector target;
  int action = -1;
};

struct LossAndGradient {
  double loss = 0.0;
  QNetworkParams grad;
};

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline LossAndGradient loss_and_gradient(const QNetworkParams& p, std::span<const TrainSample> batch, LossKind kind) {
  if (batch.empty()) throw std::invalid_argument("loss_and_gradient: empty batch");
  LossAndGradient out{0.0, zeros_like(p)};
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const auto& sample : batch) {
    const ForwardTrace t = forward(p, *sample.obs);
    Vector d = Vector::Zero(t.logits.size());
    if (kind == LossKind::bce) {
      if (sample.target.size() != t.logits.size()) throw std::invalid_argument("bce: label length mismatch");
      const double inv_m = 1.0 / static_cast<double>(t.logits.size());
      for (Eigen::Index j = 0; j < t.logits.size(); ++j) {
        const double z = t.logits(j), y = sample.target(j);
        out.loss += (softplus(z) - y * z) * inv_m * inv_b;
        d(j) = (t.output(j) - y) * inv_m * inv_b;
      }
    } else {
      if (sample.action < 0 || sample.action >= t.output.size()) throw std::invalid_argument("mse: action out of range");
      const double diff = t.output(sample.action) - sample.target(0);
      out.loss += diff * diff * inv_b;
      d(sample.action) = 2.0 * diff * inv_b;
    }
    backward(p, *sample.obs, t, d, out.grad);
  }
  return out;
}

/// Adam moments for every tensor of one network.
struct OptimizerState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;

  OptimizerState() = default;
  OptimizerState(const QNetworkParams& p, double lr) : learning_rate(lr) {
    if (!(lr > 0.0)) throw std::invalid_argument("OptimizerState: learning rate must be > 0");
    for (const auto* t : tensors(p)) {
      first_moment.push_back(Matrix::Zero(t->rows(), t->cols()));
      second_moment.push_back(Matrix::Zero(t->rows(), t->cols()));
    }
  }
};

inline void adam_update(QNetworkParams& p, OptimizerState& opt, QNetworkParams& grad) {
  auto params = tensors(p);
  auto grads = tensors(grad);
  if (opt.first_moment.size() != params.size()) throw std::invalid_argument("adam_update: optimizer/params mismatch");
  ++opt.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = opt.first_moment[i];
    auto& v = opt.second_moment[i];
    const Matrix& g = *grads[i];
    m = opt.beta1 * m + (1.0 - opt.beta1) * g;
    v = opt.beta2 * v + (1.0 - opt.beta2) * g.cwiseAbs2();
    params[i]->array() -= opt.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + opt.epsilon);
  }
}

/// One optimizer step on the mean batch loss; returns that loss.
inline double train_step(QNetworkParams& p, OptimizerState& opt, std::span<const TrainSample> batch, LossKind kind) {
  auto lg = loss_and_gradient(p, batch, kind);
  if (!std::isfinite(lg.loss))
    throw std::runtime_error(std::string("train_step: non-finite ") + (kind == LossKind::bce ? "bce" : "mse") +
                             " loss over batch of " + std::to_string(batch.size()));
  adam_update(p, opt, lg.grad);
  return lg.loss;
}

// ---------------------------------------------------------------------------
// Weight files

inline constexpr int kWeightFormatVersion = 1;

class WeightFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline nlohmann::ordered_json layer_to_json(const Layer& l) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(l.spec.kind);
  j["in"] = l.spec.in_dim;
  j["out"] = l.spec.out_dim;
  j["activation"] = to_string(l.spec.activation);
  std::vector<double> w;
  w.reserve(static_cast<std::size_t>(l.weight.size()));
  for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
  j["weight"] = w;
  j["bias"] = std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size());
  return j;
}

inline Layer layer_from_json(const nlohmann::json& j, const std::string& where) {
  Layer l;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "graph_conv")
    l.spec.kind = LayerKind::graph_conv;
  else if (kind == "dense")
    l.spec.kind = LayerKind::dense;
  else
    throw WeightFileError(where + ": unknown layer kind '" + kind + "'");
  const auto act = j.at("activation").get<std::string>();
  if (act == "relu")
    l.spec.activation = Activation::relu;
  else if (act == "sigmoid")
    l.spec.activation = Activation::sigmoid;
  else if (act == "linear")
    l.spec.activation = Activation::linear;
  else
    throw WeightFileError(where + ": unknown activation '" + act + "'");
  l.spec.in_dim = j.at("in").get<int>();
  l.spec.out_dim = j.at("out").get<int>();
  if (l.spec.in_dim <= 0 || l.spec.out_dim <= 0) throw WeightFileError(where + ": layer dims must be > 0");
  const auto w = j.at("weight").get<std::vector<double>>();
  const auto b = j.at("bias").get<std::vector<double>>();
  if (w.size() != static_cast<std::size_t>(l.spec.in_dim) * static_cast<std::size_t>(l.spec.out_dim))
    throw WeightFileError(where + ": weight array has " + std::to_string(w.size()) + " values, declared shape " +
                          std::to_string(l.spec.in_dim) + "x" + std::to_string(l.spec.out_dim));
  if (b.size() != static_cast<std::size_t>(l.spec.out_dim))
    throw WeightFileError(where + ": bias array length mismatch");
  l.weight.resize(l.spec.in_dim, l.spec.out_dim);
  for (int r = 0; r < l.spec.in_dim; ++r)
    for (int c = 0; c < l.spec.out_dim; ++c)
      l.weight(r, c) = w[static_cast<std::size_t>(r) * static_cast<std::size_t>(l.spec.out_dim) + c];
  l.bias = Eigen::Map<const Matrix>(b.data(), 1, l.spec.out_dim);
  return l;
}

}  // namespace detail

inline std::string save_params(const QNetworkParams& p) {
  nlohmann::ordered_json j;
  j["format_version"] = kWeightFormatVersion;
  j["case_name"] = p.case_name;
  j["n"] = p.n;
  j["m"] = p.m;
  j["features"] = p.features;
  j["head"] = to_string(p.head);
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : p.layers) j["layers"].push_back(detail::layer_to_json(l));
  j["heads"] = nlohmann::ordered_json::array();
  for (const auto& l : p.heads) j["heads"].push_back(detail::layer_to_json(l));
  return j.dump() + "\n";
}

inline QNetworkParams load_params(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw WeightFileError(std::string("malformed weight file: ") + e.what());
  }
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kWeightFormatVersion)
      throw WeightFileError("weight file version " + std::to_string(version) + " unsupported (expected " +
                            std::to_string(kWeightFormatVersion) + ")");
    QNetworkParams p;
    p.case_name = j.at("case_name").get<std::string>();
    p.n = j.at("n").get<int>();
    p.m = j.at("m").get<int>();
    p.features = j.at("features").get<int>();
    if (p.n < 1 || p.m < 1 || p.features < 1) throw WeightFileError("n, m and features must be >= 1");
    const auto head = j.at("head").get<std::string>();
    if (head == "guide_sigmoid")
      p.head = HeadKind::guide_sigmoid;
    else if (head == "dueling")
      p.head = HeadKind::dueling;
    else if (head == "plain")
      p.head = HeadKind::plain;
    else
      throw WeightFileError("unknown head kind '" + head + "'");
    const auto& layers = j.at("layers");
    for (std::size_t i = 0; i < layers.size(); ++i)
      p.layers.push_back(detail::layer_from_json(layers[i], "layers[" + std::to_string(i) + "]"));
    const auto& heads = j.at("heads");
    for (std::size_t i = 0; i < heads.size(); ++i)
      p.heads.push_back(detail::layer_from_json(heads[i], "heads[" + std::to_string(i) + "]"));

    // Architecture must chain.
    int width = p.features;
    bool flat = false;
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
      const auto& s = p.layers[i].spec;
      if (s.kind == LayerKind::dense && !flat) {
        width *= p.n;
        flat = true;
      } else if (s.kind == LayerKind::graph_conv && flat) {
        throw WeightFileError("layers[" + std::to_string(i) + "]: graph layer after dense layer");
      }
      if (s.in_dim != width) throw WeightFileError("layers[" + std::to_string(i) + "]: input width mismatch");
      width = s.out_dim;
    }
    if (!flat) width *= p.n;
    const std::size_t expected_heads = p.head == HeadKind::dueling ? 2 : 1;
    if (p.heads.size() != expected_heads) throw WeightFileError("head layer count does not match head kind");
    for (std::size_t i = 0; i < p.heads.size(); ++i) {
      const int want_out = (p.head == HeadKind::dueling && i == 0) ? 1 : p.m;
      if (p.heads[i].spec.in_dim != width || p.heads[i].spec.out_dim != want_out)
        throw WeightFileError("heads[" + std::to_string(i) + "]: shape mismatch");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw WeightFileError(std::string("weight file: ") + e.what());
  }
}

/// Rejects weights built for a different grid size.
inline void check_compatible(const QNetworkParams& p, const GridCase& c) {
  if (p.n != c.bus_count() || p.m != c.line_count())
    throw WeightFileError("shape mismatch: weights are for n=" + std::to_string(p.n) + ", m=" + std::to_string(p.m) +
                          " but case '" + c.name() + "' has n=" + std::to_string(c.bus_count()) +
                          ", m=" + std::to_string(c.line_count()));
}

}  // namespace eocs::nn
