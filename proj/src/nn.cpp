#include "etuner/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "etuner/errors.hpp"
#include "etuner/kernels.hpp"

namespace etuner::nn {
namespace {

std::uint64_t mac2(std::size_t b, const DenseLayer& l) {
  return 2ull * b * l.in_dim() * l.out_dim();
}

// y = act(x W + b)
Tensor2 apply_layer(const DenseLayer& layer, const Tensor2& x) {
  Tensor2 y;
  kernels::gemm_nn(x, layer.weights, y);
  for (std::size_t r = 0; r < y.rows; ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < y.cols; ++c) {
      double v = row[c] + layer.bias[c];
      if (layer.activation == Activation::relu && v < 0.0) v = 0.0;
      row[c] = v;
    }
  }
  return y;
}

void check_batch(const Network& net, const Tensor2& batch) {
  if (batch.cols != net.input_dim()) {
    throw ShapeError("batch has " + std::to_string(batch.cols) + " columns, network expects " +
                     std::to_string(net.input_dim()));
  }
}

void check_labels(const Network& net, const Tensor2& batch, std::span<const int> labels) {
  if (labels.size() != batch.rows) throw InputError("label count does not match batch rows");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= net.class_count) {
      throw InputError("label " + std::to_string(y) + " out of range");
    }
  }
}

// Softmax cross-entropy; returns mean loss and writes (p - onehot) / B.
double softmax_xent(const Tensor2& logits, std::span<const int> labels, Tensor2* dlogits) {
  const double inv_b = 1.0 / static_cast<double>(logits.rows);
  double total = 0.0;
  if (dlogits) *dlogits = Tensor2(logits.rows, logits.cols);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    auto row = logits.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double log_z = mx + std::log(z);
    total += log_z - row[static_cast<std::size_t>(labels[r])];
    if (dlogits) {
      auto d = dlogits->row(r);
      for (std::size_t c = 0; c < row.size(); ++c) d[c] = std::exp(row[c] - log_z) * inv_b;
      d[static_cast<std::size_t>(labels[r])] -= inv_b;
    }
  }
  return total * inv_b;
}

}  // namespace

FlopReport& FlopReport::operator+=(const FlopReport& o) {
  fwd_flops += o.fwd_flops;
  bwd_act_flops += o.bwd_act_flops;
  bwd_wgt_flops += o.bwd_wgt_flops;
  activation_mem_units = std::max(activation_mem_units, o.activation_mem_units);
  return *this;
}

Network Network::make(std::span<const std::size_t> dims, std::uint64_t seed) {
  if (dims.size() < 3) throw ShapeError("network needs input, >=1 hidden and class dims");
  for (auto d : dims) {
    if (d == 0) throw ShapeError("zero layer width");
  }
  std::mt19937_64 rng(seed);
  auto make_layer = [&](std::size_t in, std::size_t out, Activation act) {
    DenseLayer l;
    l.weights = Tensor2(in, out);
    l.bias.assign(out, 0.0);
    l.activation = act;
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (auto& w : l.weights.data) w = u(rng);
    return l;
  };
  Network net;
  for (std::size_t i = 0; i + 2 < dims.size(); ++i) {
    net.layers.push_back(make_layer(dims[i], dims[i + 1], Activation::relu));
  }
  net.head = make_layer(dims[dims.size() - 2], dims.back(), Activation::identity);
  net.class_count = dims.back();
  return net;
}

std::size_t Network::input_dim() const {
  return layers.empty() ? head.in_dim() : layers.front().in_dim();
}

std::ptrdiff_t Network::frozen_prefix() const {
  std::ptrdiff_t p = -1;
  for (std::size_t i = 0; i < chain_length(); ++i) {
    if (!at(i).frozen) break;
    p = static_cast<std::ptrdiff_t>(i);
  }
  return p;
}

std::vector<bool> Network::freeze_mask() const {
  std::vector<bool> mask;
  for (const auto& l : layers) mask.push_back(l.frozen);
  return mask;
}

std::size_t Network::frozen_feature_count() const {
  return static_cast<std::size_t>(
      std::count_if(layers.begin(), layers.end(), [](const DenseLayer& l) { return l.frozen; }));
}

void Network::validate() const {
  if (layers.empty()) throw ShapeError("network has no feature layers");
  for (std::size_t i = 0; i < chain_length(); ++i) {
    const auto& l = at(i);
    if (l.bias.size() != l.out_dim()) throw ShapeError("bias length mismatch");
    if (i + 1 < chain_length() && at(i + 1).in_dim() != l.out_dim()) {
      throw ShapeError("layer " + std::to_string(i) + " output does not feed layer " +
                       std::to_string(i + 1));
    }
  }
  if (head.out_dim() != class_count) throw ShapeError("head width != class count");
}

std::uint64_t forward_cost(const Network& net, std::size_t batch, std::size_t upto) {
  std::uint64_t f = 0;
  for (std::size_t i = 0; i < upto && i < net.chain_length(); ++i) f += mac2(batch, net.at(i));
  return f;
}

std::uint64_t parameter_count(const Network& net) {
  std::uint64_t n = 0;
  for (std::size_t i = 0; i < net.chain_length(); ++i) {
    const auto& l = net.at(i);
    n += l.weights.data.size() + l.bias.size();
  }
  return n;
}

FlopReport training_cost(const Network& net, std::size_t batch) {
  FlopReport r;
  const std::ptrdiff_t p = net.frozen_prefix();
  r.fwd_flops = forward_cost(net, batch, net.chain_length());
  for (std::size_t i = 0; i < net.chain_length(); ++i) {
    const auto& l = net.at(i);
    if (!l.frozen) {
      r.bwd_wgt_flops += mac2(batch, l);
      r.activation_mem_units += batch * l.in_dim();
    }
    // Output gradient of layer i is produced by layer i+1's backward pass.
    if (i + 1 < net.chain_length() && static_cast<std::ptrdiff_t>(i) > p) {
      r.bwd_act_flops += mac2(batch, net.at(i + 1));
      r.activation_mem_units += batch * l.out_dim();
    }
  }
  return r;
}

ForwardResult forward(const Network& net, const Tensor2& batch, bool capture) {
  check_batch(net, batch);
  ForwardResult out;
  Tensor2 x = batch;
  for (const auto& layer : net.layers) {
    x = apply_layer(layer, x);
    if (capture) out.features.push_back(x);
  }
  out.logits = apply_layer(net.head, x);
  out.flops.fwd_flops = forward_cost(net, batch.rows, net.chain_length());
  return out;
}

std::vector<FeatureMatrix> capture_features(const Network& net, const Tensor2& batch,
                                            std::size_t upto) {
  check_batch(net, batch);
  std::vector<FeatureMatrix> feats;
  Tensor2 x = batch;
  for (std::size_t i = 0; i < upto && i < net.layers.size(); ++i) {
    x = apply_layer(net.layers[i], x);
    feats.push_back(x);
  }
  return feats;
}

BackwardResult backward(const Network& net, const Tensor2& batch, std::span<const int> labels,
                        const BackwardOptions& opts) {
  check_batch(net, batch);
  check_labels(net, batch, labels);
  const std::size_t chain = net.chain_length();
  const std::size_t b = batch.rows;

  // inputs[i] feeds chain layer i; inputs[chain] holds the logits.
  std::vector<Tensor2> inputs;
  inputs.reserve(chain + 1);
  inputs.push_back(batch);
  for (std::size_t i = 0; i < chain; ++i) inputs.push_back(apply_layer(net.at(i), inputs.back()));

  BackwardResult res;
  res.grads.resize(chain);
  res.flops = training_cost(net, b);
  if (opts.compute_frozen_grads) {
    for (std::size_t i = 0; i < chain; ++i) {
      if (net.at(i).frozen) res.flops.bwd_wgt_flops += mac2(b, net.at(i));
    }
  }

  Tensor2 grad_out;
  res.loss = softmax_xent(inputs[chain], labels, &grad_out);

  const std::ptrdiff_t p = net.frozen_prefix();
  for (std::size_t i = chain; i-- > 0;) {
    const auto& layer = net.at(i);
    if (!layer.frozen || opts.compute_frozen_grads) {
      LayerGrad g;
      kernels::gemm_tn(inputs[i], grad_out, g.weights);
      g.bias.assign(layer.out_dim(), 0.0);
      for (std::size_t r = 0; r < b; ++r) {
        auto row = grad_out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) g.bias[c] += row[c];
      }
      res.grads[i] = std::move(g);
    }
    if (i == 0) break;
    if (!opts.compute_frozen_grads && static_cast<std::ptrdiff_t>(i) - 1 <= p) break;
    Tensor2 grad_in;
    kernels::gemm_nt(grad_out, layer.weights, grad_in);
    const auto& prev = net.at(i - 1);
    if (prev.activation == Activation::relu) {
      const Tensor2& act = inputs[i];
      for (std::size_t k = 0; k < grad_in.data.size(); ++k) {
        if (act.data[k] <= 0.0) grad_in.data[k] = 0.0;
      }
    }
    grad_out = std::move(grad_in);
  }
  return res;
}

double loss(const Network& net, const Tensor2& batch, std::span<const int> labels) {
  check_labels(net, batch, labels);
  return softmax_xent(forward(net, batch, false).logits, labels, nullptr);
}

void sgd_step(Network& net, const std::vector<std::optional<LayerGrad>>& grads, double lr) {
  if (!(lr > 0.0)) throw InputError("learning rate must be positive");
  if (grads.size() != net.chain_length()) throw ShapeError("gradient list length mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& layer = net.at(i);
    if (layer.frozen || !grads[i]) continue;
    const auto& g = *grads[i];
    if (g.weights.rows != layer.weights.rows || g.weights.cols != layer.weights.cols ||
        g.bias.size() != layer.bias.size()) {
      throw ShapeError("gradient shape mismatch at layer " + std::to_string(i));
    }
    kernels::axpy(-lr, g.weights.data, layer.weights.data);
    kernels::axpy(-lr, g.bias, layer.bias);
  }
}

void cwr_begin_round(Network& net, CwrBank& bank, std::span<const int> classes) {
  auto& head = net.head;
  const std::set<int> in_round(classes.begin(), classes.end());
  for (std::size_t col = 0; col < head.out_dim(); ++col) {
    const int c = static_cast<int>(col);
    if (bank.open.count(c)) continue;
    const auto it = in_round.count(c) ? bank.consolidated.find(c) : bank.consolidated.end();
    for (std::size_t r = 0; r < head.in_dim(); ++r) {
      head.weights(r, col) = it == bank.consolidated.end() ? 0.0 : it->second.weights[r];
    }
    head.bias[col] = it == bank.consolidated.end() ? 0.0 : it->second.bias;
    if (in_round.count(c)) bank.open.insert(c);
  }
}

void cwr_consolidate(const Network& net, CwrBank& bank) {
  const auto& head = net.head;
  for (int c : bank.open) {
    const auto col = static_cast<std::size_t>(c);
    auto& n = bank.seen_counts[c];
    auto& row = bank.consolidated[c];
    if (row.weights.empty()) row.weights.assign(head.in_dim(), 0.0);
    const double keep = static_cast<double>(n) / static_cast<double>(n + 1);
    const double add = 1.0 / static_cast<double>(n + 1);
    for (std::size_t r = 0; r < head.in_dim(); ++r) {
      row.weights[r] = keep * row.weights[r] + add * head.weights(r, col);
    }
    row.bias = keep * row.bias + add * head.bias[col];
    ++n;
  }
  bank.open.clear();
}

void cwr_seed(const Network& net, CwrBank& bank, std::span<const int> classes) {
  for (int c : classes) {
    const auto col = static_cast<std::size_t>(c);
    CwrRow row;
    row.weights.resize(net.head.in_dim());
    for (std::size_t r = 0; r < net.head.in_dim(); ++r) row.weights[r] = net.head.weights(r, col);
    row.bias = net.head.bias[col];
    bank.consolidated[c] = std::move(row);
    bank.seen_counts[c] = 1;
  }
}

InferenceOutput infer(const Network& net, const CwrBank& bank, const Tensor2& batch) {
  check_batch(net, batch);
  Tensor2 x = batch;
  for (const auto& layer : net.layers) x = apply_layer(layer, x);
  InferenceOutput out;
  out.flops = forward_cost(net, batch.rows, net.layers.size());
  if (bank.empty()) {
    out.logits = apply_layer(net.head, x);
    out.class_ids.resize(net.class_count);
    for (std::size_t c = 0; c < net.class_count; ++c) out.class_ids[c] = static_cast<int>(c);
    out.flops += mac2(batch.rows, net.head);
    return out;
  }
  std::set<int> answerable(bank.open);
  for (const auto& [cls, row] : bank.consolidated) answerable.insert(cls);
  DenseLayer head;
  head.activation = Activation::identity;
  head.weights = Tensor2(net.head.in_dim(), answerable.size());
  for (int cls : answerable) {
    const std::size_t col = out.class_ids.size();
    if (bank.open.count(cls)) {
      const auto src = static_cast<std::size_t>(cls);
      for (std::size_t r = 0; r < head.weights.rows; ++r) head.weights(r, col) = net.head.weights(r, src);
      head.bias.push_back(net.head.bias[src]);
    } else {
      const auto& row = bank.consolidated.at(cls);
      for (std::size_t r = 0; r < head.weights.rows; ++r) head.weights(r, col) = row.weights[r];
      head.bias.push_back(row.bias);
    }
    out.class_ids.push_back(cls);
  }
  out.logits = apply_layer(head, x);
  out.flops += mac2(batch.rows, head);
  return out;
}

std::vector<int> predict(const InferenceOutput& out) {
  std::vector<int> pred(out.logits.rows);
  for (std::size_t r = 0; r < out.logits.rows; ++r) {
    auto row = out.logits.row(r);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    pred[r] = out.class_ids[best];
  }
  return pred;
}

double evaluate(const Network& net, const CwrBank& bank, const Tensor2& data,
                std::span<const int> labels) {
  if (data.rows == 0) throw InputError("evaluate: empty data");
  if (labels.size() != data.rows) throw InputError("evaluate: label count mismatch");
  const auto pred = predict(infer(net, bank, data));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

}  // namespace etuner::nn
