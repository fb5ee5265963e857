#pragma once

// Minimal dense classification network with exact backprop, per-layer freeze
// flags, training-cost accounting and a head-only CWR consolidation bank.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "etuner/tensor.hpp"

namespace etuner::nn {

enum class Activation { relu, identity };

struct DenseLayer {
  Tensor2 weights;  // in_dim x out_dim
  std::vector<double> bias;
  Activation activation = Activation::relu;
  bool frozen = false;

  std::size_t in_dim() const { return weights.rows; }
  std::size_t out_dim() const { return weights.cols; }
};

// Feature layers followed by a classifier head. Layer index `layers.size()`
// addresses the head wherever an index spans the whole chain.
struct Network {
  std::vector<DenseLayer> layers;
  DenseLayer head;
  std::size_t class_count = 0;

  // dims = {input, hidden..., classes}; needs at least one hidden width.
  // Xavier-uniform weights drawn from `seed`, zero biases.
  static Network make(std::span<const std::size_t> dims, std::uint64_t seed);

  std::size_t input_dim() const;
  std::size_t chain_length() const { return layers.size() + 1; }
  DenseLayer& at(std::size_t i) { return i < layers.size() ? layers[i] : head; }
  const DenseLayer& at(std::size_t i) const { return i < layers.size() ? layers[i] : head; }

  // Deepest p such that chain layers 0..p are all frozen, or -1.
  std::ptrdiff_t frozen_prefix() const;
  std::vector<bool> freeze_mask() const;
  std::size_t frozen_feature_count() const;

  // Throws ShapeError if neighbouring dimensions disagree.
  void validate() const;
};

// Weights plus biases over the whole chain.
std::uint64_t parameter_count(const Network& net);

// Dominant-term training cost: one multiply-accumulate = 2 FLOPs.
struct FlopReport {
  std::uint64_t fwd_flops = 0;
  std::uint64_t bwd_act_flops = 0;
  std::uint64_t bwd_wgt_flops = 0;
  std::uint64_t activation_mem_units = 0;

  std::uint64_t total() const { return fwd_flops + bwd_act_flops + bwd_wgt_flops; }
  FlopReport& operator+=(const FlopReport& o);
  bool operator==(const FlopReport&) const = default;
};

// Closed-form report for one training iteration on a batch of `batch` rows
// under the network's current freeze flags.
FlopReport training_cost(const Network& net, std::size_t batch);
// Forward-only cost through chain layers [0, upto).
std::uint64_t forward_cost(const Network& net, std::size_t batch, std::size_t upto);

struct ForwardResult {
  Tensor2 logits;
  std::vector<FeatureMatrix> features;  // post-activation, one per feature layer
  FlopReport flops;
};

ForwardResult forward(const Network& net, const Tensor2& batch, bool capture);

// Post-activation outputs of feature layers [0, upto) only.
std::vector<FeatureMatrix> capture_features(const Network& net, const Tensor2& batch,
                                            std::size_t upto);

struct LayerGrad {
  Tensor2 weights;
  std::vector<double> bias;
};

struct BackwardOptions {
  // Also compute (and return) weight gradients of frozen layers. Used to
  // check that skipping them does not perturb the active gradients.
  bool compute_frozen_grads = false;
};

struct BackwardResult {
  std::vector<std::optional<LayerGrad>> grads;  // indexed by chain position
  double loss = 0.0;                            // mean softmax cross-entropy
  FlopReport flops;
};

BackwardResult backward(const Network& net, const Tensor2& batch, std::span<const int> labels,
                        const BackwardOptions& opts = {});

// Mean softmax cross-entropy without gradients.
double loss(const Network& net, const Tensor2& batch, std::span<const int> labels);

// w <- w - lr * g for active layers; frozen layers are left untouched.
void sgd_step(Network& net, const std::vector<std::optional<LayerGrad>>& grads, double lr);

// Head-only CopyWeights-with-Re-init bank. Classes trained since the last
// consolidation are "open": their head columns carry the in-progress weights.
// Consolidation merges open columns into the bank by seen-count weighting.
struct CwrRow {
  std::vector<double> weights;  // in_dim of the head
  double bias = 0.0;
  bool operator==(const CwrRow&) const = default;
};

struct CwrBank {
  std::map<int, CwrRow> consolidated;
  std::map<int, std::size_t> seen_counts;
  std::set<int> open;

  bool empty() const { return consolidated.empty() && open.empty(); }
  bool operator==(const CwrBank&) const = default;
};

// Round start: columns of `classes` that are not open are re-initialised from
// the bank (zeros for unseen classes) and opened; columns of classes that are
// neither open nor in this round are zeroed while training.
void cwr_begin_round(Network& net, CwrBank& bank, std::span<const int> classes);
// Merges every open column into the bank, (n * bank + trained) / (n + 1), and
// closes it.
void cwr_consolidate(const Network& net, CwrBank& bank);
// One-round bracket end: consolidation after each round.
inline void cwr_end_round(const Network& net, CwrBank& bank) { cwr_consolidate(net, bank); }
// Seeds the bank from the current head for `classes` (count 1 each).
void cwr_seed(const Network& net, CwrBank& bank, std::span<const int> classes);

// Logits over the classes the model can answer for. With a non-empty bank
// only banked or open classes are scored: open classes use the live head
// column, the rest their consolidated row.
struct InferenceOutput {
  Tensor2 logits;               // rows x class_ids.size()
  std::vector<int> class_ids;   // column -> class id
  std::uint64_t flops = 0;
};

InferenceOutput infer(const Network& net, const CwrBank& bank, const Tensor2& batch);

std::vector<int> predict(const InferenceOutput& out);

// Fraction of argmax-correct rows. Throws InputError on empty data.
double evaluate(const Network& net, const CwrBank& bank, const Tensor2& data,
                std::span<const int> labels);

}  // namespace etuner::nn
