#pragma once

#include "slu/config.hpp"
#include "slu/ops.hpp"

#include <span>
#include <vector>

namespace slu {

template <typename S>
struct HeadRuntime {
  bool train = false;
  double dropout_keep = 1.0;
  Rng* rng = nullptr;
};

/// intent.attention.{w1,b1,w2,b2}, intent.ffn<i>.{w,b}, intent.output.{w,b}.
template <typename S>
void init_intent_head(ParameterStore<S>& store, const HeadsConfig& config, int input_dim, int intents, Rng& rng);

/// slot.ffn<i>.{w,b}, slot.output.{w,b} and, for the CRF decoder,
/// slot.crf.transitions of shape (K+2) x (K+2).
template <typename S>
void init_slot_head(ParameterStore<S>& store, const HeadsConfig& config, int input_dim, int tags, Rng& rng);

/// Multi-dimensional attention pooling, one row per segment:
///   out_s = sum_t softmax_t(tanh(x_t W1 + b1) W2 + b2) .* x_t
/// with a separate softmax per feature over the tokens of s.
template <typename S>
Var<S> multidim_pool(Graph<S>& graph, ParameterStore<S>& store, const std::string& prefix, Var<S> reps,
                     std::span<const Segment> segments);

/// Per-feature pooling weights, tokens x width; the rows of each segment sum to
/// one in every column.
template <typename S>
Var<S> multidim_pool_weights(Graph<S>& graph, ParameterStore<S>& store, const std::string& prefix, Var<S> reps,
                             std::span<const Segment> segments);

/// Intent logits, one row per segment.
template <typename S>
Var<S> intent_logits(Graph<S>& graph, ParameterStore<S>& store, const HeadsConfig& config, Var<S> reps,
                     std::span<const Segment> segments, const HeadRuntime<S>& runtime);

/// Slot logits (CRF emissions), one row per token.
template <typename S>
Var<S> slot_logits(Graph<S>& graph, ParameterStore<S>& store, const HeadsConfig& config, Var<S> reps,
                   const HeadRuntime<S>& runtime);

/// Mean over utterances of the label-smoothed intent cross-entropy. Gold
/// entries < 0 are skipped and not counted.
template <typename S>
Var<S> intent_loss(Var<S> logits, std::span<const int> gold, const HeadsConfig& config);

/// Mean over tokens of the slot loss: smoothed cross-entropy for the softmax
/// decoders (epsilon 0 for plain softmax), CRF negative log-likelihood summed
/// over utterances and divided by the token count otherwise.
template <typename S>
Var<S> slot_loss(Graph<S>& graph, ParameterStore<S>& store, Var<S> logits, std::span<const Segment> segments,
                 std::span<const int> gold, const HeadsConfig& config);

/// Per-token argmax, or Viterbi per segment for the CRF decoder. `forbidden`
/// ((K+2) x (K+2)) is honoured only when config.forbid_o_to_i is set.
template <typename S>
std::vector<std::vector<int>> decode_slots(ParameterStore<S>& store, const HeadsConfig& config,
                                           const Matrix<S>& logits, std::span<const Segment> segments,
                                           const BoolMatrix* forbidden = nullptr);

std::vector<int> argmax_rows(const Eigen::Ref<const Matrix<float>>& m);
std::vector<int> argmax_rows(const Eigen::Ref<const Matrix<double>>& m);

}  // namespace slu
