#pragma once

#include "slu/config.hpp"
#include "slu/ops.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace slu {

/// Recurrent dropout mask applied at one time step of one RNN direction.
/// `sequences` lists the batch positions of the rows of `mask`.
template <typename S>
struct RecurrentMaskEvent {
  int layer;
  int direction;  // 0 forward, 1 backward
  Index step;
  std::span<const Index> sequences;
  const Matrix<S>& mask;
};

/// Self-attention weights of one multi-head layer and head over the packed
/// batch; rows sum to one over `allowed`.
template <typename S>
struct AttentionEvent {
  int layer;
  int head;
  const Matrix<S>& weights;
  const BoolMatrix& allowed;
};

template <typename S>
struct EncoderRuntime {
  bool train = false;
  Rng* rng = nullptr;  // dropout source, required when train is set
  std::function<void(const RecurrentMaskEvent<S>&)> mask_probe;
  std::function<void(const AttentionEvent<S>&)> attention_probe;
};

/// Registers encoder.* parameters for config.kind on inputs of width input_dim.
template <typename S>
void init_encoder(ParameterStore<S>& store, const EncoderConfig& config, int input_dim, Rng& rng);

/// Contextual token representations, tokens x config.output_dim().
template <typename S>
Var<S> encode(Graph<S>& graph, ParameterStore<S>& store, const EncoderConfig& config, Var<S> inputs,
              std::span<const Segment> segments, const EncoderRuntime<S>& runtime);

/// One direction of the bi-block encoder (all layers), tokens x d_model.
/// Row t of the forward direction depends only on rows <= t of its
/// utterance; the backward direction only on rows >= t.
template <typename S>
Var<S> biblock_direction(Graph<S>& graph, ParameterStore<S>& store, const EncoderConfig& config, Var<S> inputs,
                         std::span<const Segment> segments, bool forward, const EncoderRuntime<S>& runtime);

/// Sizes of the contiguous blocks a sequence of `length` tokens is split into:
/// as equal as possible, remainder to the leading blocks, empty blocks dropped.
std::vector<Index> block_sizes(Index length, int blocks);

/// Sinusoidal position encodings, position counted from each segment start.
template <typename S>
Matrix<S> positional_encoding(std::span<const Segment> segments, Index dim);

/// Runs an encoder on a padded batch (batch*max_len rows, mask batch x max_len)
/// by packing the unmasked rows. Masked output rows are zero.
template <typename S>
Matrix<S> encode_padded(ParameterStore<S>& store, const EncoderConfig& config, const Matrix<S>& padded,
                        const BoolMatrix& mask, const EncoderRuntime<S>& runtime);

}  // namespace slu
