#include "slu/heads.hpp"

#include "slu/functional.hpp"
#include "slu/optim.hpp"

#include <stdexcept>

namespace slu {

namespace {

template <typename S>
void add_linear(ParameterStore<S>& store, const std::string& prefix, Index in, Index out, Rng& rng) {
  init_glorot_uniform(store.add(prefix + ".w", {in, out}), rng);
  store.add(prefix + ".b", {out}).value.setZero();
}

template <typename S>
Var<S> apply_linear(Graph<S>& g, ParameterStore<S>& store, const std::string& prefix, Var<S> x) {
  return affine(x, g.parameter(store.at(prefix + ".w")), g.parameter(store.at(prefix + ".b")));
}

template <typename S>
Var<S> feed_forward(Graph<S>& g, ParameterStore<S>& store, const std::string& head, int layers, Var<S> x,
                    const HeadRuntime<S>& rt) {
  for (int i = 0; i < layers; ++i) {
    x = relu(apply_linear(g, store, head + ".ffn" + std::to_string(i), x));
    if (rt.train && rt.dropout_keep < 1.0) x = dropout(x, rt.dropout_keep, *rt.rng);
  }
  return x;
}

template <typename S>
std::vector<int> argmax_impl(const Eigen::Ref<const Matrix<S>>& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Index r = 0; r < m.rows(); ++r) {
    Index best = 0;
    m.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace

std::vector<int> argmax_rows(const Eigen::Ref<const Matrix<float>>& m) { return argmax_impl<float>(m); }
std::vector<int> argmax_rows(const Eigen::Ref<const Matrix<double>>& m) { return argmax_impl<double>(m); }

template <typename S>
void init_intent_head(ParameterStore<S>& store, const HeadsConfig& config, int input_dim, int intents, Rng& rng) {
  config.validate();
  if (intents < 1) throw std::invalid_argument("intent head needs at least one intent");
  const Index hidden = config.attention_hidden > 0 ? config.attention_hidden : input_dim;
  init_glorot_uniform(store.add("intent.attention.w1", {input_dim, hidden}), rng);
  store.add("intent.attention.b1", {hidden}).value.setZero();
  init_glorot_uniform(store.add("intent.attention.w2", {hidden, input_dim}), rng);
  store.add("intent.attention.b2", {input_dim}).value.setZero();
  Index in = input_dim;
  for (int i = 0; i < config.ffn_layers; ++i) {
    add_linear(store, "intent.ffn" + std::to_string(i), in, config.ffn_dim, rng);
    in = config.ffn_dim;
  }
  add_linear(store, "intent.output", in, intents, rng);
}

template <typename S>
void init_slot_head(ParameterStore<S>& store, const HeadsConfig& config, int input_dim, int tags, Rng& rng) {
  config.validate();
  if (tags < 1) throw std::invalid_argument("slot head needs at least one tag");
  Index in = input_dim;
  for (int i = 0; i < config.ffn_layers; ++i) {
    add_linear(store, "slot.ffn" + std::to_string(i), in, config.ffn_dim, rng);
    in = config.ffn_dim;
  }
  add_linear(store, "slot.output", in, tags, rng);
  if (config.slot_decoder == SlotDecoder::kCrf) store.add("slot.crf.transitions", {tags + 2, tags + 2}).value.setZero();
}

template <typename S>
Var<S> multidim_pool_weights(Graph<S>& graph, ParameterStore<S>& store, const std::string& prefix, Var<S> reps,
                             std::span<const Segment> segments) {
  for (const auto& s : segments) {
    if (s.length < 1) throw std::invalid_argument("multidim_pool: segment without unmasked positions");
  }
  const Var<S> hidden = tanh(affine(reps, graph.parameter(store.at(prefix + ".w1")),
                                    graph.parameter(store.at(prefix + ".b1"))));
  const Var<S> scores = affine(hidden, graph.parameter(store.at(prefix + ".w2")),
                               graph.parameter(store.at(prefix + ".b2")));
  return segment_softmax_cols(scores, segments);
}

template <typename S>
Var<S> multidim_pool(Graph<S>& graph, ParameterStore<S>& store, const std::string& prefix, Var<S> reps,
                     std::span<const Segment> segments) {
  return segment_sum_rows(multidim_pool_weights(graph, store, prefix, reps, segments) * reps, segments);
}

template <typename S>
Var<S> intent_logits(Graph<S>& graph, ParameterStore<S>& store, const HeadsConfig& config, Var<S> reps,
                     std::span<const Segment> segments, const HeadRuntime<S>& runtime) {
  const Var<S> pooled = multidim_pool(graph, store, "intent.attention", reps, segments);
  return apply_linear(graph, store, "intent.output", feed_forward(graph, store, "intent", config.ffn_layers, pooled, runtime));
}

template <typename S>
Var<S> slot_logits(Graph<S>& graph, ParameterStore<S>& store, const HeadsConfig& config, Var<S> reps,
                   const HeadRuntime<S>& runtime) {
  return apply_linear(graph, store, "slot.output", feed_forward(graph, store, "slot", config.ffn_layers, reps, runtime));
}

template <typename S>
Var<S> intent_loss(Var<S> logits, std::span<const int> gold, const HeadsConfig& config) {
  Index counted = 0;
  for (int g : gold) counted += g >= 0;
  const Var<S> total = smoothed_cross_entropy(logits, gold, static_cast<S>(config.label_smoothing));
  return counted > 0 ? scale(total, S(1) / static_cast<S>(counted)) : total;
}

template <typename S>
Var<S> slot_loss(Graph<S>& graph, ParameterStore<S>& store, Var<S> logits, std::span<const Segment> segments,
                 std::span<const int> gold, const HeadsConfig& config) {
  Index tokens = 0;
  for (const auto& s : segments) tokens += s.length;
  const S inv = tokens > 0 ? S(1) / static_cast<S>(tokens) : S(1);
  switch (config.slot_decoder) {
    case SlotDecoder::kSoftmax:
      return scale(smoothed_cross_entropy(logits, gold, S(0)), inv);
    case SlotDecoder::kSoftmaxSmoothing:
      return scale(smoothed_cross_entropy(logits, gold, static_cast<S>(config.label_smoothing)), inv);
    case SlotDecoder::kCrf:
      return scale(crf_nll(logits, graph.parameter(store.at("slot.crf.transitions")), segments, gold), inv);
  }
  throw std::logic_error("slot_loss: unknown decoder");
}

template <typename S>
std::vector<std::vector<int>> decode_slots(ParameterStore<S>& store, const HeadsConfig& config,
                                           const Matrix<S>& logits, std::span<const Segment> segments,
                                           const BoolMatrix* forbidden) {
  std::vector<std::vector<int>> out;
  out.reserve(segments.size());
  if (config.slot_decoder == SlotDecoder::kCrf) {
    const Matrix<S>& trans = store.at("slot.crf.transitions").value;
    for (const auto& s : segments) {
      out.push_back(crf::viterbi<S>(logits.middleRows(s.offset, s.length), trans,
                                    config.forbid_o_to_i ? forbidden : nullptr)
                        .tags);
    }
  } else {
    const auto tags = argmax_rows(logits);
    for (const auto& s : segments) {
      out.emplace_back(tags.begin() + s.offset, tags.begin() + s.offset + s.length);
    }
  }
  return out;
}

#define SLU_INSTANTIATE(S)                                                                                     \
  template void init_intent_head<S>(ParameterStore<S>&, const HeadsConfig&, int, int, Rng&);                  \
  template void init_slot_head<S>(ParameterStore<S>&, const HeadsConfig&, int, int, Rng&);                    \
  template Var<S> multidim_pool<S>(Graph<S>&, ParameterStore<S>&, const std::string&, Var<S>,                 \
                                   std::span<const Segment>);                                                 \
  template Var<S> multidim_pool_weights<S>(Graph<S>&, ParameterStore<S>&, const std::string&, Var<S>,         \
                                           std::span<const Segment>);                                         \
  template Var<S> intent_logits<S>(Graph<S>&, ParameterStore<S>&, const HeadsConfig&, Var<S>,                 \
                                   std::span<const Segment>, const HeadRuntime<S>&);                          \
  template Var<S> slot_logits<S>(Graph<S>&, ParameterStore<S>&, const HeadsConfig&, Var<S>,                   \
                                 const HeadRuntime<S>&);                                                      \
  template Var<S> intent_loss<S>(Var<S>, std::span<const int>, const HeadsConfig&);                          \
  template Var<S> slot_loss<S>(Graph<S>&, ParameterStore<S>&, Var<S>, std::span<const Segment>,              \
                               std::span<const int>, const HeadsConfig&);                                     \
  template std::vector<std::vector<int>> decode_slots<S>(ParameterStore<S>&, const HeadsConfig&,              \
                                                         const Matrix<S>&, std::span<const Segment>,          \
                                                         const BoolMatrix*);

SLU_INSTANTIATE(float)
SLU_INSTANTIATE(double)

#undef SLU_INSTANTIATE

}  // namespace slu
