#pragma once

#include "slu/config.hpp"
#include "slu/corpus.hpp"
#include "slu/embedder.hpp"
#include "slu/encoder.hpp"
#include "slu/eval.hpp"
#include "slu/gazetteer.hpp"
#include "slu/heads.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace slu {

/// Token batch plus gold label indices (-1 where a label is not in the model's
/// vocabulary).
struct LabeledBatch {
  TokenBatch tokens;
  std::vector<int> tags;
  std::vector<int> intents;
};

/// Which output heads a model carries. A module split off a joint model keeps
/// the shared trunk (embed.*, encoder.*) plus one head.
struct HeadSet {
  bool intent = true;
  bool slot = true;
  bool operator==(const HeadSet&) const = default;
};

struct Prediction {
  std::vector<std::string> tags;
  std::string intent;
};

/// The four-phase network: embedder, encoder, intent head, slot head.
/// Parameters are namespaced embed.*, encoder.*, intent.*, slot.*.
template <typename S>
class SluModel {
 public:
  struct Output {
    Var<S> reps;
    std::optional<Var<S>> intent_logits;
    std::optional<Var<S>> slot_logits;
  };

  /// Initialises every parameter from `seed`.
  SluModel(ModelConfig config, Vocabularies vocab, GazetteerSet gazetteer, std::uint64_t seed, HeadSet heads = {});

  const ModelConfig& config() const { return config_; }
  const Vocabularies& vocab() const { return vocab_; }
  const GazetteerSet& gazetteer() const { return gazetteer_; }
  const GazetteerMatcher& matcher() const { return matcher_; }
  HeadSet heads() const { return heads_; }
  std::uint64_t seed() const { return seed_; }
  ParameterStore<S>& params() { return params_; }
  const ParameterStore<S>& params() const { return params_; }

  std::string dataset_id;

  /// Copies pre-trained rows into embed.word; fixed_word_embeddings freezes it.
  void set_word_embeddings(const EmbeddingMatrix& embeddings);

  EncodedUtterance encode(const std::vector<std::string>& tokens) const;
  LabeledBatch make_batch(std::span<const Utterance* const> utterances) const;

  /// Dropout is active only when `train` is set (rng required then).
  Output forward(Graph<S>& graph, const TokenBatch& batch, bool train, Rng* rng, HeadSet want = {},
                 const EncoderRuntime<S>* probes = nullptr);

  std::vector<Prediction> predict(std::span<const Utterance* const> utterances);
  std::vector<Prediction> predict_tokens(const std::vector<std::vector<std::string>>& utterances);

  // (K+2) x (K+2) transitions ruled out by forbid_o_to_i: O -> I-X and start -> I-X.
  const BoolMatrix& forbidden_transitions() const { return forbidden_; }

 private:
  ModelConfig config_;
  Vocabularies vocab_;
  GazetteerSet gazetteer_;
  GazetteerMatcher matcher_;
  HeadSet heads_;
  std::uint64_t seed_;
  ParameterStore<S> params_;
  BoolMatrix forbidden_;
};

/// Deterministic evaluation with dropout off. Slot tags of a module without a
/// slot head (or intents without an intent head) are scored as all "O" / "".
template <typename S>
EvalReport evaluate(SluModel<S>& model, const std::vector<Utterance>& data, int batch_size = 32);

/// Scores already-computed predictions against gold utterances.
EvalReport score_predictions(const std::vector<Prediction>& predictions, const std::vector<Utterance>& gold);

/// Pointers to consecutive slices of `data` of at most batch_size utterances.
std::vector<std::vector<const Utterance*>> batch_pointers(const std::vector<Utterance>& data,
                                                         std::span<const std::size_t> order, int batch_size);

}  // namespace slu
