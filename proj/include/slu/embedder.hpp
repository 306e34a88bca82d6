#pragma once

#include "slu/config.hpp"
#include "slu/corpus.hpp"
#include "slu/gazetteer.hpp"
#include "slu/ops.hpp"

#include <span>
#include <vector>

namespace slu {

/// Vocabulary indices of one utterance.
struct EncodedUtterance {
  std::vector<Index> words;
  std::vector<std::vector<Index>> chars;  // per token, truncated to max_token_chars
  std::vector<Index> gazetteer;           // per token feature, empty when unused
};

EncodedUtterance encode_utterance(const std::vector<std::string>& tokens, const Vocabularies& vocab,
                                  const GazetteerMatcher* matcher, const EmbedderConfig& config);

/// Packed input of several utterances: token rows are concatenated and
/// `segments` marks each utterance.
struct TokenBatch {
  std::vector<Segment> segments;
  std::vector<Index> words;
  std::vector<Index> chars;
  std::vector<Segment> char_segments;  // one per token, into `chars`
  std::vector<Index> gazetteer;

  Index tokens() const { return static_cast<Index>(words.size()); }
};

TokenBatch make_token_batch(std::span<const EncodedUtterance* const> utterances);

/// Creates embed.word, embed.char, embed.char_cnn.w<k>/b<k> and
/// embed.gazetteer for the enabled components.
template <typename S>
void init_embedder(ParameterStore<S>& store, const EmbedderConfig& config, int word_vocab, int char_vocab,
                   int gazetteer_features, Rng& rng);

/// tokens x output_dim(), concatenated word | char-CNN | gazetteer.
template <typename S>
Var<S> embed(Graph<S>& graph, ParameterStore<S>& store, const EmbedderConfig& config, const TokenBatch& batch);

/// Character CNN alone: one row of filters * |windows| per token. Each token
/// is convolved over max(length, largest window) positions with zeros outside
/// the token, passed through ReLU and max-pooled.
template <typename S>
Var<S> char_cnn(Graph<S>& graph, ParameterStore<S>& store, const EmbedderConfig& config, const TokenBatch& batch);

}  // namespace slu
