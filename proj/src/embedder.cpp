#include "slu/embedder.hpp"

#include "slu/optim.hpp"

#include <algorithm>
#include <stdexcept>

namespace slu {

EncodedUtterance encode_utterance(const std::vector<std::string>& tokens, const Vocabularies& vocab,
                                  const GazetteerMatcher* matcher, const EmbedderConfig& config) {
  EncodedUtterance enc;
  enc.words.reserve(tokens.size());
  enc.chars.reserve(tokens.size());
  for (const auto& tok : tokens) {
    enc.words.push_back(vocab.words.index(lowercase(tok)));
    auto chars = utf8_chars(tok);
    if (static_cast<int>(chars.size()) > config.max_token_chars) chars.resize(static_cast<std::size_t>(config.max_token_chars));
    std::vector<Index> ids;
    ids.reserve(chars.size());
    for (const auto& c : chars) ids.push_back(vocab.chars.index(c));
    enc.chars.push_back(std::move(ids));
  }
  if (config.use_gazetteer) {
    if (matcher) {
      for (int f : matcher->featurize(tokens)) enc.gazetteer.push_back(f);
    } else {
      enc.gazetteer.assign(tokens.size(), 0);
    }
  }
  return enc;
}

TokenBatch make_token_batch(std::span<const EncodedUtterance* const> utterances) {
  TokenBatch b;
  for (const auto* u : utterances) {
    const auto n = static_cast<Index>(u->words.size());
    if (n == 0) throw std::invalid_argument("make_token_batch: empty utterance");
    b.segments.push_back({b.tokens(), n});
    b.words.insert(b.words.end(), u->words.begin(), u->words.end());
    for (const auto& c : u->chars) {
      b.char_segments.push_back({static_cast<Index>(b.chars.size()), static_cast<Index>(c.size())});
      b.chars.insert(b.chars.end(), c.begin(), c.end());
    }
    b.gazetteer.insert(b.gazetteer.end(), u->gazetteer.begin(), u->gazetteer.end());
  }
  return b;
}

template <typename S>
void init_embedder(ParameterStore<S>& store, const EmbedderConfig& config, int word_vocab, int char_vocab,
                   int gazetteer_features, Rng& rng) {
  config.validate();
  // One stream per component, drawn whether or not it is enabled, so toggling
  // a component leaves the others' initial values unchanged.
  Rng word_rng = rng.fork();
  Rng char_rng = rng.fork();
  Rng gaz_rng = rng.fork();
  if (config.use_word) {
    auto& t = store.add("embed.word", {word_vocab, config.word_dim}, !config.fixed_word_embeddings);
    init_normal(t, 0.1, word_rng);
    t.value.row(Vocabulary::kPad).setZero();
  }
  if (config.use_char) {
    auto& t = store.add("embed.char", {char_vocab, config.char_dim});
    init_normal(t, 0.1, char_rng);
    t.value.row(Vocabulary::kPad).setZero();
    for (int w : config.char_windows) {
      auto& k = store.add("embed.char_cnn.w" + std::to_string(w), {w * config.char_dim, config.char_filters});
      init_glorot_uniform(k, char_rng);
      store.add("embed.char_cnn.b" + std::to_string(w), {config.char_filters}).value.setZero();
    }
  }
  if (config.use_gazetteer) {
    init_normal(store.add("embed.gazetteer", {gazetteer_features, config.gaz_dim}), 0.1, gaz_rng);
  }
}

template <typename S>
Var<S> char_cnn(Graph<S>& graph, ParameterStore<S>& store, const EmbedderConfig& config, const TokenBatch& batch) {
  const Var<S> chars = gather_rows(graph.parameter(store.at("embed.char")), std::span<const Index>(batch.chars));
  const int widest = *std::max_element(config.char_windows.begin(), config.char_windows.end());
  std::vector<Index> positions;
  std::vector<Segment> pooled;
  positions.reserve(batch.char_segments.size());
  Index offset = 0;
  for (const auto& seg : batch.char_segments) {
    const Index n = std::max<Index>(seg.length, widest);
    positions.push_back(n);
    pooled.push_back({offset, n});
    offset += n;
  }
  std::vector<Var<S>> parts;
  for (int w : config.char_windows) {
    const auto id = std::to_string(w);
    Var<S> windows = unfold_windows(chars, std::span<const Segment>(batch.char_segments),
                                    std::span<const Index>(positions), w);
    Var<S> conv = relu(affine(windows, graph.parameter(store.at("embed.char_cnn.w" + id)),
                              graph.parameter(store.at("embed.char_cnn.b" + id))));
    parts.push_back(segment_max_rows(conv, std::span<const Segment>(pooled)));
  }
  return parts.size() == 1 ? parts.front() : concat_cols(parts);
}

template <typename S>
Var<S> embed(Graph<S>& graph, ParameterStore<S>& store, const EmbedderConfig& config, const TokenBatch& batch) {
  std::vector<Var<S>> parts;
  if (config.use_word) {
    parts.push_back(gather_rows(graph.parameter(store.at("embed.word")), std::span<const Index>(batch.words)));
  }
  if (config.use_char) parts.push_back(char_cnn(graph, store, config, batch));
  if (config.use_gazetteer) {
    auto& table = store.at("embed.gazetteer");
    if (static_cast<Index>(batch.gazetteer.size()) != batch.tokens()) {
      throw std::invalid_argument("embed: gazetteer features missing for " +
                                  std::to_string(batch.tokens() - static_cast<Index>(batch.gazetteer.size())) +
                                  " token(s)");
    }
    for (Index f : batch.gazetteer) {
      if (f < 0 || f >= table.value.rows()) {
        throw std::invalid_argument("embed: gazetteer feature " + std::to_string(f) + " outside [0, " +
                                    std::to_string(table.value.rows() - 1) + "]");
      }
    }
    parts.push_back(gather_rows(graph.parameter(table), std::span<const Index>(batch.gazetteer)));
  }
  return parts.size() == 1 ? parts.front() : concat_cols(parts);
}

#define SLU_INSTANTIATE(S)                                                                                    \
  template void init_embedder<S>(ParameterStore<S>&, const EmbedderConfig&, int, int, int, Rng&);            \
  template Var<S> embed<S>(Graph<S>&, ParameterStore<S>&, const EmbedderConfig&, const TokenBatch&);          \
  template Var<S> char_cnn<S>(Graph<S>&, ParameterStore<S>&, const EmbedderConfig&, const TokenBatch&);

SLU_INSTANTIATE(float)
SLU_INSTANTIATE(double)

#undef SLU_INSTANTIATE

}  // namespace slu
