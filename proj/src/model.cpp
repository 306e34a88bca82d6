#include "slu/model.hpp"

#include "slu/functional.hpp"

#include <numeric>
#include <stdexcept>

namespace slu {

template <typename S>
SluModel<S>::SluModel(ModelConfig config, Vocabularies vocab, GazetteerSet gazetteer, std::uint64_t seed,
                      HeadSet heads)
    : config_(std::move(config)),
      vocab_(std::move(vocab)),
      gazetteer_(std::move(gazetteer)),
      matcher_(GazetteerMatcher::compile(gazetteer_)),
      heads_(heads),
      seed_(seed) {
  config_.validate();
  if (!heads_.intent && !heads_.slot) throw std::invalid_argument("model needs at least one head");
  if (heads_.slot && vocab_.tags.size() < 1) throw std::invalid_argument("model: empty tag vocabulary");
  if (heads_.intent && vocab_.intents.size() < 1) throw std::invalid_argument("model: empty intent vocabulary");
  Rng rng(seed);
  init_embedder(params_, config_.embedder, vocab_.words.size(), vocab_.chars.size(), matcher_.feature_count(), rng);
  init_encoder(params_, config_.encoder, config_.embedder.output_dim(), rng);
  const int width = config_.encoder.output_dim();
  // Heads draw from their own streams so that a module split keeps the same
  // initial values as the joint model.
  Rng intent_rng = rng.fork();
  Rng slot_rng = rng.fork();
  if (heads_.intent) init_intent_head(params_, config_.heads, width, vocab_.intents.size(), intent_rng);
  if (heads_.slot) init_slot_head(params_, config_.heads, width, vocab_.tags.size(), slot_rng);

  const int k = vocab_.tags.size();
  forbidden_ = BoolMatrix::Constant(k + 2, k + 2, false);
  const int o = vocab_.tags.index("O");
  for (int j = 0; j < k; ++j) {
    const auto& tag = vocab_.tags.token(j);
    if (tag.rfind("I-", 0) == 0) {
      if (o >= 0) forbidden_(o, j) = true;
      forbidden_(crf::start_state(k), j) = true;
    }
  }
}

template <typename S>
void SluModel<S>::set_word_embeddings(const EmbeddingMatrix& embeddings) {
  if (!config_.embedder.use_word) throw std::invalid_argument("set_word_embeddings: word component disabled");
  auto& table = params_.at("embed.word");
  if (embeddings.rows.rows() != table.value.rows() || embeddings.rows.cols() != table.value.cols()) {
    throw std::invalid_argument("set_word_embeddings: expected " + shape_string(table.shape) + ", got " +
                                std::to_string(embeddings.rows.rows()) + "x" + std::to_string(embeddings.rows.cols()));
  }
  table.value = embeddings.rows.template cast<S>();
  table.requires_grad = !config_.embedder.fixed_word_embeddings;
}

template <typename S>
EncodedUtterance SluModel<S>::encode(const std::vector<std::string>& tokens) const {
  return encode_utterance(tokens, vocab_, &matcher_, config_.embedder);
}

template <typename S>
LabeledBatch SluModel<S>::make_batch(std::span<const Utterance* const> utterances) const {
  std::vector<EncodedUtterance> enc;
  enc.reserve(utterances.size());
  LabeledBatch b;
  for (const auto* u : utterances) {
    enc.push_back(encode(u->tokens));
    for (const auto& t : u->slot_tags) b.tags.push_back(vocab_.tags.index(t));
    b.intents.push_back(vocab_.intents.index(u->intent));
  }
  std::vector<const EncodedUtterance*> ptrs;
  for (const auto& e : enc) ptrs.push_back(&e);
  b.tokens = make_token_batch(ptrs);
  return b;
}

template <typename S>
typename SluModel<S>::Output SluModel<S>::forward(Graph<S>& graph, const TokenBatch& batch, bool train, Rng* rng,
                                                  HeadSet want, const EncoderRuntime<S>* probes) {
  if (train && !rng) throw std::invalid_argument("forward: training needs a dropout generator");
  const double keep = config_.dropout_keep;
  Output out;
  Var<S> x = embed(graph, params_, config_.embedder, batch);
  if (train && keep < 1.0) x = dropout(x, keep, *rng);
  EncoderRuntime<S> rt;
  if (probes) rt = *probes;
  rt.train = train;
  rt.rng = rng;
  const std::span<const Segment> segs(batch.segments);
  out.reps = slu::encode(graph, params_, config_.encoder, x, segs, rt);
  Var<S> reps = out.reps;
  if (train && keep < 1.0) reps = dropout(reps, keep, *rng);
  const HeadRuntime<S> hr{train, keep, rng};
  if (want.intent && heads_.intent) out.intent_logits = intent_logits(graph, params_, config_.heads, reps, segs, hr);
  if (want.slot && heads_.slot) out.slot_logits = slot_logits(graph, params_, config_.heads, reps, hr);
  return out;
}

template <typename S>
std::vector<Prediction> SluModel<S>::predict(std::span<const Utterance* const> utterances) {
  std::vector<Prediction> preds(utterances.size());
  if (utterances.empty()) return preds;
  const LabeledBatch batch = make_batch(utterances);
  Graph<S> graph(false);
  const Output out = forward(graph, batch.tokens, false, nullptr);
  if (out.intent_logits) {
    const auto best = argmax_rows(out.intent_logits->value());
    for (std::size_t i = 0; i < preds.size(); ++i) preds[i].intent = vocab_.intents.token(best[i]);
  }
  const std::span<const Segment> segs(batch.tokens.segments);
  if (out.slot_logits) {
    const auto tags = decode_slots(params_, config_.heads, out.slot_logits->value(), segs, &forbidden_);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      for (int t : tags[i]) preds[i].tags.push_back(vocab_.tags.token(t));
    }
  } else {
    for (std::size_t i = 0; i < preds.size(); ++i) preds[i].tags.assign(static_cast<std::size_t>(segs[i].length), "O");
  }
  return preds;
}

template <typename S>
std::vector<Prediction> SluModel<S>::predict_tokens(const std::vector<std::vector<std::string>>& utterances) {
  std::vector<Utterance> tmp;
  for (const auto& toks : utterances) tmp.push_back({toks, std::vector<std::string>(toks.size(), "O"), ""});
  std::vector<const Utterance*> ptrs;
  for (const auto& u : tmp) ptrs.push_back(&u);
  return predict(ptrs);
}

std::vector<std::vector<const Utterance*>> batch_pointers(const std::vector<Utterance>& data,
                                                         std::span<const std::size_t> order, int batch_size) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  std::vector<std::vector<const Utterance*>> batches;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    std::vector<const Utterance*> b;
    for (std::size_t j = i; j < std::min(order.size(), i + static_cast<std::size_t>(batch_size)); ++j) {
      b.push_back(&data[order[j]]);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

EvalReport score_predictions(const std::vector<Prediction>& predictions, const std::vector<Utterance>& gold) {
  if (predictions.size() != gold.size()) throw std::invalid_argument("score_predictions: size mismatch");
  std::vector<std::vector<std::string>> pt, gt;
  std::vector<std::string> pi, gi;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    pt.push_back(predictions[i].tags);
    gt.push_back(gold[i].slot_tags);
    pi.push_back(predictions[i].intent);
    gi.push_back(gold[i].intent);
  }
  EvalReport r;
  r.slots = conll_f1(pt, gt);
  r.intent_accuracy = gold.empty() ? 0.0 : intent_accuracy(pi, gi);
  long tokens = 0, hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (std::size_t t = 0; t < gold[i].slot_tags.size(); ++t, ++tokens) hits += pt[i][t] == gt[i][t];
  }
  r.token_accuracy = tokens ? static_cast<double>(hits) / static_cast<double>(tokens) : 0.0;
  r.utterances = static_cast<long>(gold.size());
  return r;
}

template <typename S>
EvalReport evaluate(SluModel<S>& model, const std::vector<Utterance>& data, int batch_size) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Prediction> preds;
  preds.reserve(data.size());
  for (const auto& b : batch_pointers(data, order, batch_size)) {
    auto p = model.predict(b);
    preds.insert(preds.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
  }
  return score_predictions(preds, data);
}

template class SluModel<float>;
template class SluModel<double>;
template EvalReport evaluate<float>(SluModel<float>&, const std::vector<Utterance>&, int);
template EvalReport evaluate<double>(SluModel<double>&, const std::vector<Utterance>&, int);

}  // namespace slu
