#include "slu/diagnostics.hpp"

#include "slu/trainer.hpp"

#include <algorithm>

namespace slu {

ModelConfig gradcheck_config(ModelConfig c) {
  auto clamp = [](int& v, int hi) { v = std::min(v, hi); };
  clamp(c.embedder.word_dim, 6);
  clamp(c.embedder.char_dim, 3);
  clamp(c.embedder.char_filters, 4);
  clamp(c.embedder.gaz_dim, 3);
  c.embedder.char_windows = {std::min(3, *std::max_element(c.embedder.char_windows.begin(),
                                                           c.embedder.char_windows.end()))};
  clamp(c.encoder.hidden, 5);
  clamp(c.encoder.heads, 2);
  c.encoder.d_model = std::min(c.encoder.d_model, 4 * c.encoder.heads);
  c.encoder.d_model -= c.encoder.d_model % c.encoder.heads;
  clamp(c.encoder.ffn_dim, 5);
  clamp(c.encoder.blocks, 3);
  clamp(c.heads.ffn_dim, 5);
  c.heads.attention_hidden = c.heads.attention_hidden == 0 ? 4 : std::min(c.heads.attention_hidden, 4);
  c.validate();
  return c;
}

std::vector<Utterance> random_utterances(Rng& rng, int count, int max_len) {
  const char* intents[] = {"x", "y", "z"};
  std::vector<Utterance> out;
  for (int i = 0; i < count; ++i) {
    Utterance u;
    const int len = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(max_len)));
    std::string open;
    for (int t = 0; t < len; ++t) {
      u.tokens.push_back("w" + std::to_string(rng.below(10)));
      const auto r = rng.below(4);
      if (r == 0) {
        open.clear();
        u.slot_tags.emplace_back("O");
      } else if (r == 3 && !open.empty()) {
        u.slot_tags.push_back("I-" + open);
      } else {
        open = r == 1 ? "a" : "b";
        u.slot_tags.push_back("B-" + open);
      }
    }
    u.intent = intents[rng.below(3)];
    out.push_back(std::move(u));
  }
  return out;
}

GradCheckResult check_model_gradients(const ModelConfig& config, std::uint64_t seed,
                                      const GradCheckOptions& options) {
  Rng rng(seed);
  const auto data = random_utterances(rng, 3, 8);
  const GazetteerSet gazetteer{{{"g1", {{"w1"}, {"w2", "w3"}}}, {"g2", {{"w4", "w5", "w6"}}}}};
  SluModel<double> model(config, build_vocabularies(data), gazetteer, seed);
  // Zero biases put ReLU inputs exactly on the kink when a whole row upstream
  // is inactive; a small jitter moves the instance to a differentiable point.
  auto& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& v = params.tensor(i).value;
    for (Index k = 0; k < v.size(); ++k) v.data()[k] += 0.05 * rng.normal();
  }
  std::vector<const Utterance*> ptrs;
  for (const auto& u : data) ptrs.push_back(&u);
  const LabeledBatch batch = model.make_batch(ptrs);
  const TrainConfig train;
  const std::uint64_t dropout_seed = rng.next();
  auto loss = [&](Graph<double>& g) {
    Rng drop(dropout_seed);
    return batch_loss(model, g, batch, train, true, &drop);
  };
  return grad_check(loss, model.params(), options);
}

}  // namespace slu
