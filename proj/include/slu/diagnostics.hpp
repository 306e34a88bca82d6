#pragma once

#include "slu/config.hpp"
#include "slu/corpus.hpp"
#include "slu/grad_check.hpp"
#include "slu/random.hpp"

#include <cstdint>
#include <vector>

namespace slu {

/// Copy of `config` with every width clamped to at most 8 (attention widths
/// to a multiple of the head count) and a single char window, so that a
/// double-precision finite-difference check of the whole model is cheap.
/// Component choices, encoder kind and slot decoder are kept.
ModelConfig gradcheck_config(ModelConfig config);

/// Random labelled utterances over a ten-word alphabet with two slot types
/// and three intents; lengths 1..max_len.
std::vector<Utterance> random_utterances(Rng& rng, int count, int max_len);

/// Gradient check of the joint training loss (dropout on, fixed masks)
/// through embedder, encoder and both heads on a random batch of three
/// utterances of at most 8 tokens.
GradCheckResult check_model_gradients(const ModelConfig& config, std::uint64_t seed,
                                      const GradCheckOptions& options = {});

}  // namespace slu
