#pragma once

#include "slu/corpus.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace slu {

/// Two toy "languages" generated from one airline-travel grammar. The target
/// language is the source language with every surface token renamed by a
/// fixed bijection; the embedding table places each target word next to its
/// source counterpart, like aligned multilingual vectors.
struct SyntheticOptions {
  int source_train = 4000;
  int source_dev = 400;
  int target_train = 500;
  int target_dev = 200;
  int target_test = 1000;
  int dim = 32;
  double alignment_noise = 0.1;  // stddev of target-vs-source vector offset
  std::uint64_t seed = 1;
};

struct SyntheticPair {
  std::vector<Utterance> source_train, source_dev;
  std::vector<Utterance> target_train, target_dev, target_test;
  // One row per word of both languages.
  std::vector<std::string> words;
  std::vector<std::vector<float>> vectors;
};

SyntheticPair make_synthetic_pair(const SyntheticOptions& options);

/// Plain-text embedding format: "<word> <v1> ... <vd>" per line.
void write_embeddings(std::ostream& out, const SyntheticPair& pair);

/// The renamed form of a source-language token.
std::string target_word(const std::string& source_word);

}  // namespace slu
