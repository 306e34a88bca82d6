#pragma once
// Helpers shared by the unit and acceptance tests.

#include "slu/config.hpp"
#include "slu/corpus.hpp"
#include "slu/functional.hpp"
#include "slu/gazetteer.hpp"
#include "slu/model.hpp"
#include "slu/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace slu::testing {

// Tiny dimensions (all <= 16) so double-precision gradient checks stay fast.
inline ModelConfig small_config(EncoderKind kind, SlotDecoder decoder = SlotDecoder::kSoftmaxSmoothing) {
  ModelConfig c;
  c.embedder.use_word = c.embedder.use_char = c.embedder.use_gazetteer = true;
  c.embedder.word_dim = 6;
  c.embedder.char_dim = 3;
  c.embedder.char_windows = {2, 3};
  c.embedder.char_filters = 4;
  c.embedder.gaz_dim = 3;
  c.encoder.kind = kind;
  c.encoder.hidden = 5;
  c.encoder.d_model = 6;
  c.encoder.ffn_dim = 5;
  c.heads.ffn_dim = 5;
  c.heads.attention_hidden = 4;
  c.heads.slot_decoder = decoder;
  return c;
}

inline const std::vector<EncoderKind>& all_encoder_kinds() {
  static const std::vector<EncoderKind> kinds = {EncoderKind::kGru, EncoderKind::kHighwayLstm,
                                                 EncoderKind::kMultiHead, EncoderKind::kBiBlock};
  return kinds;
}

/// Small airline-flavoured corpus: "flights from <city> to <city> [on <day>]"
/// style utterances with consistent BIO tags and a handful of intents.
inline std::vector<Utterance> toy_corpus(Rng& rng, int count, int max_len = 12) {
  const std::vector<std::vector<std::string>> cities = {{"boston"}, {"denver"}, {"new", "york"},
                                                        {"san", "francisco"}, {"dallas"}, {"atlanta"}};
  const std::vector<std::string> days = {"monday", "tuesday", "friday"};
  const std::vector<std::string> airlines = {"delta", "united", "american"};
  std::vector<Utterance> out;
  while (static_cast<int>(out.size()) < count) {
    Utterance u;
    auto add = [&](const std::string& tok, const std::string& tag) {
      u.tokens.push_back(tok);
      u.slot_tags.push_back(tag);
    };
    auto add_span = [&](const std::vector<std::string>& toks, const std::string& type) {
      for (std::size_t i = 0; i < toks.size(); ++i) add(toks[i], (i == 0 ? "B-" : "I-") + type);
    };
    const auto kind = rng.below(3);
    if (kind == 0) {
      u.intent = "flight";
      add("show", "O");
      add("flights", "O");
      add("from", "O");
      add_span(cities[rng.below(cities.size())], "fromloc.city_name");
      add("to", "O");
      add_span(cities[rng.below(cities.size())], "toloc.city_name");
      if (rng.bernoulli(0.5)) {
        add("on", "O");
        add_span({days[rng.below(days.size())]}, "depart_date.day_name");
      }
    } else if (kind == 1) {
      u.intent = "airfare";
      add("how", "O");
      add("much", "O");
      add("is", "O");
      add("a", "O");
      add_span({airlines[rng.below(airlines.size())]}, "airline_name");
      add("ticket", "O");
      add("to", "O");
      add_span(cities[rng.below(cities.size())], "toloc.city_name");
    } else {
      u.intent = "city";
      add("where", "O");
      add("is", "O");
      add_span({rng.bernoulli(0.5) ? "MCO" : "BOS"}, "airport_code");
    }
    if (static_cast<int>(u.tokens.size()) <= max_len) out.push_back(std::move(u));
  }
  return out;
}

inline GazetteerSet toy_gazetteer() {
  return GazetteerSet{{{"city", {{"boston"}, {"new", "york"}, {"san", "francisco"}}}, {"airline", {{"delta"}}}}};
}

inline std::vector<const Utterance*> pointers(const std::vector<Utterance>& data) {
  std::vector<const Utterance*> out;
  for (const auto& u : data) out.push_back(&u);
  return out;
}

template <typename S>
bool bit_equal(const Matrix<S>& a, const Matrix<S>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::equal(a.data(), a.data() + a.size(), b.data(), [](S x, S y) {
           return std::memcmp(&x, &y, sizeof(S)) == 0;
         });
}

inline std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

// Gazetteer oracle. Brute force: at each unconsumed position try every phrase
// of every type; keep the longest, the first type on ties.
inline std::vector<int> naive_featurize(const GazetteerSet& set, const std::vector<std::string>& tokens) {
  std::vector<int> out(tokens.size(), 0);
  std::size_t pos = 0;
  while (pos < tokens.size()) {
    std::size_t best_len = 0;
    int best_type = 0;
    for (int i = 0; i < set.size(); ++i) {
      for (const auto& phrase : set.types[static_cast<std::size_t>(i)].phrases) {
        if (pos + phrase.size() > tokens.size()) continue;
        bool match = true;
        for (std::size_t k = 0; k < phrase.size() && match; ++k) {
          match = lowercase(tokens[pos + k]) == lowercase(phrase[k]);
        }
        if (match && phrase.size() > best_len) {
          best_len = phrase.size();
          best_type = i + 1;
        }
      }
    }
    if (best_len == 0) {
      ++pos;
      continue;
    }
    out[pos] = 2 * best_type - 1;
    for (std::size_t k = 1; k < best_len; ++k) out[pos + k] = 2 * best_type;
    pos += best_len;
  }
  return out;
}

// All K^T tag sequences, in lexicographic order.
inline std::vector<std::vector<int>> all_sequences(int k, int t) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(static_cast<std::size_t>(t), 0);
  while (true) {
    out.push_back(cur);
    int pos = t - 1;
    while (pos >= 0 && ++cur[static_cast<std::size_t>(pos)] == k) cur[static_cast<std::size_t>(pos--)] = 0;
    if (pos < 0) break;
  }
  return out;
}

// CRF oracle: log-sum-exp over every tag sequence.
inline double brute_log_z(const Matrix<double>& e, const Matrix<double>& tr) {
  const int k = static_cast<int>(e.cols());
  double m = -INFINITY;
  std::vector<double> scores;
  for (const auto& seq : all_sequences(k, static_cast<int>(e.rows()))) {
    scores.push_back(crf::sequence_score<double>(e, tr, seq));
    m = std::max(m, scores.back());
  }
  double s = 0;
  for (double x : scores) s += std::exp(x - m);
  return m + std::log(s);
}

inline std::vector<int> brute_best_path(const Matrix<double>& e, const Matrix<double>& tr) {
  double best = -INFINITY;
  std::vector<int> best_seq;
  for (const auto& seq : all_sequences(static_cast<int>(e.cols()), static_cast<int>(e.rows()))) {
    const double s = crf::sequence_score<double>(e, tr, seq);
    if (s > best) {
      best = s;
      best_seq = seq;
    }
  }
  return best_seq;
}

inline Matrix<double> random_matrix(Index r, Index c, Rng& rng, double scale = 1.0) {
  Matrix<double> m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

/// One case of the frozen span-scoring corpus: tag sequences and the counts
/// and percentages printed by the reference conlleval script.
struct ConllCase {
  int index = 0;
  long correct = 0, guessed = 0, gold = 0;
  double precision = 0, recall = 0, f1 = 0;  // percent, two decimals
  std::vector<std::vector<std::string>> gold_tags, predicted_tags;
};

inline std::vector<ConllCase> read_conll_regression(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<ConllCase> cases;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("case ", 0) != 0) continue;
    ConllCase c;
    if (std::sscanf(line.c_str(), "case %d correct=%ld guessed=%ld gold=%ld precision=%lf recall=%lf f1=%lf", &c.index,
                    &c.correct, &c.guessed, &c.gold, &c.precision, &c.recall, &c.f1) != 7) {
      throw std::runtime_error(path + ": malformed case header: " + line);
    }
    c.gold_tags.emplace_back();
    c.predicted_tags.emplace_back();
    while (std::getline(in, line) && line != "end") {
      if (line.empty()) {
        c.gold_tags.emplace_back();
        c.predicted_tags.emplace_back();
        continue;
      }
      const auto tab = line.find('\t');
      c.gold_tags.back().push_back(line.substr(0, tab));
      c.predicted_tags.back().push_back(line.substr(tab + 1));
    }
    while (!c.gold_tags.empty() && c.gold_tags.back().empty()) {
      c.gold_tags.pop_back();
      c.predicted_tags.pop_back();
    }
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace slu::testing
