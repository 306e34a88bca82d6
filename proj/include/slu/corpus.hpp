#pragma once

#include "slu/random.hpp"
#include "slu/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace slu {

/// Input file problem with the 1-based line it was found on (0 if unknown).
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& source, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct Utterance {
  std::vector<std::string> tokens;
  std::vector<std::string> slot_tags;
  std::string intent;

  bool operator==(const Utterance&) const = default;
};

// O, B-<type> or I-<type> with a non-empty type.
bool is_valid_bio_tag(std::string_view tag);

/// Bidirectional string <-> index map. Input vocabularies reserve PAD = 0 and
/// UNK = 1; label vocabularies (tags, intents) have no reserved entries since
/// every entry is an output class.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  explicit Vocabulary(bool reserved = true);

  int add(const std::string& token);
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  // Index of token; UNK for unseen tokens in reserved vocabularies, -1 otherwise.
  int index(const std::string& token) const;
  const std::string& token(int index) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  bool reserved() const { return reserved_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Stable 64-bit FNV-1a digest of the ordered entries, as 16 hex digits.
  std::string fingerprint() const;

  static Vocabulary from_tokens(const std::vector<std::string>& tokens, bool reserved);

  bool operator==(const Vocabulary& other) const { return reserved_ == other.reserved_ && tokens_ == other.tokens_; }

 private:
  bool reserved_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct Vocabularies {
  Vocabulary words{true};
  Vocabulary chars{true};
  Vocabulary tags{false};
  Vocabulary intents{false};

  bool operator==(const Vocabularies&) const = default;
};

struct Dataset {
  std::vector<Utterance> utterances;
  std::optional<Vocabularies> vocab;

  std::size_t size() const { return utterances.size(); }
};

std::string lowercase(std::string_view text);

// Splits UTF-8 text into code points, each returned as its byte sequence.
std::vector<std::string> utf8_chars(std::string_view text);

/// Words are looked up lowercased; characters keep their case. "O" is always
/// present in the tag vocabulary. Indices follow first occurrence order.
Vocabularies build_vocabularies(const std::vector<Utterance>& utterances);

/// Format: blocks separated by blank lines; each block starts with
/// "# intent: <label>" followed by one "<token>\t<BIO-tag>" line per token.
Dataset parse_dataset(std::istream& in, const std::string& source_name, bool build_vocabs = false);
Dataset parse_dataset(const std::filesystem::path& path, bool build_vocabs = false);
Dataset parse_dataset_text(std::string_view text, bool build_vocabs = false);

void write_dataset(std::ostream& out, const std::vector<Utterance>& utterances);
std::string serialize_dataset(const std::vector<Utterance>& utterances);

struct Span {
  Index start = 0;
  Index end = 0;  // inclusive
  std::string type;

  auto operator<=>(const Span&) const = default;
};

/// Maximal typed spans of a BIO sequence, sorted by start. An I-X that does
/// not continue an X span opens a new one, as the CoNLL evaluation script does.
std::vector<Span> bio_spans(const std::vector<std::string>& tags);

struct EmbeddingMatrix {
  int dim = 0;
  Matrix<float> rows;  // |words| x dim, aligned to the word vocabulary
  double coverage = 0.0;
  bool trainable = true;
  int found = 0;
};

/// Reads "word v1 ... v_dim" lines. Rows of vocabulary words found in the file
/// are copied verbatim, PAD is zero, every other row is drawn N(0, 0.1^2).
/// Coverage counts non-reserved vocabulary entries found in the file.
EmbeddingMatrix load_embeddings(std::istream& in, const std::string& source_name, const Vocabulary& words, int dim,
                                Rng& rng, bool trainable);
EmbeddingMatrix load_embeddings(const std::filesystem::path& path, const Vocabulary& words, int dim, Rng& rng,
                                bool trainable);

}  // namespace slu
