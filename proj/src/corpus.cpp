#include "slu/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>

namespace slu {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

constexpr std::string_view kIntentPrefix = "# intent:";

}  // namespace

FormatError::FormatError(const std::string& source, std::size_t line, const std::string& what)
    : std::runtime_error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what), line_(line) {}

bool is_valid_bio_tag(std::string_view tag) {
  if (tag == "O") return true;
  return tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-';
}

Vocabulary::Vocabulary(bool reserved) : reserved_(reserved) {
  if (reserved_) {
    add(kPadToken);
    add(kUnkToken);
  }
}

int Vocabulary::add(const std::string& token) {
  auto [it, inserted] = index_.try_emplace(token, static_cast<int>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

int Vocabulary::index(const std::string& token) const {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  return reserved_ ? kUnk : -1;
}

const std::string& Vocabulary::token(int index) const {
  if (index < 0 || index >= size()) throw std::out_of_range("vocabulary index " + std::to_string(index));
  return tokens_[static_cast<std::size_t>(index)];
}

std::string Vocabulary::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  mix(reserved_ ? 'R' : 'L');
  for (const auto& t : tokens_) {
    for (unsigned char c : t) mix(c);
    mix('\n');
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens, bool reserved) {
  Vocabulary v(false);
  v.reserved_ = reserved;
  for (const auto& t : tokens) v.add(t);
  if (reserved && (v.size() < 2 || v.token(kPad) != kPadToken || v.token(kUnk) != kUnkToken)) {
    throw std::invalid_argument("reserved vocabulary must start with <pad>, <unk>");
  }
  if (v.size() != static_cast<int>(tokens.size())) throw std::invalid_argument("vocabulary has duplicate entries");
  return v;
}

std::string lowercase(std::string_view text) {
  std::string out(text);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) {
      len = 4;
    } else if (lead >= 0xE0) {
      len = 3;
    } else if (lead >= 0xC0) {
      len = 2;
    }
    len = std::min(len, text.size() - i);
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

Vocabularies build_vocabularies(const std::vector<Utterance>& utterances) {
  Vocabularies v;
  v.tags.add("O");
  for (const auto& u : utterances) {
    for (const auto& tok : u.tokens) {
      v.words.add(lowercase(tok));
      for (const auto& ch : utf8_chars(tok)) v.chars.add(ch);
    }
    for (const auto& tag : u.slot_tags) v.tags.add(tag);
    v.intents.add(u.intent);
  }
  return v;
}

Dataset parse_dataset(std::istream& in, const std::string& source_name, bool build_vocabs) {
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  std::optional<Utterance> current;
  std::size_t block_line = 0;

  auto finish = [&]() {
    if (!current) return;
    if (current->tokens.empty()) throw FormatError(source_name, block_line, "utterance has no tokens");
    ds.utterances.push_back(std::move(*current));
    current.reset();
  };

  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = trim(line);
    if (text.empty()) {
      finish();
      continue;
    }
    if (text.substr(0, kIntentPrefix.size()) == kIntentPrefix) {
      finish();
      const auto label = trim(text.substr(kIntentPrefix.size()));
      if (label.empty() || split_ws(label).size() != 1) {
        throw FormatError(source_name, line_no, "intent label must be a single non-empty field");
      }
      current.emplace();
      current->intent = std::string(label);
      block_line = line_no;
      continue;
    }
    if (!current) throw FormatError(source_name, line_no, "token line outside a block (missing '# intent:' header)");
    const auto fields = split_ws(text);
    if (fields.size() != 2) {
      throw FormatError(source_name, line_no,
                        "expected '<token>\\t<tag>', found " + std::to_string(fields.size()) + " field(s)");
    }
    if (!is_valid_bio_tag(fields[1])) {
      throw FormatError(source_name, line_no, "malformed BIO tag '" + std::string(fields[1]) + "'");
    }
    current->tokens.emplace_back(fields[0]);
    current->slot_tags.emplace_back(fields[1]);
  }
  finish();
  if (build_vocabs) ds.vocab = build_vocabularies(ds.utterances);
  return ds;
}

Dataset parse_dataset(const std::filesystem::path& path, bool build_vocabs) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), 0, "cannot open dataset file");
  return parse_dataset(in, path.string(), build_vocabs);
}

Dataset parse_dataset_text(std::string_view text, bool build_vocabs) {
  std::istringstream in{std::string(text)};
  return parse_dataset(in, "<text>", build_vocabs);
}

void write_dataset(std::ostream& out, const std::vector<Utterance>& utterances) {
  bool first = true;
  for (const auto& u : utterances) {
    if (u.tokens.size() != u.slot_tags.size()) throw std::invalid_argument("utterance tokens/tags length mismatch");
    if (!first) out << '\n';
    first = false;
    out << kIntentPrefix << ' ' << u.intent << '\n';
    for (std::size_t i = 0; i < u.tokens.size(); ++i) out << u.tokens[i] << '\t' << u.slot_tags[i] << '\n';
  }
}

std::string serialize_dataset(const std::vector<Utterance>& utterances) {
  std::ostringstream out;
  write_dataset(out, utterances);
  return out.str();
}

std::vector<Span> bio_spans(const std::vector<std::string>& tags) {
  std::vector<Span> spans;
  std::optional<Span> open;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    const auto pos = static_cast<Index>(i);
    if (tag.size() < 2 || tag[1] != '-') {  // O (or anything unrecognised) closes the span
      if (open) spans.push_back(*open);
      open.reset();
      continue;
    }
    const std::string type = tag.substr(2);
    const bool continues = tag[0] == 'I' && open && open->type == type;
    if (continues) {
      open->end = pos;
      continue;
    }
    if (open) spans.push_back(*open);
    open = Span{pos, pos, type};
  }
  if (open) spans.push_back(*open);
  return spans;
}

EmbeddingMatrix load_embeddings(std::istream& in, const std::string& source_name, const Vocabulary& words, int dim,
                                Rng& rng, bool trainable) {
  if (dim <= 0) throw std::invalid_argument("embedding dimension must be positive");
  EmbeddingMatrix emb;
  emb.dim = dim;
  emb.trainable = trainable;
  emb.rows.resize(words.size(), dim);
  for (Index i = 0; i < emb.rows.size(); ++i) emb.rows.data()[i] = static_cast<float>(0.1 * rng.normal());
  if (words.reserved()) emb.rows.row(Vocabulary::kPad).setZero();

  std::vector<bool> seen(static_cast<std::size_t>(words.size()), false);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_ws(line);
    if (fields.empty()) continue;
    // word2vec/fastText header "<count> <dim>"
    if (line_no == 1 && fields.size() == 2 && fields[0].find_first_not_of("0123456789") == std::string_view::npos) {
      continue;
    }
    if (static_cast<int>(fields.size()) != dim + 1) {
      throw FormatError(source_name, line_no,
                        "expected " + std::to_string(dim) + " values, found " + std::to_string(fields.size() - 1));
    }
    const int idx = words.contains(lowercase(fields[0])) ? words.index(lowercase(fields[0])) : -1;
    if (idx < 0 || (words.reserved() && idx < 2) || seen[static_cast<std::size_t>(idx)]) continue;
    for (int j = 0; j < dim; ++j) {
      const std::string tok(fields[static_cast<std::size_t>(j) + 1]);
      char* end = nullptr;
      const float v = std::strtof(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size()) {
        throw FormatError(source_name, line_no, "malformed number '" + tok + "'");
      }
      emb.rows(idx, j) = v;
    }
    seen[static_cast<std::size_t>(idx)] = true;
    ++emb.found;
  }
  const int denom = words.size() - (words.reserved() ? 2 : 0);
  emb.coverage = denom > 0 ? static_cast<double>(emb.found) / denom : 0.0;
  return emb;
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path, const Vocabulary& words, int dim, Rng& rng,
                                bool trainable) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), 0, "cannot open embedding file");
  return load_embeddings(in, path.string(), words, dim, rng, trainable);
}

}  // namespace slu
