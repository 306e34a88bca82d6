#include "slu/config.hpp"

#include "slu/config_json.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace slu {

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view text, const std::pair<E, const char*> (&table)[N], const char* what) {
  for (const auto& [value, name] : table) {
    if (text == name) return value;
  }
  std::string valid;
  for (const auto& [value, name] : table) valid += (valid.empty() ? "" : ", ") + std::string(name);
  throw ConfigError("unknown " + std::string(what) + " '" + std::string(text) + "' (valid: " + valid + ")");
}

template <typename E, std::size_t N>
std::string enum_name(E value, const std::pair<E, const char*> (&table)[N]) {
  for (const auto& [v, name] : table) {
    if (v == value) return name;
  }
  return "?";
}

constexpr std::pair<EncoderKind, const char*> kEncoderNames[] = {
    {EncoderKind::kGru, "gru"},
    {EncoderKind::kHighwayLstm, "highway-lstm"},
    {EncoderKind::kMultiHead, "multi-head"},
    {EncoderKind::kBiBlock, "bi-block"},
};
constexpr std::pair<SlotDecoder, const char*> kDecoderNames[] = {
    {SlotDecoder::kSoftmax, "softmax"},
    {SlotDecoder::kSoftmaxSmoothing, "softmax+smoothing"},
    {SlotDecoder::kCrf, "crf"},
};
constexpr std::pair<TrainMode, const char*> kModeNames[] = {
    {TrainMode::kJoint, "joint"},
    {TrainMode::kIntentOnly, "intent-only"},
    {TrainMode::kSlotOnly, "slot-only"},
};
constexpr std::pair<SelectMetric, const char*> kMetricNames[] = {
    {SelectMetric::kAuto, "auto"},
    {SelectMetric::kSlotF1, "slot-f1"},
    {SelectMetric::kIntentAccuracy, "intent-accuracy"},
    {SelectMetric::kSum, "sum"},
};
constexpr std::pair<EncoderKind, const char*> kVariantEncoders[] = {
    {EncoderKind::kHighwayLstm, "Highway"},
    {EncoderKind::kGru, "GRU"},
    {EncoderKind::kMultiHead, "MulHeadAtt"},
    {EncoderKind::kBiBlock, "Block-Dim.Att"},
};

void check(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

bool keep_probability(double p) { return p > 0.0 && p <= 1.0; }

std::string fnv_hex(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

int EmbedderConfig::output_dim() const {
  return (use_word ? word_dim : 0) + (use_char ? char_filters * static_cast<int>(char_windows.size()) : 0) +
         (use_gazetteer ? gaz_dim : 0);
}

void EmbedderConfig::validate() const {
  check(use_word || use_char || use_gazetteer, "embedder: at least one of word, char, gazetteer must be enabled");
  check(!use_word || word_dim > 0, "embedder.word_dim must be positive");
  if (use_char) {
    check(char_dim > 0, "embedder.char_dim must be positive");
    check(char_filters > 0, "embedder.char_filters must be positive");
    check(!char_windows.empty(), "embedder.char_windows must not be empty");
    for (int w : char_windows) check(w > 0, "embedder.char_windows entries must be positive");
    check(max_token_chars > 0, "embedder.max_token_chars must be positive");
  }
  check(!use_gazetteer || gaz_dim > 0, "embedder.gaz_dim must be positive");
}

int EncoderConfig::output_dim() const {
  switch (kind) {
    case EncoderKind::kGru:
    case EncoderKind::kHighwayLstm:
      return 2 * hidden;
    case EncoderKind::kMultiHead:
      return d_model;
    case EncoderKind::kBiBlock:
      return 2 * d_model;
  }
  return 0;
}

void EncoderConfig::validate() const {
  check(depth >= 1, "encoder.depth must be >= 1");
  check(hidden > 0, "encoder.hidden must be positive");
  check(d_model > 0, "encoder.d_model must be positive");
  check(heads > 0 && d_model % heads == 0, "encoder.heads must divide encoder.d_model");
  check(blocks >= 1, "encoder.blocks must be >= 1");
  check(ffn_dim > 0, "encoder.ffn_dim must be positive");
  check(keep_probability(recurrent_dropout_keep), "encoder.recurrent_dropout_keep must be in (0, 1]");
  check(keep_probability(residual_dropout_keep), "encoder.residual_dropout_keep must be in (0, 1]");
  check(attention_clip > 0.0, "encoder.attention_clip must be positive");
}

void HeadsConfig::validate() const {
  check(ffn_dim > 0, "heads.ffn_dim must be positive");
  check(ffn_layers >= 0, "heads.ffn_layers must be >= 0");
  check(attention_hidden >= 0, "heads.attention_hidden must be >= 0");
  check(label_smoothing >= 0.0 && label_smoothing < 1.0, "heads.label_smoothing must be in [0, 1)");
  check(!forbid_o_to_i || slot_decoder == SlotDecoder::kCrf, "heads.forbid_o_to_i requires the crf slot decoder");
}

void ModelConfig::validate() const {
  embedder.validate();
  encoder.validate();
  heads.validate();
  check(keep_probability(dropout_keep), "model.dropout_keep must be in (0, 1]");
}

void TrainConfig::validate() const {
  check(alpha_intent >= 0.0 && alpha_slot >= 0.0, "train: loss weights must be non-negative");
  if (mode == TrainMode::kJoint) check(alpha_intent > 0.0 && alpha_slot > 0.0, "train: joint mode needs both alphas > 0");
  if (mode == TrainMode::kIntentOnly) check(alpha_intent > 0.0, "train: intent-only mode needs alpha_intent > 0");
  if (mode == TrainMode::kSlotOnly) check(alpha_slot > 0.0, "train: slot-only mode needs alpha_slot > 0");
  check(lr > 0.0, "train.lr must be positive");
  check(batch_size > 0, "train.batch_size must be positive");
  check(max_epochs > 0, "train.max_epochs must be positive");
  check(patience > 0, "train.patience must be positive");
  check(clip_norm >= 0.0, "train.clip_norm must be >= 0 (0 disables clipping)");
  check(!seeds.empty(), "train.seeds must not be empty");
}

std::string to_string(EncoderKind kind) { return enum_name(kind, kEncoderNames); }
std::string to_string(SlotDecoder decoder) { return enum_name(decoder, kDecoderNames); }
std::string to_string(TrainMode mode) { return enum_name(mode, kModeNames); }
std::string to_string(SelectMetric metric) { return enum_name(metric, kMetricNames); }
EncoderKind parse_encoder_kind(std::string_view text) { return parse_enum(text, kEncoderNames, "encoder kind"); }
SlotDecoder parse_slot_decoder(std::string_view text) { return parse_enum(text, kDecoderNames, "slot decoder"); }
TrainMode parse_train_mode(std::string_view text) { return parse_enum(text, kModeNames, "training mode"); }
SelectMetric parse_select_metric(std::string_view text) { return parse_enum(text, kMetricNames, "selection metric"); }

ModelConfig apply_variant(std::string_view variant, ModelConfig base) {
  const auto colon = variant.find(':');
  if (colon == std::string_view::npos) {
    throw ConfigError("model variant '" + std::string(variant) + "' must look like <encoder>:<components>");
  }
  base.encoder.kind = parse_enum(variant.substr(0, colon), kVariantEncoders, "variant encoder");
  base.embedder.use_word = base.embedder.use_char = base.embedder.use_gazetteer = false;
  std::string_view rest = variant.substr(colon + 1);
  while (true) {
    const auto plus = rest.find('+');
    const auto part = rest.substr(0, plus);
    if (part == "W") {
      base.embedder.use_word = true;
    } else if (part == "CNN") {
      base.embedder.use_char = true;
    } else if (part == "G") {
      base.embedder.use_gazetteer = true;
    } else {
      throw ConfigError("unknown variant component '" + std::string(part) + "' (valid: W, CNN, G)");
    }
    if (plus == std::string_view::npos) break;
    rest = rest.substr(plus + 1);
  }
  return base;
}

std::string variant_name(const ModelConfig& config) {
  std::string name = enum_name(config.encoder.kind, kVariantEncoders) + ":";
  std::vector<std::string> parts;
  if (config.embedder.use_word) parts.emplace_back("W");
  if (config.embedder.use_char) parts.emplace_back("CNN");
  if (config.embedder.use_gazetteer) parts.emplace_back("G");
  for (std::size_t i = 0; i < parts.size(); ++i) name += (i ? "+" : "") + parts[i];
  return name;
}

Json to_json(const EmbedderConfig& c) {
  return Json{{"use_word", c.use_word},
              {"use_char", c.use_char},
              {"use_gazetteer", c.use_gazetteer},
              {"word_dim", c.word_dim},
              {"fixed_word_embeddings", c.fixed_word_embeddings},
              {"char_dim", c.char_dim},
              {"char_windows", c.char_windows},
              {"char_filters", c.char_filters},
              {"max_token_chars", c.max_token_chars},
              {"gaz_dim", c.gaz_dim}};
}

Json to_json(const EncoderConfig& c) {
  return Json{{"kind", to_string(c.kind)},
              {"depth", c.depth},
              {"hidden", c.hidden},
              {"d_model", c.d_model},
              {"heads", c.heads},
              {"blocks", c.blocks},
              {"ffn_dim", c.ffn_dim},
              {"recurrent_dropout_keep", c.recurrent_dropout_keep},
              {"residual_dropout_keep", c.residual_dropout_keep},
              {"positional_encoding", c.positional_encoding},
              {"attention_clip", c.attention_clip}};
}

Json to_json(const HeadsConfig& c) {
  return Json{{"ffn_dim", c.ffn_dim},
              {"ffn_layers", c.ffn_layers},
              {"attention_hidden", c.attention_hidden},
              {"slot_decoder", to_string(c.slot_decoder)},
              {"label_smoothing", c.label_smoothing},
              {"forbid_o_to_i", c.forbid_o_to_i}};
}

Json to_json(const ModelConfig& c) {
  return Json{{"embedder", to_json(c.embedder)},
              {"encoder", to_json(c.encoder)},
              {"heads", to_json(c.heads)},
              {"dropout_keep", c.dropout_keep}};
}

Json to_json(const TrainConfig& c) {
  return Json{{"alpha_intent", c.alpha_intent},
              {"alpha_slot", c.alpha_slot},
              {"lr", c.lr},
              {"batch_size", c.batch_size},
              {"max_epochs", c.max_epochs},
              {"patience", c.patience},
              {"clip_norm", c.clip_norm},
              {"mode", to_string(c.mode)},
              {"select_metric", to_string(c.select_metric)},
              {"seeds", c.seeds}};
}

StrictObject::StrictObject(const Json& j, std::string path) : json_(j), path_(std::move(path)) {
  if (!j.is_object()) throw ConfigError(path_ + ": expected an object, found " + std::string(j.type_name()));
}

const Json* StrictObject::child(const char* key) {
  const auto it = json_.find(key);
  if (it == json_.end()) return nullptr;
  seen_.emplace_back(key);
  return &*it;
}

void StrictObject::finish() const {
  std::vector<std::string> unknown;
  for (const auto& [key, _] : json_.items()) {
    if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) unknown.push_back(path_ + "." + key);
  }
  if (unknown.empty()) return;
  std::string msg = "unknown configuration key";
  msg += unknown.size() > 1 ? "s: " : ": ";
  for (std::size_t i = 0; i < unknown.size(); ++i) msg += (i ? ", " : "") + unknown[i];
  throw ConfigError(msg);
}

namespace {

template <typename E>
void read_enum(StrictObject& obj, const char* key, E& out, E (*parse)(std::string_view)) {
  std::string text;
  obj.read(key, text);
  if (!text.empty()) {
    try {
      out = parse(text);
    } catch (const ConfigError& e) {
      throw ConfigError(obj.path() + "." + key + ": " + e.what());
    }
  }
}

EmbedderConfig embedder_from_json(const Json& j, const std::string& path) {
  EmbedderConfig c;
  StrictObject o(j, path);
  o.read("use_word", c.use_word);
  o.read("use_char", c.use_char);
  o.read("use_gazetteer", c.use_gazetteer);
  o.read("word_dim", c.word_dim);
  o.read("fixed_word_embeddings", c.fixed_word_embeddings);
  o.read("char_dim", c.char_dim);
  o.read("char_windows", c.char_windows);
  o.read("char_filters", c.char_filters);
  o.read("max_token_chars", c.max_token_chars);
  o.read("gaz_dim", c.gaz_dim);
  o.finish();
  return c;
}

EncoderConfig encoder_from_json(const Json& j, const std::string& path) {
  EncoderConfig c;
  StrictObject o(j, path);
  read_enum(o, "kind", c.kind, parse_encoder_kind);
  o.read("depth", c.depth);
  o.read("hidden", c.hidden);
  o.read("d_model", c.d_model);
  o.read("heads", c.heads);
  o.read("blocks", c.blocks);
  o.read("ffn_dim", c.ffn_dim);
  o.read("recurrent_dropout_keep", c.recurrent_dropout_keep);
  o.read("residual_dropout_keep", c.residual_dropout_keep);
  o.read("positional_encoding", c.positional_encoding);
  o.read("attention_clip", c.attention_clip);
  o.finish();
  return c;
}

HeadsConfig heads_from_json(const Json& j, const std::string& path) {
  HeadsConfig c;
  StrictObject o(j, path);
  o.read("ffn_dim", c.ffn_dim);
  o.read("ffn_layers", c.ffn_layers);
  o.read("attention_hidden", c.attention_hidden);
  read_enum(o, "slot_decoder", c.slot_decoder, parse_slot_decoder);
  o.read("label_smoothing", c.label_smoothing);
  o.read("forbid_o_to_i", c.forbid_o_to_i);
  o.finish();
  return c;
}

}  // namespace

ModelConfig model_config_from_json(const Json& j, const std::string& path) {
  ModelConfig c;
  StrictObject o(j, path);
  std::string variant;
  o.read("variant", variant);
  if (!variant.empty()) c = apply_variant(variant, c);
  if (const Json* e = o.child("embedder")) {
    // The variant picks the components; explicit keys override it.
    const auto keep = c.embedder;
    c.embedder = embedder_from_json(*e, path + ".embedder");
    if (!variant.empty()) {
      if (!e->contains("use_word")) c.embedder.use_word = keep.use_word;
      if (!e->contains("use_char")) c.embedder.use_char = keep.use_char;
      if (!e->contains("use_gazetteer")) c.embedder.use_gazetteer = keep.use_gazetteer;
    }
  }
  if (const Json* e = o.child("encoder")) {
    const auto kind = c.encoder.kind;
    c.encoder = encoder_from_json(*e, path + ".encoder");
    if (!variant.empty() && !e->contains("kind")) c.encoder.kind = kind;
  }
  if (const Json* h = o.child("heads")) c.heads = heads_from_json(*h, path + ".heads");
  o.read("dropout_keep", c.dropout_keep);
  o.finish();
  return c;
}

TrainConfig train_config_from_json(const Json& j, const std::string& path) {
  TrainConfig c;
  StrictObject o(j, path);
  o.read("alpha_intent", c.alpha_intent);
  o.read("alpha_slot", c.alpha_slot);
  o.read("lr", c.lr);
  o.read("batch_size", c.batch_size);
  o.read("max_epochs", c.max_epochs);
  o.read("patience", c.patience);
  o.read("clip_norm", c.clip_norm);
  read_enum(o, "mode", c.mode, parse_train_mode);
  read_enum(o, "select_metric", c.select_metric, parse_select_metric);
  o.read("seeds", c.seeds);
  o.finish();
  return c;
}

std::string to_json_text(const ModelConfig& config) { return to_json(config).dump(); }
std::string to_json_text(const TrainConfig& config) { return to_json(config).dump(); }

ModelConfig model_config_from_json_text(std::string_view text) {
  try {
    return model_config_from_json(Json::parse(text, nullptr, true, true));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

TrainConfig train_config_from_json_text(std::string_view text) {
  try {
    return train_config_from_json(Json::parse(text, nullptr, true, true));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
}

std::string config_hash(const ModelConfig& config) { return fnv_hex(to_json_text(config)); }

}  // namespace slu
