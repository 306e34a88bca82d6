#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace slu {

// Invalid or unknown configuration values; raised before any compute.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EmbedderConfig {
  bool use_word = true;
  bool use_char = true;
  bool use_gazetteer = false;
  int word_dim = 100;
  bool fixed_word_embeddings = false;
  int char_dim = 8;
  std::vector<int> char_windows{3, 4, 5};
  int char_filters = 50;
  int max_token_chars = 30;
  int gaz_dim = 50;

  int output_dim() const;
  void validate() const;
  bool operator==(const EmbedderConfig&) const = default;
};

enum class EncoderKind { kGru, kHighwayLstm, kMultiHead, kBiBlock };

struct EncoderConfig {
  EncoderKind kind = EncoderKind::kHighwayLstm;
  int depth = 2;
  int hidden = 300;  // per direction, RNN kinds
  int d_model = 300;  // attention kinds
  int heads = 2;
  int blocks = 3;
  int ffn_dim = 300;
  double recurrent_dropout_keep = 0.9;
  double residual_dropout_keep = 0.8;
  bool positional_encoding = true;
  double attention_clip = 5.0;  // c in c * tanh(x / c) of multi-dimensional attention

  int output_dim() const;
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

enum class SlotDecoder { kSoftmax, kSoftmaxSmoothing, kCrf };

struct HeadsConfig {
  int ffn_dim = 300;
  int ffn_layers = 2;
  int attention_hidden = 0;  // 0: same width as the encoder output
  SlotDecoder slot_decoder = SlotDecoder::kSoftmaxSmoothing;
  double label_smoothing = 0.1;
  bool forbid_o_to_i = false;  // decode-time BIO constraint for the CRF

  void validate() const;
  bool operator==(const HeadsConfig&) const = default;
};

struct ModelConfig {
  EmbedderConfig embedder;
  EncoderConfig encoder;
  HeadsConfig heads;
  double dropout_keep = 0.9;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class TrainMode { kJoint, kIntentOnly, kSlotOnly };

enum class SelectMetric { kAuto, kSlotF1, kIntentAccuracy, kSum };

struct TrainConfig {
  double alpha_intent = 0.2;
  double alpha_slot = 0.8;
  double lr = 1e-3;
  int batch_size = 32;
  int max_epochs = 50;
  int patience = 5;
  double clip_norm = 5.0;
  TrainMode mode = TrainMode::kJoint;
  SelectMetric select_metric = SelectMetric::kAuto;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

std::string to_string(EncoderKind kind);
std::string to_string(SlotDecoder decoder);
std::string to_string(TrainMode mode);
std::string to_string(SelectMetric metric);
EncoderKind parse_encoder_kind(std::string_view text);
SlotDecoder parse_slot_decoder(std::string_view text);
TrainMode parse_train_mode(std::string_view text);
SelectMetric parse_select_metric(std::string_view text);

/// Model variants named as in the results tables, "<encoder>:<components>":
/// encoder is Highway, GRU, MulHeadAtt or Block-Dim.Att; components are
/// W, CNN and G joined by '+'. Applies the variant to a copy of base.
ModelConfig apply_variant(std::string_view variant, ModelConfig base = {});
std::string variant_name(const ModelConfig& config);

/// Canonical JSON text of a config (sorted keys, no whitespace).
std::string to_json_text(const ModelConfig& config);
std::string to_json_text(const TrainConfig& config);
/// Strict parsing: unknown keys and wrongly typed values throw ConfigError.
ModelConfig model_config_from_json_text(std::string_view text);
TrainConfig train_config_from_json_text(std::string_view text);

// FNV-1a of the canonical JSON text, 16 hex digits.
std::string config_hash(const ModelConfig& config);

}  // namespace slu
