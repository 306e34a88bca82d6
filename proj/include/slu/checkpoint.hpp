#pragma once

#include "slu/config_json.hpp"
#include "slu/model.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace slu {

// Malformed checkpoint file or a checkpoint that does not fit a model.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Shape shape;
  Matrix<float> value;  // storage layout as in Tensor
};

/// Named float32 tensors in model order plus JSON metadata: "config",
/// "config_hash", "vocab" (token lists), "fingerprints", "gazetteer", "seed",
/// "dataset_id", "heads" and a free-form "extra" object.
struct Checkpoint {
  Json metadata;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(std::string_view name) const;
  std::vector<std::string> names() const;
};

Checkpoint make_checkpoint(const SluModel<float>& model, const Json& extra = Json::object());

/// Binary layout (little-endian):
///   8 bytes  magic "SLUCKPT1"
///   u64      header length H
///   H bytes  UTF-8 JSON {"metadata": {...}, "tensors": [{"name", "dtype":"f32",
///            "shape", "offset", "nbytes"}...]}
///   payload  float32 values, offsets relative to the payload start
void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in, const std::string& source_name);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds the model described by the metadata and loads every tensor.
std::unique_ptr<SluModel<float>> model_from_checkpoint(const Checkpoint& checkpoint);

/// Copies tensors into an existing model. The name sets and shapes must agree;
/// the error lists names missing on either side.
void load_parameters(SluModel<float>& model, const Checkpoint& checkpoint);

/// Throws CheckpointError describing every differing config field and
/// vocabulary fingerprint when the checkpoint was not made for `model`.
void verify_compatible(const Checkpoint& checkpoint, const SluModel<float>& model);

// Metadata accessors.
ModelConfig checkpoint_config(const Checkpoint& checkpoint);
Vocabularies checkpoint_vocabularies(const Checkpoint& checkpoint);
GazetteerSet checkpoint_gazetteer(const Checkpoint& checkpoint);
HeadSet checkpoint_heads(const Checkpoint& checkpoint);

}  // namespace slu
