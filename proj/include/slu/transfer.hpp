#pragma once

#include "slu/checkpoint.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace slu {

/// Which parameter groups are copied from the source model.
///   kAll           every namespace
///   kFullSlot      all but slot.*
///   kFullMultidim  all but intent.attention.* (the intent pooling attention)
///   kFullBiLstm    all but encoder.*, whatever the encoder kind
enum class TransferSetting { kAll, kFullSlot, kFullMultidim, kFullBiLstm };

std::string to_string(TransferSetting setting);
// Accepts "all", "full-slot", "full-multidim", "full-bilstm".
TransferSetting parse_transfer_setting(std::string_view text);

bool is_transferred(TransferSetting setting, std::string_view tensor_name);

enum class Provenance {
  kSource,      // bit-equal copy of the source tensor
  kRowMapped,   // vocabulary table: rows of shared entries copied by token
  kFresh,       // excluded by the setting; target initialisation kept
  kReinitialized,  // would be transferred but the label inventory differs
  kKeptTarget,  // fixed pre-trained table of the target language
};

std::string to_string(Provenance provenance);

struct TransferEntry {
  std::string name;
  Provenance provenance = Provenance::kSource;
  std::string note;
};

struct TransferReport {
  TransferSetting setting = TransferSetting::kAll;
  std::vector<TransferEntry> entries;  // one per target tensor, in model order
  std::vector<std::string> warnings;

  const TransferEntry& entry(std::string_view name) const;
};

struct TransferOptions {
  // When the source and target label inventories differ, re-initialise the
  // affected output layers (with a warning) instead of failing.
  bool reinit_mismatched_outputs = false;
};

/// Overwrites the transferred tensors of `target` (freshly initialised from
/// its own seed) with the source's. Word and character tables are matched row
/// by row through the two vocabularies; a fixed word table keeps the target's
/// pre-trained rows. Any other shape mismatch throws CheckpointError naming
/// the tensor, before the target is modified.
TransferReport transfer_init(const Checkpoint& source, SluModel<float>& target, TransferSetting setting,
                             const TransferOptions& options = {});

/// When every tag (intent) of `target` also occurs in `source`, replaces the
/// target's tag (intent) inventory with the source's, so output layers can be
/// transferred even if the target training data lacks some labels. Returns
/// true if anything changed.
bool adopt_source_labels(Vocabularies& target, const Vocabularies& source);

void write_transfer_report(std::ostream& out, const TransferReport& report);

/// Disjoint parameter groups of a checkpoint: the shared trunk (embed.*,
/// encoder.*) and the two task heads. Each part keeps the full metadata.
struct ModuleSplit {
  Checkpoint trunk;
  Checkpoint intent;
  Checkpoint slot;
};

ModuleSplit split_modules(const Checkpoint& checkpoint);

/// Reassembles a checkpoint from a trunk and any heads that share its
/// metadata. An absent head is passed as an empty checkpoint.
Checkpoint recombine(const Checkpoint& trunk, const Checkpoint& intent, const Checkpoint& slot);

/// Predicts intents with one module and slots with another; each module runs
/// on its own trunk. This is how an intent head and a slot head taken from
/// different training runs are combined.
class CompositePredictor {
 public:
  CompositePredictor(std::unique_ptr<SluModel<float>> intent_module, std::unique_ptr<SluModel<float>> slot_module);

  std::vector<Prediction> predict(std::span<const Utterance* const> utterances);

  SluModel<float>& intent_module() { return *intent_; }
  SluModel<float>& slot_module() { return *slot_; }

 private:
  std::unique_ptr<SluModel<float>> intent_;
  std::unique_ptr<SluModel<float>> slot_;
};

/// Builds a single-head module model (trunk + one head) from checkpoint parts.
std::unique_ptr<SluModel<float>> module_model(const Checkpoint& trunk, const Checkpoint& head);

}  // namespace slu
