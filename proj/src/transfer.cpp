#include "slu/transfer.hpp"

#include <array>
#include <ostream>

namespace slu {

namespace {

constexpr std::array<std::pair<TransferSetting, const char*>, 4> kSettingNames = {{
    {TransferSetting::kAll, "all"},
    {TransferSetting::kFullSlot, "full-slot"},
    {TransferSetting::kFullMultidim, "full-multidim"},
    {TransferSetting::kFullBiLstm, "full-bilstm"},
}};

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

// Tensors whose rows are indexed by an input vocabulary.
const Vocabulary* row_vocabulary(std::string_view name, const Vocabularies& v) {
  if (name == "embed.word") return &v.words;
  if (name == "embed.char") return &v.chars;
  return nullptr;
}

// Tensors whose shape depends on a label inventory.
const Vocabulary* label_vocabulary(std::string_view name, const Vocabularies& v) {
  if (starts_with(name, "intent.output.")) return &v.intents;
  if (starts_with(name, "slot.output.") || name == "slot.crf.transitions") return &v.tags;
  return nullptr;
}

bool same_labels(const Vocabulary& a, const Vocabulary& b) {
  if (a.size() != b.size()) return false;
  for (const auto& t : a.tokens()) {
    if (!b.contains(t)) return false;
  }
  return true;
}

Checkpoint subset(const Checkpoint& c, const std::vector<std::string_view>& prefixes) {
  Checkpoint out;
  out.metadata = c.metadata;
  for (const auto& t : c.tensors) {
    for (auto p : prefixes) {
      if (starts_with(t.name, p)) {
        out.tensors.push_back(t);
        break;
      }
    }
  }
  return out;
}

void require_same_origin(const Checkpoint& a, const Checkpoint& b, const char* what) {
  if (b.tensors.empty()) return;
  if (a.metadata.at("config_hash") != b.metadata.at("config_hash") ||
      a.metadata.at("fingerprints") != b.metadata.at("fingerprints")) {
    throw CheckpointError(std::string("recombine: ") + what +
                          " module was built for a different configuration or vocabulary than the trunk");
  }
}

}  // namespace

std::string to_string(TransferSetting setting) {
  for (const auto& [s, name] : kSettingNames) {
    if (s == setting) return name;
  }
  return "?";
}

TransferSetting parse_transfer_setting(std::string_view text) {
  for (const auto& [s, name] : kSettingNames) {
    if (text == name) return s;
  }
  throw ConfigError("unknown transfer setting '" + std::string(text) +
                    "' (expected one of: all, full-slot, full-multidim, full-bilstm)");
}

bool is_transferred(TransferSetting setting, std::string_view name) {
  switch (setting) {
    case TransferSetting::kAll:
      return true;
    case TransferSetting::kFullSlot:
      return !starts_with(name, "slot.");
    case TransferSetting::kFullMultidim:
      return !starts_with(name, "intent.attention.");
    case TransferSetting::kFullBiLstm:
      return !starts_with(name, "encoder.");
  }
  return true;
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kSource:
      return "source";
    case Provenance::kRowMapped:
      return "row-mapped";
    case Provenance::kFresh:
      return "fresh";
    case Provenance::kReinitialized:
      return "reinitialized";
    case Provenance::kKeptTarget:
      return "kept-target";
  }
  return "?";
}

const TransferEntry& TransferReport::entry(std::string_view name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e;
  }
  throw std::out_of_range("transfer report has no tensor " + std::string(name));
}

TransferReport transfer_init(const Checkpoint& source, SluModel<float>& target, TransferSetting setting,
                             const TransferOptions& options) {
  const Vocabularies source_vocab = checkpoint_vocabularies(source);
  const Vocabularies& target_vocab = target.vocab();
  auto& params = target.params();
  TransferReport report;
  report.setting = setting;

  // Decide everything first; the target is only written once all checks pass.
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.name(i);
    const auto& tensor = params.tensor(i);
    TransferEntry e{name, Provenance::kSource, ""};
    if (!is_transferred(setting, name)) {
      e.provenance = Provenance::kFresh;
      report.entries.push_back(e);
      continue;
    }
    const NamedTensor* src = source.find(name);
    if (!src) throw CheckpointError("transfer: tensor " + name + " is absent from the source checkpoint");

    if (const Vocabulary* tv = row_vocabulary(name, target_vocab)) {
      const Vocabulary* sv = row_vocabulary(name, source_vocab);
      if (src->value.cols() != tensor.value.cols()) {
        throw CheckpointError("transfer: tensor " + name + " has width " + std::to_string(src->value.cols()) +
                              " in the source and " + std::to_string(tensor.value.cols()) + " in the target");
      }
      if (name == "embed.word" && !tensor.requires_grad) {
        e.provenance = Provenance::kKeptTarget;
        e.note = "fixed pre-trained table";
      } else if (*sv != *tv) {
        int shared = 0;
        for (const auto& tok : tv->tokens()) shared += sv->contains(tok);
        e.provenance = Provenance::kRowMapped;
        e.note = std::to_string(shared) + " of " + std::to_string(tv->size()) + " rows shared";
      }
      report.entries.push_back(e);
      continue;
    }
    if (const Vocabulary* tv = label_vocabulary(name, target_vocab)) {
      const Vocabulary* sv = label_vocabulary(name, source_vocab);
      if (*sv != *tv && same_labels(*sv, *tv) && src->shape == tensor.shape) {
        e.provenance = Provenance::kRowMapped;
        e.note = "label order remapped";
        report.entries.push_back(e);
        continue;
      }
      if (*sv != *tv) {
        const std::string what = "label inventory of " + name + " differs between source (" +
                                 std::to_string(sv->size()) + " labels) and target (" + std::to_string(tv->size()) +
                                 " labels)";
        if (!options.reinit_mismatched_outputs) throw CheckpointError("transfer: " + what);
        e.provenance = Provenance::kReinitialized;
        report.warnings.push_back(what + "; output layer re-initialised");
        report.entries.push_back(e);
        continue;
      }
    }
    if (src->shape != tensor.shape) {
      throw CheckpointError("transfer: tensor " + name + " has shape " + shape_string(src->shape) +
                            " in the source and " + shape_string(tensor.shape) + " in the target");
    }
    report.entries.push_back(e);
  }

  for (const auto& e : report.entries) {
    auto& dst = params.at(e.name).value;
    if (e.provenance == Provenance::kSource) {
      dst = source.find(e.name)->value;
    } else if (e.provenance == Provenance::kRowMapped && label_vocabulary(e.name, target_vocab)) {
      const auto& src = source.find(e.name)->value;
      const Vocabulary* tv = label_vocabulary(e.name, target_vocab);
      const Vocabulary* sv = label_vocabulary(e.name, source_vocab);
      // Target label i lives at source index perm[i]; CRF start/stop states stay put.
      std::vector<Index> perm;
      for (int i = 0; i < tv->size(); ++i) perm.push_back(sv->index(tv->token(i)));
      if (e.name == "slot.crf.transitions") {
        for (Index i = tv->size(); i < dst.rows(); ++i) perm.push_back(i);
        for (Index r = 0; r < dst.rows(); ++r) {
          for (Index c = 0; c < dst.cols(); ++c) dst(r, c) = src(perm[static_cast<std::size_t>(r)], perm[static_cast<std::size_t>(c)]);
        }
      } else {
        for (Index c = 0; c < dst.cols(); ++c) dst.col(c) = src.col(perm[static_cast<std::size_t>(c)]);
      }
    } else if (e.provenance == Provenance::kRowMapped) {
      const auto& src = source.find(e.name)->value;
      const Vocabulary* tv = row_vocabulary(e.name, target_vocab);
      const Vocabulary* sv = row_vocabulary(e.name, source_vocab);
      for (int r = 0; r < tv->size(); ++r) {
        const auto& tok = tv->token(r);
        if (sv->contains(tok)) dst.row(r) = src.row(sv->index(tok));
      }
    }
  }
  return report;
}

bool adopt_source_labels(Vocabularies& target, const Vocabularies& source) {
  bool changed = false;
  for (auto [t, s] : {std::pair{&target.tags, &source.tags}, std::pair{&target.intents, &source.intents}}) {
    if (*t == *s) continue;
    bool covered = true;
    for (const auto& label : t->tokens()) covered = covered && s->contains(label);
    if (!covered) continue;
    *t = *s;
    changed = true;
  }
  return changed;
}

void write_transfer_report(std::ostream& out, const TransferReport& report) {
  out << "setting " << to_string(report.setting) << '\n';
  for (const auto& e : report.entries) {
    out << e.name << '\t' << to_string(e.provenance);
    if (!e.note.empty()) out << '\t' << e.note;
    out << '\n';
  }
  for (const auto& w : report.warnings) out << "warning: " << w << '\n';
}

ModuleSplit split_modules(const Checkpoint& checkpoint) {
  ModuleSplit s{subset(checkpoint, {"embed.", "encoder."}), subset(checkpoint, {"intent."}),
                subset(checkpoint, {"slot."})};
  const std::size_t covered = s.trunk.tensors.size() + s.intent.tensors.size() + s.slot.tensors.size();
  if (covered != checkpoint.tensors.size()) {
    throw CheckpointError("split_modules: " + std::to_string(checkpoint.tensors.size() - covered) +
                          " tensor(s) outside the embed/encoder/intent/slot namespaces");
  }
  return s;
}

Checkpoint recombine(const Checkpoint& trunk, const Checkpoint& intent, const Checkpoint& slot) {
  require_same_origin(trunk, intent, "intent");
  require_same_origin(trunk, slot, "slot");
  Checkpoint out;
  out.metadata = trunk.metadata;
  for (const auto* part : {&trunk, &intent, &slot}) {
    out.tensors.insert(out.tensors.end(), part->tensors.begin(), part->tensors.end());
  }
  out.metadata["heads"] = {{"intent", !intent.tensors.empty()}, {"slot", !slot.tensors.empty()}};
  return out;
}

std::unique_ptr<SluModel<float>> module_model(const Checkpoint& trunk, const Checkpoint& head) {
  if (head.tensors.empty()) throw CheckpointError("module_model: empty head");
  const bool intent = starts_with(head.tensors.front().name, "intent.");
  const Checkpoint none;
  return model_from_checkpoint(intent ? recombine(trunk, head, none) : recombine(trunk, none, head));
}

CompositePredictor::CompositePredictor(std::unique_ptr<SluModel<float>> intent_module,
                                       std::unique_ptr<SluModel<float>> slot_module)
    : intent_(std::move(intent_module)), slot_(std::move(slot_module)) {
  if (!intent_ || !intent_->heads().intent) throw std::invalid_argument("composite: intent module lacks an intent head");
  if (!slot_ || !slot_->heads().slot) throw std::invalid_argument("composite: slot module lacks a slot head");
}

std::vector<Prediction> CompositePredictor::predict(std::span<const Utterance* const> utterances) {
  auto intents = intent_->predict(utterances);
  auto slots = slot_->predict(utterances);
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i].intent = std::move(intents[i].intent);
  return slots;
}

}  // namespace slu
