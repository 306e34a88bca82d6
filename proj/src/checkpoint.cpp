#include "slu/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <set>
#include <sstream>

namespace slu {

namespace {

constexpr char kMagic[8] = {'S', 'L', 'U', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

float get_f32(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
                             static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

Json vocab_json(const Vocabulary& v) { return v.tokens(); }

Json gazetteer_json(const GazetteerSet& set) {
  Json out = Json::array();
  for (const auto& t : set.types) out.push_back({{"name", t.name}, {"phrases", t.phrases}});
  return out;
}

// Leaf values of a JSON tree keyed by dotted path.
void flatten(const Json& j, const std::string& path, std::map<std::string, std::string>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(v, path.empty() ? k : path + "." + k, out);
  } else {
    out[path] = j.dump();
  }
}

[[noreturn]] void fail(const std::string& source, const std::string& what) {
  throw CheckpointError(source + ": " + what);
}

}  // namespace

const NamedTensor* Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<std::string> Checkpoint::names() const {
  std::vector<std::string> out;
  for (const auto& t : tensors) out.push_back(t.name);
  return out;
}

Checkpoint make_checkpoint(const SluModel<float>& model, const Json& extra) {
  Checkpoint c;
  const auto& v = model.vocab();
  c.metadata = {
      {"config", to_json(model.config())},
      {"config_hash", config_hash(model.config())},
      {"vocab", {{"words", vocab_json(v.words)}, {"chars", vocab_json(v.chars)},
                 {"tags", vocab_json(v.tags)}, {"intents", vocab_json(v.intents)}}},
      {"fingerprints", {{"words", v.words.fingerprint()}, {"chars", v.chars.fingerprint()},
                        {"tags", v.tags.fingerprint()}, {"intents", v.intents.fingerprint()}}},
      {"gazetteer", gazetteer_json(model.gazetteer())},
      {"seed", model.seed()},
      {"dataset_id", model.dataset_id},
      {"heads", {{"intent", model.heads().intent}, {"slot", model.heads().slot}}},
      {"extra", extra},
  };
  const auto& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.tensors.push_back({params.name(i), params.tensor(i).shape, params.tensor(i).value});
  }
  return c;
}

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint) {
  Json manifest = Json::array();
  std::string payload;
  for (const auto& t : checkpoint.tensors) {
    if (t.value.size() != shape_size(t.shape)) {
      throw CheckpointError("tensor " + t.name + ": value size does not match shape " + shape_string(t.shape));
    }
    const std::uint64_t offset = payload.size();
    for (Index i = 0; i < t.value.size(); ++i) put_f32(payload, t.value.data()[i]);
    manifest.push_back({{"name", t.name},
                        {"dtype", "f32"},
                        {"shape", t.shape},
                        {"offset", offset},
                        {"nbytes", payload.size() - offset}});
  }
  const std::string header = Json{{"metadata", checkpoint.metadata}, {"tensors", manifest}}.dump();
  std::string prefix(kMagic, sizeof kMagic);
  put_u64(prefix, header.size());
  out.write(prefix.data(), static_cast<std::streamsize>(prefix.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw CheckpointError("failed to write checkpoint");
}

Checkpoint read_checkpoint(std::istream& in, const std::string& source_name) {
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    fail(source_name, "not a checkpoint (bad magic)");
  }
  const std::uint64_t header_len = get_u64(data + 8);
  if (header_len > bytes.size() - 16) fail(source_name, "truncated header");
  Json header;
  try {
    header = Json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(source_name, std::string("malformed header: ") + e.what());
  }
  const std::size_t payload_start = 16 + header_len;
  const std::size_t payload_size = bytes.size() - payload_start;

  Checkpoint c;
  try {
    c.metadata = header.at("metadata");
    std::uint64_t expected_offset = 0;
    std::set<std::string> seen;
    for (const auto& entry : header.at("tensors")) {
      NamedTensor t;
      t.name = entry.at("name").get<std::string>();
      if (!seen.insert(t.name).second) fail(source_name, "tensor " + t.name + " appears twice");
      const auto dtype = entry.at("dtype").get<std::string>();
      if (dtype != "f32") fail(source_name, "tensor " + t.name + ": unknown dtype '" + dtype + "'");
      t.shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
      const auto count = static_cast<std::uint64_t>(shape_size(t.shape));
      if (nbytes != 4 * count) {
        fail(source_name, "tensor " + t.name + ": " + std::to_string(nbytes) + " bytes for shape " +
                              shape_string(t.shape));
      }
      if (offset != expected_offset) fail(source_name, "tensor " + t.name + ": unexpected offset");
      if (offset + nbytes > payload_size) fail(source_name, "payload truncated at tensor " + t.name);
      const auto [rows, cols] = storage_dims(t.shape);
      t.value.resize(rows, cols);
      const unsigned char* p = data + payload_start + offset;
      for (Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = get_f32(p + 4 * i);
      expected_offset = offset + nbytes;
      c.tensors.push_back(std::move(t));
    }
    if (expected_offset != payload_size) {
      fail(source_name, "payload has " + std::to_string(payload_size - expected_offset) + " trailing bytes");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(source_name, std::string("malformed manifest: ") + e.what());
  }
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  // Written to a temporary name first so a failure never leaves a partial file.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError(path.string() + ": cannot open for writing");
    write_checkpoint(out, checkpoint);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(path.string() + ": cannot open checkpoint");
  return read_checkpoint(in, path.string());
}

ModelConfig checkpoint_config(const Checkpoint& c) {
  return model_config_from_json(c.metadata.at("config"), "checkpoint.config");
}

Vocabularies checkpoint_vocabularies(const Checkpoint& c) {
  const auto& v = c.metadata.at("vocab");
  Vocabularies out;
  out.words = Vocabulary::from_tokens(v.at("words").get<std::vector<std::string>>(), true);
  out.chars = Vocabulary::from_tokens(v.at("chars").get<std::vector<std::string>>(), true);
  out.tags = Vocabulary::from_tokens(v.at("tags").get<std::vector<std::string>>(), false);
  out.intents = Vocabulary::from_tokens(v.at("intents").get<std::vector<std::string>>(), false);
  return out;
}

GazetteerSet checkpoint_gazetteer(const Checkpoint& c) {
  GazetteerSet set;
  for (const auto& t : c.metadata.at("gazetteer")) {
    set.types.push_back(
        {t.at("name").get<std::string>(), t.at("phrases").get<std::vector<std::vector<std::string>>>()});
  }
  return set;
}

HeadSet checkpoint_heads(const Checkpoint& c) {
  const auto& h = c.metadata.at("heads");
  return {h.at("intent").get<bool>(), h.at("slot").get<bool>()};
}

void load_parameters(SluModel<float>& model, const Checkpoint& checkpoint) {
  auto& params = model.params();
  std::vector<std::string> missing, unexpected;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!checkpoint.find(params.name(i))) missing.push_back(params.name(i));
  }
  for (const auto& t : checkpoint.tensors) {
    if (!params.contains(t.name)) unexpected.push_back(t.name);
  }
  if (!missing.empty() || !unexpected.empty()) {
    std::ostringstream msg;
    msg << "checkpoint does not match the model";
    if (!missing.empty()) {
      msg << "; absent from checkpoint:";
      for (const auto& n : missing) msg << ' ' << n;
    }
    if (!unexpected.empty()) {
      msg << "; not in model:";
      for (const auto& n : unexpected) msg << ' ' << n;
    }
    throw CheckpointError(msg.str());
  }
  for (const auto& t : checkpoint.tensors) {
    if (params.at(t.name).shape != t.shape) {
      throw CheckpointError("tensor " + t.name + ": checkpoint shape " + shape_string(t.shape) + ", model shape " +
                            shape_string(params.at(t.name).shape));
    }
  }
  // All checks pass before anything is written, so a failure leaves the model intact.
  for (const auto& t : checkpoint.tensors) params.at(t.name).value = t.value;
}

void verify_compatible(const Checkpoint& checkpoint, const SluModel<float>& model) {
  std::map<std::string, std::string> ours, theirs;
  flatten(to_json(model.config()), "", ours);
  flatten(checkpoint.metadata.at("config"), "", theirs);
  std::vector<std::string> diffs;
  std::set<std::string> keys;
  for (const auto& [k, _] : ours) keys.insert(k);
  for (const auto& [k, _] : theirs) keys.insert(k);
  for (const auto& k : keys) {
    const auto a = theirs.count(k) ? theirs[k] : "<absent>";
    const auto b = ours.count(k) ? ours[k] : "<absent>";
    if (a != b) diffs.push_back("config." + k + ": checkpoint " + a + " vs model " + b);
  }
  const auto& fp = checkpoint.metadata.at("fingerprints");
  const auto& v = model.vocab();
  const std::pair<const char*, const Vocabulary*> vocabs[] = {
      {"words", &v.words}, {"chars", &v.chars}, {"tags", &v.tags}, {"intents", &v.intents}};
  for (const auto& [name, vocab] : vocabs) {
    const auto stored = fp.at(name).get<std::string>();
    if (stored != vocab->fingerprint()) {
      diffs.push_back(std::string("vocabulary ") + name + ": checkpoint fingerprint " + stored + " vs model " +
                      vocab->fingerprint());
    }
  }
  if (!diffs.empty()) {
    std::string msg = "checkpoint incompatible with model:";
    for (const auto& d : diffs) msg += "\n  " + d;
    throw CheckpointError(msg);
  }
}

std::unique_ptr<SluModel<float>> model_from_checkpoint(const Checkpoint& checkpoint) {
  try {
    auto model = std::make_unique<SluModel<float>>(
        checkpoint_config(checkpoint), checkpoint_vocabularies(checkpoint), checkpoint_gazetteer(checkpoint),
        checkpoint.metadata.at("seed").get<std::uint64_t>(), checkpoint_heads(checkpoint));
    model->dataset_id = checkpoint.metadata.value("dataset_id", "");
    load_parameters(*model, checkpoint);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata: ") + e.what());
  }
}

}  // namespace slu
