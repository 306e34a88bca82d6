#include "slu/gazetteer.hpp"

#include "slu/corpus.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace slu {

GazetteerSet parse_gazetteer(std::istream& in, const std::string& source_name) {
  GazetteerSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    for (std::string tok; fields >> tok;) tokens.push_back(tok);
    if (tokens.empty() || tokens.front().front() == '#') continue;
    if (tokens.size() == 1 && tokens[0].size() > 2 && tokens[0].front() == '[' && tokens[0].back() == ']') {
      set.types.push_back({tokens[0].substr(1, tokens[0].size() - 2), {}});
      continue;
    }
    if (set.types.empty()) throw FormatError(source_name, line_no, "phrase before the first [type] header");
    set.types.back().phrases.push_back(std::move(tokens));
  }
  return set;
}

GazetteerSet parse_gazetteer(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), 0, "cannot open gazetteer file");
  return parse_gazetteer(in, path.string());
}

void write_gazetteer(std::ostream& out, const GazetteerSet& set) {
  for (const auto& type : set.types) {
    out << '[' << type.name << "]\n";
    for (const auto& phrase : type.phrases) {
      for (std::size_t i = 0; i < phrase.size(); ++i) out << (i ? " " : "") << phrase[i];
      out << '\n';
    }
  }
}

GazetteerMatcher::GazetteerMatcher() : nodes_(1) {}

GazetteerMatcher GazetteerMatcher::compile(const GazetteerSet& set) {
  GazetteerMatcher m;
  m.type_count_ = set.size();
  for (int i = 0; i < set.size(); ++i) {
    const int type = i + 1;
    for (const auto& phrase : set.types[static_cast<std::size_t>(i)].phrases) {
      if (phrase.empty()) {
        throw std::invalid_argument("gazetteer type '" + set.types[static_cast<std::size_t>(i)].name +
                                    "' contains an empty phrase");
      }
      int node = 0;
      for (const auto& tok : phrase) {
        if (tok.empty()) throw std::invalid_argument("gazetteer phrase contains an empty token");
        const std::string key = lowercase(tok);
        auto it = m.nodes_[static_cast<std::size_t>(node)].children.find(key);
        if (it == m.nodes_[static_cast<std::size_t>(node)].children.end()) {
          const int child = static_cast<int>(m.nodes_.size());
          m.nodes_[static_cast<std::size_t>(node)].children.emplace(key, child);
          m.nodes_.emplace_back();
          node = child;
        } else {
          node = it->second;
        }
      }
      auto& end = m.nodes_[static_cast<std::size_t>(node)];
      if (end.type == 0 || type < end.type) end.type = type;
    }
  }
  return m;
}

std::vector<int> GazetteerMatcher::featurize(const std::vector<std::string>& tokens) const {
  const std::size_t n = tokens.size();
  std::vector<int> features(n, 0);
  if (type_count_ == 0) return features;
  std::vector<std::string> keys;
  keys.reserve(n);
  for (const auto& t : tokens) keys.push_back(lowercase(t));

  std::size_t pos = 0;
  while (pos < n) {
    std::size_t best_len = 0;
    int best_type = 0;
    int node = 0;
    for (std::size_t j = pos; j < n; ++j) {
      const auto& children = nodes_[static_cast<std::size_t>(node)].children;
      auto it = children.find(keys[j]);
      if (it == children.end()) break;
      node = it->second;
      if (nodes_[static_cast<std::size_t>(node)].type != 0) {
        best_len = j - pos + 1;
        best_type = nodes_[static_cast<std::size_t>(node)].type;
      }
    }
    if (best_len == 0) {
      ++pos;
      continue;
    }
    features[pos] = 2 * best_type - 1;
    for (std::size_t j = pos + 1; j < pos + best_len; ++j) features[j] = 2 * best_type;
    pos += best_len;
  }
  return features;
}

}  // namespace slu
