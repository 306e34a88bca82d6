#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace slu {

struct GazetteerType {
  std::string name;
  std::vector<std::vector<std::string>> phrases;  // each phrase is a token sequence

  bool operator==(const GazetteerType&) const = default;
};

/// Ordered gazetteer types; the type at position p has index i = p + 1.
struct GazetteerSet {
  std::vector<GazetteerType> types;

  int size() const { return static_cast<int>(types.size()); }
  bool operator==(const GazetteerSet&) const = default;
};

/// Sections headed "[<type-name>]" with one whitespace-tokenised phrase per
/// line. Blank lines and lines starting with '#' are ignored.
GazetteerSet parse_gazetteer(std::istream& in, const std::string& source_name);
GazetteerSet parse_gazetteer(const std::filesystem::path& path);
void write_gazetteer(std::ostream& out, const GazetteerSet& set);

/// Token trie over every phrase of a GazetteerSet.
///
/// featurize() scans left to right: at the leftmost unconsumed position it
/// takes the longest phrase starting there (lowest type index on equal
/// length), labels its first token 2i-1 and the rest 2i, and resumes after it.
/// Tokens outside any match get 0. Matching is case-insensitive.
class GazetteerMatcher {
 public:
  GazetteerMatcher();

  static GazetteerMatcher compile(const GazetteerSet& set);

  std::vector<int> featurize(const std::vector<std::string>& tokens) const;

  int type_count() const { return type_count_; }
  // Number of distinct feature values, 2n + 1.
  int feature_count() const { return 2 * type_count_ + 1; }

 private:
  struct Node {
    std::unordered_map<std::string, int> children;
    int type = 0;  // lowest type index of a phrase ending here, 0 if none
  };

  std::vector<Node> nodes_;
  int type_count_ = 0;
};

}  // namespace slu
