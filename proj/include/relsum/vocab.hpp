#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "relsum/common.hpp"

namespace relsum {

// Shared token vocabulary: a handful of special markers, a closed set of
// attribute tokens and a closed set of filler tokens, ids contiguous.
class Vocab {
 public:
  static constexpr int kCls = 0;
  static constexpr int kSep = 1;
  static constexpr int kDescMark = 2;   // "[DESCRIPTION]:"
  static constexpr int kTitleMark = 3;  // "[TITLE]:"
  static constexpr int kAttrsMark = 4;  // the prompt's trailing instruction
  static constexpr int kEos = 5;        // end-of-summary
  static constexpr int kNumSpecial = 6;

  Vocab(int n_attributes, int n_fillers) : n_attributes_(n_attributes), n_fillers_(n_fillers) {
    if (n_attributes < 1 || n_fillers < 1) fail(Errc::bad_argument, "vocab needs attributes and fillers");
    names_ = {"[CLS]", "[SEP]", "[DESCRIPTION]:", "[TITLE]:", "[ATTRS]", "[EOS]"};
    names_.reserve(kNumSpecial + n_attributes + n_fillers);
    for (int i = 0; i < n_attributes; ++i) names_.push_back("attr_" + std::to_string(i));
    for (int i = 0; i < n_fillers; ++i) names_.push_back("fill_" + std::to_string(i));
    for (size_t i = 0; i < names_.size(); ++i) ids_[names_[i]] = static_cast<int>(i);
  }

  int size() const { return static_cast<int>(names_.size()); }
  int n_attributes() const { return n_attributes_; }
  int n_fillers() const { return n_fillers_; }

  int attr_id(int i) const { return kNumSpecial + i; }
  int filler_id(int i) const { return kNumSpecial + n_attributes_ + i; }

  bool is_attribute(int id) const { return id >= kNumSpecial && id < kNumSpecial + n_attributes_; }
  bool is_filler(int id) const { return id >= kNumSpecial + n_attributes_ && id < size(); }
  bool is_special(int id) const { return id >= 0 && id < kNumSpecial; }

  const std::string& name(int id) const {
    if (id < 0 || id >= size()) fail(Errc::bad_argument, "token id out of range: " + std::to_string(id));
    return names_[static_cast<size_t>(id)];
  }

  int id(const std::string& name) const {
    auto it = ids_.find(name);
    if (it == ids_.end()) fail(Errc::parse_error, "unknown token: " + name);
    return it->second;
  }

  std::vector<std::string> names(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int t : ids) out.push_back(name(t));
    return out;
  }

  std::vector<int> ids(const std::vector<std::string>& names) const {
    std::vector<int> out;
    out.reserve(names.size());
    for (const auto& n : names) out.push_back(id(n));
    return out;
  }

  std::string render(const std::vector<int>& ids) const {
    std::string s;
    for (size_t i = 0; i < ids.size(); ++i) {
      if (i) s += ' ';
      s += name(ids[i]);
    }
    return s;
  }

 private:
  int n_attributes_;
  int n_fillers_;
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace relsum
