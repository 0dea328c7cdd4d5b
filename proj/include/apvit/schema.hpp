#pragma once

#include "apvit/common.hpp"

#include <set>
#include <string>
#include <vector>

namespace apvit {

// One attribute is either an ordinal rating scale [lo, hi] (integer steps,
// real-valued labels allowed, e.g. averaged annotator ratings) or a nominal
// class set.
struct AttributeScale {
  bool ordinal = true;
  int lo = 1;
  int hi = 5;
  std::vector<std::string> classes;  // nominal only

  // Number of discrete values, i.e. prototype classes of this attribute.
  int value_count() const {
    return ordinal ? hi - lo + 1 : static_cast<int>(classes.size());
  }

  // Width of the score head: 1 scalar for ordinal, |classes| logits else.
  int score_dim() const { return ordinal ? 1 : value_count(); }

  bool label_valid(double y) const {
    if (ordinal) return y >= lo && y <= hi;
    long k = iround(y);
    return k == y && k >= 0 && k < static_cast<long>(classes.size());
  }

  // Discrete value index in [0, value_count): ordinal labels round to the
  // nearest step, nominal labels are the class id.
  int value_index(double y) const {
    if (!ordinal) return static_cast<int>(iround(y));
    long k = iround(clamp(y, lo, hi));
    return static_cast<int>(k - lo);
  }

  // Inverse of value_index: the label represented by value index v.
  double value_label(int v) const { return ordinal ? lo + v : v; }
};

struct Attribute {
  std::string name;
  AttributeScale scale;
};

struct AttributeSchema {
  std::vector<Attribute> attributes;

  int count() const { return static_cast<int>(attributes.size()); }
  const Attribute& at(int a) const { return attributes.at(a); }

  int index_of(const std::string& name) const {
    for (int a = 0; a < count(); ++a)
      if (attributes[a].name == name) return a;
    throw ConfigError("unknown attribute: " + name);
  }

  void validate() const {
    if (attributes.empty()) throw ConfigError("schema needs at least one attribute");
    std::set<std::string> names;
    for (const auto& attr : attributes) {
      if (attr.name.empty()) throw ConfigError("attribute with empty name");
      if (!names.insert(attr.name).second)
        throw ConfigError("duplicate attribute name: " + attr.name);
      const auto& s = attr.scale;
      if (s.ordinal && s.lo >= s.hi)
        throw ConfigError("attribute " + attr.name + ": ordinal range needs lo < hi");
      if (!s.ordinal && s.classes.size() < 2)
        throw ConfigError("attribute " + attr.name + ": nominal scale needs >= 2 classes");
    }
  }
};

// Target labels reuse the same scale machinery (ordinal range or class set).
using TargetScale = AttributeScale;

}  // namespace apvit
