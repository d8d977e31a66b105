#pragma once

// Small builders shared by the test binaries. Users are written 1-based in
// digit strings ("23" is users 2 and 3); "" or "-" is the empty set.

#include <string>
#include <string_view>
#include <vector>

#include "becsim/coding.hpp"
#include "becsim/core.hpp"

namespace fixtures {

using becsim::coding::ControlSpec;
using becsim::core::QueueIndex;
using becsim::core::UserSet;

inline UserSet users(std::string_view digits) {
  UserSet s;
  for (char c : digits) {
    if (c == '-') continue;
    s.insert(c - '1');
  }
  return s;
}

// Q^L_D from "L|D".
inline QueueIndex q(std::string_view text) {
  const auto bar = text.find('|');
  return {users(text.substr(0, bar)), users(text.substr(bar + 1))};
}

inline ControlSpec control(std::initializer_list<std::string_view> pairs) {
  std::vector<QueueIndex> out;
  for (auto p : pairs) out.push_back(q(p));
  return ControlSpec(out);
}

// "RER" -> users whose character is R, first character is user 1.
inline UserSet feedback(std::string_view pattern) {
  UserSet s;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == 'R') s.insert(static_cast<int>(i));
  }
  return s;
}

}  // namespace fixtures
