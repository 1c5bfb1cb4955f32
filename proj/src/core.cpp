#include "risk/core.hpp"

#include <algorithm>
#include <cctype>

namespace risk {

std::string_view to_string(Group g) {
  switch (g) {
    case Group::a: return "A";
    case Group::b: return "B";
    case Group::c: return "C";
  }
  return "?";
}

std::string_view to_string(Outcome k) {
  return k == Outcome::aud ? "AUD" : "CUD";
}

std::optional<Group> parse_group(std::string_view s) {
  if (s == "A" || s == "a") return Group::a;
  if (s == "B" || s == "b") return Group::b;
  if (s == "C" || s == "c") return Group::c;
  return std::nullopt;
}

std::optional<Outcome> parse_outcome(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "aud") return Outcome::aud;
  if (lower == "cud") return Outcome::cud;
  return std::nullopt;
}

std::string submodel_key(Group g, Outcome k) {
  std::string key(to_string(g));
  key += '-';
  key += to_string(k);
  return key;
}

}  // namespace risk
