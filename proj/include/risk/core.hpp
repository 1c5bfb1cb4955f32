#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace risk {

inline constexpr std::string_view tool_version = "1.0.0";

// Substance user groups: alcohol-only, both, cannabis-only.
enum class Group : int { a = 0, b = 1, c = 2 };

// The two disorders modelled jointly.
enum class Outcome : int { aud = 0, cud = 1 };

inline constexpr std::array<Group, 3> all_groups{Group::a, Group::b, Group::c};
inline constexpr std::array<Outcome, 2> all_outcomes{Outcome::aud, Outcome::cud};

inline constexpr int index_of(Group g) { return static_cast<int>(g); }
inline constexpr int index_of(Outcome k) { return static_cast<int>(k); }

std::string_view to_string(Group g);
std::string_view to_string(Outcome k);
std::optional<Group> parse_group(std::string_view s);
std::optional<Outcome> parse_outcome(std::string_view s);

// "A-AUD", "B-CUD", ...
std::string submodel_key(Group g, Outcome k);

// False for the structural-zero pairs (A, CUD) and (C, AUD).
inline constexpr bool at_risk(Group g, Outcome k) {
  return !((g == Group::a && k == Outcome::cud) || (g == Group::c && k == Outcome::aud));
}

// Bad user input: data rows, schemas, configs, flags.
class input_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class sampler_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace risk
