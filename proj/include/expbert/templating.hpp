#pragma once

#include <string>
#include <string_view>

#include "expbert/core_data.hpp"

namespace expbert {

inline constexpr std::string_view kPlaceholder1 = "{o1}";
inline constexpr std::string_view kPlaceholder2 = "{o2}";

// An explanation or relation description bound to one instance.
struct InstantiatedText {
  std::string text;
  std::string source_id;
  std::string instance_id;

  bool operator==(const InstantiatedText&) const = default;
};

// Tokens of the span joined with single spaces.
std::string span_text(const Instance& instance, const TokenSpan& span);

// The sentence as the interpreter's premise: all tokens joined with single spaces.
std::string premise_text(const Instance& instance);

// Single left-to-right pass, so entity strings that themselves look like
// placeholders are never substituted again.
std::string substitute(std::string_view template_text, std::string_view o1, std::string_view o2);

bool has_placeholder(std::string_view text);

InstantiatedText instantiate(const Instance& instance, std::string_view source_id,
                             std::string_view template_text);

inline InstantiatedText instantiate(const Instance& instance, const Explanation& explanation) {
  return instantiate(instance, explanation.id, explanation.template_text);
}

}  // namespace expbert
