#include "expbert/templating.hpp"

namespace expbert {

std::string span_text(const Instance& instance, const TokenSpan& span) {
  std::string out;
  for (std::size_t i = span.first; i <= span.last && i < instance.tokens.size(); ++i) {
    if (i != span.first) out.push_back(' ');
    out += instance.tokens[i];
  }
  return out;
}

std::string premise_text(const Instance& instance) {
  std::string out;
  for (std::size_t i = 0; i < instance.tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += instance.tokens[i];
  }
  return out;
}

std::string substitute(std::string_view template_text, std::string_view o1, std::string_view o2) {
  std::string out;
  out.reserve(template_text.size() + o1.size() + o2.size());
  std::size_t i = 0;
  while (i < template_text.size()) {
    const auto rest = template_text.substr(i);
    if (rest.starts_with(kPlaceholder1)) {
      out += o1;
      i += kPlaceholder1.size();
    } else if (rest.starts_with(kPlaceholder2)) {
      out += o2;
      i += kPlaceholder2.size();
    } else {
      out.push_back(template_text[i]);
      ++i;
    }
  }
  return out;
}

bool has_placeholder(std::string_view text) {
  return text.find(kPlaceholder1) != std::string_view::npos ||
         text.find(kPlaceholder2) != std::string_view::npos;
}

InstantiatedText instantiate(const Instance& instance, std::string_view source_id,
                             std::string_view template_text) {
  return {substitute(template_text, span_text(instance, instance.span1), span_text(instance, instance.span2)),
          std::string(source_id), instance.id};
}

}  // namespace expbert
