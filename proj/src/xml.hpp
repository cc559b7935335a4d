#pragma once

// Minimal XML reader for record descriptors. Handles elements, attributes
// (quoted or bare), comments, declarations and character data; no DTDs,
// namespaces or entity expansion beyond the five predefined entities.

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mdds::xml {

struct Element {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::vector<std::unique_ptr<Element>> children;

  std::optional<std::string_view> attribute(std::string_view key) const;
  const Element* child(std::string_view element_name) const;
};

/// Returns the document element; throws Error(parse_error) on malformed input.
std::unique_ptr<Element> parse(std::string_view text);

}  // namespace mdds::xml
