#pragma once

#include <string>
#include <string_view>

namespace dsq::html {

struct ExtractedPage {
  std::string title;
  std::string text;
};

/// Visible text of an HTML document. Script, style, and other non-content
/// elements are dropped, entities are decoded, block elements become line
/// breaks, and runs of whitespace collapse to one space.
ExtractedPage extract(std::string_view document);

std::string decode_entities(std::string_view s);

}  // namespace dsq::html
