#include "dsq/html.hpp"

#include <array>
#include <cctype>
#include <cstdint>
#include <cstdlib>

#include "dsq/text.hpp"

namespace dsq::html {

namespace {

constexpr std::array kSkippedElements = {"script", "style",  "noscript", "template",
                                         "svg",    "iframe", "head",     "nav"};

constexpr std::array kBlockElements = {
    "p",  "div", "br", "li", "ul",      "ol",    "tr",     "td",      "th",    "table",
    "h1", "h2",  "h3", "h4", "h5",      "h6",    "section", "article", "header", "footer",
    "blockquote", "pre", "hr", "dd", "dt", "main", "aside", "figcaption", "title"};

template <std::size_t N>
bool contains(const std::array<const char*, N>& names, std::string_view name) {
  for (auto* n : names) {
    if (name == n) return true;
  }
  return false;
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x110000) {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

struct Tag {
  std::string name;
  bool closing = false;
  bool self_closing = false;
};

// Parses the tag starting at s[pos] == '<'; returns the index after '>'.
std::size_t read_tag(std::string_view s, std::size_t pos, Tag& tag) {
  std::size_t i = pos + 1;
  if (i < s.size() && s[i] == '/') {
    tag.closing = true;
    ++i;
  }
  std::size_t start = i;
  while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '-')) ++i;
  tag.name = text::to_lower(s.substr(start, i - start));
  char quote = 0;
  while (i < s.size()) {
    char c = s[i];
    if (quote) {
      if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '>') {
      tag.self_closing = i > pos && s[i - 1] == '/';
      return i + 1;
    }
    ++i;
  }
  return s.size();
}

std::string normalize_lines(std::string_view raw) {
  std::string out;
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    auto nl = raw.find('\n', pos);
    auto line = text::collapse_whitespace(
        raw.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    if (!line.empty()) {
      if (!out.empty()) out.push_back('\n');
      out.append(line);
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

}  // namespace

std::string decode_entities(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out.push_back(s[i]);
      continue;
    }
    auto semi = s.find(';', i);
    if (semi == std::string_view::npos || semi - i > 10) {
      out.push_back('&');
      continue;
    }
    auto entity = s.substr(i + 1, semi - i - 1);
    bool decoded = true;
    if (entity == "amp") out.push_back('&');
    else if (entity == "lt") out.push_back('<');
    else if (entity == "gt") out.push_back('>');
    else if (entity == "quot") out.push_back('"');
    else if (entity == "apos") out.push_back('\'');
    else if (entity == "nbsp") out.push_back(' ');
    else if (entity == "mdash") append_utf8(out, 0x2014);
    else if (entity == "ndash") append_utf8(out, 0x2013);
    else if (entity == "hellip") append_utf8(out, 0x2026);
    else if (entity == "rsquo") append_utf8(out, 0x2019);
    else if (entity == "lsquo") append_utf8(out, 0x2018);
    else if (entity == "ldquo") append_utf8(out, 0x201C);
    else if (entity == "rdquo") append_utf8(out, 0x201D);
    else if (!entity.empty() && entity[0] == '#') {
      const bool hex = entity.size() > 1 && (entity[1] == 'x' || entity[1] == 'X');
      std::string digits(entity.substr(hex ? 2 : 1));
      char* end = nullptr;
      auto cp = std::strtoul(digits.c_str(), &end, hex ? 16 : 10);
      if (!digits.empty() && end && *end == '\0') {
        append_utf8(out, static_cast<std::uint32_t>(cp));
      } else {
        decoded = false;
      }
    } else {
      decoded = false;
    }
    if (decoded) {
      i = semi;
    } else {
      out.push_back('&');
    }
  }
  return out;
}

ExtractedPage extract(std::string_view doc) {
  ExtractedPage page;
  std::string raw;
  std::string title;
  std::string skipping;  // element whose content is being dropped
  bool in_title = false;

  std::size_t i = 0;
  while (i < doc.size()) {
    if (doc.compare(i, 4, "<!--") == 0) {
      auto end = doc.find("-->", i + 4);
      i = end == std::string_view::npos ? doc.size() : end + 3;
      continue;
    }
    if (doc[i] == '<' && i + 1 < doc.size() &&
        (std::isalpha(static_cast<unsigned char>(doc[i + 1])) || doc[i + 1] == '/' ||
         doc[i + 1] == '!' || doc[i + 1] == '?')) {
      Tag tag;
      auto next = read_tag(doc, i, tag);
      if (!skipping.empty()) {
        if (tag.closing && tag.name == skipping) skipping.clear();
        // <title> lives inside <head>; keep collecting it.
        if (tag.name == "title") in_title = !tag.closing;
        i = next;
        continue;
      }
      if (tag.name == "title") {
        in_title = !tag.closing;
      } else if (!tag.closing && !tag.self_closing && contains(kSkippedElements, tag.name)) {
        skipping = tag.name;
      } else if (contains(kBlockElements, tag.name)) {
        raw.push_back('\n');
      } else {
        raw.push_back(' ');
      }
      i = next;
      continue;
    }
    auto next_tag = doc.find('<', i + 1);
    auto chunk = doc.substr(i, next_tag == std::string_view::npos ? std::string_view::npos
                                                                  : next_tag - i);
    if (in_title) {
      title.append(chunk);
    } else if (skipping.empty()) {
      raw.append(chunk);
    }
    i = next_tag == std::string_view::npos ? doc.size() : next_tag;
  }
  page.title = text::collapse_whitespace(decode_entities(title));
  page.text = normalize_lines(decode_entities(raw));
  return page;
}

}  // namespace dsq::html
