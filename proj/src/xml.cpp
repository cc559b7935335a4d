#include "xml.hpp"

#include <cctype>

#include "mdds/error.hpp"

namespace mdds::xml {

std::optional<std::string_view> Element::attribute(std::string_view key) const {
  for (const auto& [k, v] : attributes) {
    if (k == key) return std::string_view(v);
  }
  return std::nullopt;
}

const Element* Element::child(std::string_view element_name) const {
  for (const auto& c : children) {
    if (c->name == element_name) return c.get();
  }
  return nullptr;
}

namespace {

class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  std::unique_ptr<Element> document() {
    skip_misc();
    if (eof() || peek() != '<') fail("expected a root element");
    auto root = element();
    skip_misc();
    if (!eof()) fail("content after the root element");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::parse_error,
                "descriptor XML: " + what + " at offset " + std::to_string(pos_));
  }

  bool eof() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }
  bool starts_with(std::string_view s) const { return text_.substr(pos_).starts_with(s); }

  void skip_ws() {
    while (!eof() && std::isspace(static_cast<unsigned char>(peek()))) ++pos_;
  }

  void skip_until(std::string_view terminator) {
    auto at = text_.find(terminator, pos_);
    if (at == std::string_view::npos) fail("unterminated '" + std::string(terminator) + "'");
    pos_ = at + terminator.size();
  }

  // Whitespace, comments, processing instructions and doctype-like markup.
  void skip_misc() {
    for (;;) {
      skip_ws();
      if (starts_with("<!--")) {
        skip_until("-->");
      } else if (starts_with("<?")) {
        skip_until("?>");
      } else if (starts_with("<!")) {
        skip_until(">");
      } else {
        return;
      }
    }
  }

  static bool name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' ||
           c == ':';
  }

  std::string name() {
    auto start = pos_;
    while (!eof() && name_char(peek())) ++pos_;
    if (pos_ == start) fail("expected a name");
    return std::string(text_.substr(start, pos_ - start));
  }

  static std::string unescape(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] != '&') {
        out += raw[i];
        continue;
      }
      static constexpr std::pair<std::string_view, char> entities[] = {
          {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&apos;", '\''}};
      bool matched = false;
      for (auto [entity, ch] : entities) {
        if (raw.substr(i).starts_with(entity)) {
          out += ch;
          i += entity.size() - 1;
          matched = true;
          break;
        }
      }
      if (!matched) out += '&';
    }
    return out;
  }

  std::string attribute_value() {
    if (eof()) fail("expected an attribute value");
    char q = peek();
    if (q == '"' || q == '\'') {
      ++pos_;
      auto end = text_.find(q, pos_);
      if (end == std::string_view::npos) fail("unterminated attribute value");
      auto raw = text_.substr(pos_, end - pos_);
      pos_ = end + 1;
      return unescape(raw);
    }
    // Bare value: runs to whitespace or the end of the tag.
    auto start = pos_;
    while (!eof() && !std::isspace(static_cast<unsigned char>(peek())) && peek() != '>' &&
           !(peek() == '/' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '>')) {
      if (peek() == '<' || peek() == '"' || peek() == '\'') fail("bad character in bare value");
      ++pos_;
    }
    if (pos_ == start) fail("empty attribute value");
    return unescape(text_.substr(start, pos_ - start));
  }

  std::unique_ptr<Element> element() {
    ++pos_;  // '<'
    auto el = std::make_unique<Element>();
    el->name = name();
    for (;;) {
      skip_ws();
      if (eof()) fail("unterminated tag <" + el->name + ">");
      if (starts_with("/>")) {
        pos_ += 2;
        return el;
      }
      if (peek() == '>') {
        ++pos_;
        break;
      }
      auto key = name();
      skip_ws();
      if (eof() || peek() != '=') fail("expected '=' after attribute " + key);
      ++pos_;
      skip_ws();
      auto value = attribute_value();
      if (el->attribute(key)) fail("duplicate attribute " + key);
      el->attributes.emplace_back(std::move(key), std::move(value));
    }
    // Content until the matching close tag; character data is ignored.
    for (;;) {
      auto lt = text_.find('<', pos_);
      if (lt == std::string_view::npos) fail("missing </" + el->name + ">");
      pos_ = lt;
      if (starts_with("<!--")) {
        skip_until("-->");
      } else if (starts_with("<![CDATA[")) {
        skip_until("]]>");
      } else if (starts_with("<?")) {
        skip_until("?>");
      } else if (starts_with("</")) {
        pos_ += 2;
        auto closing = name();
        if (closing != el->name) fail("</" + closing + "> closes <" + el->name + ">");
        skip_ws();
        if (eof() || peek() != '>') fail("expected '>'");
        ++pos_;
        return el;
      } else {
        el->children.push_back(element());
      }
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

std::unique_ptr<Element> parse(std::string_view text) { return Reader(text).document(); }

}  // namespace mdds::xml
