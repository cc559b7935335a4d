#include "mdds/uuid.hpp"

#include <boost/uuid/name_generator_sha1.hpp>
#include <boost/uuid/random_generator.hpp>
#include <boost/uuid/string_generator.hpp>
#include <boost/uuid/uuid_io.hpp>

#include <cctype>

namespace mdds {

Uuid random_uuid() {
  thread_local boost::uuids::random_generator generator;
  return generator();
}

std::string to_string(const Uuid& id) { return boost::uuids::to_string(id); }

std::optional<Uuid> parse_uuid(std::string_view text) {
  // string_generator accepts braces and missing dashes; only the canonical
  // 36-character form is treated as a uuid here.
  if (text.size() != 36) return std::nullopt;
  for (std::size_t i = 0; i < text.size(); ++i) {
    bool dash = i == 8 || i == 13 || i == 18 || i == 23;
    if (dash ? text[i] != '-' : !std::isxdigit(static_cast<unsigned char>(text[i]))) {
      return std::nullopt;
    }
  }
  return boost::uuids::string_generator()(text.begin(), text.end());
}

Uuid name_uuid(std::string_view name) {
  boost::uuids::name_generator_sha1 generator(boost::uuids::ns::oid());
  return generator(name.data(), name.size());
}

}  // namespace mdds
