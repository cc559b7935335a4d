#pragma once

#include <boost/functional/hash.hpp>
#include <boost/uuid/uuid.hpp>

#include <optional>
#include <string>
#include <string_view>

namespace mdds {

using Uuid = boost::uuids::uuid;

/// Version-4 random uuid; safe to call from any thread.
Uuid random_uuid();

/// Canonical 8-4-4-4-12 lowercase form.
std::string to_string(const Uuid& id);

std::optional<Uuid> parse_uuid(std::string_view text);

/// Deterministic name-based (SHA-1, v5) uuid; used when a descriptor's
/// typeid attribute is not itself a uuid.
Uuid name_uuid(std::string_view name);

struct UuidHash {
  std::size_t operator()(const Uuid& id) const noexcept {
    return boost::hash<Uuid>()(id);
  }
};

}  // namespace mdds
