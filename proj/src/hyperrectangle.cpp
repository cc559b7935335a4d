#include "mdds/hyperrectangle.hpp"

namespace mdds {

Hyperrectangle bounding_box(std::span<const std::byte* const> records,
                            std::span<const DimAccessor> dims) {
  Hyperrectangle box(dims.size());
  for (const std::byte* rec : records) box.expand_record(rec, dims);
  return box;
}

}  // namespace mdds
