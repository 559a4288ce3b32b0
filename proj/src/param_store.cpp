#include "epi/param_store.hpp"

#include <stdexcept>

namespace epi {

ParamStore ParamStore::build(
    const std::vector<std::pair<std::string, std::size_t>>& group_sizes) {
  if (group_sizes.empty()) {
    throw std::invalid_argument("partition needs at least one group");
  }
  ParamStore store;
  std::size_t offset = 0;
  for (const auto& [name, count] : group_sizes) {
    if (count == 0) {
      throw std::invalid_argument("zero-length group: " + name);
    }
    store.partition_.push_back(Group{name, offset, count});
    offset += count;
  }
  store.values_.assign(offset, 0.0);
  return store;
}

const Group& ParamStore::group_view(std::string_view name) const {
  for (const auto& g : partition_) {
    if (g.name == name) return g;
  }
  throw std::invalid_argument("unknown group: " + std::string(name));
}

void ParamStore::gaussian_init(Rng& rng, double scale) {
  if (!(scale > 0.0)) {
    throw std::invalid_argument("init scale must be positive");
  }
  for (auto& v : values_) v = rng.normal(0.0, scale);
}

}  // namespace epi
