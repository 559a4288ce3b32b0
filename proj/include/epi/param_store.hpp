#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "epi/rng.hpp"

namespace epi {

// A named contiguous slice of the flat parameter vector. One group per
// parameter tensor (weight matrix or bias vector).
struct Group {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
};

// Flat parameter vector with an ordered layer partition. The partition is
// contiguous, non-overlapping, and covers exactly [0, d).
class ParamStore {
 public:
  ParamStore() = default;

  // Builds a store from (name, size) pairs; values start at zero.
  // Throws std::invalid_argument on an empty list or a zero-length group.
  static ParamStore build(
      const std::vector<std::pair<std::string, std::size_t>>& group_sizes);

  std::size_t dim() const { return values_.size(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  const std::vector<Group>& partition() const { return partition_; }

  // Index range of a named group; throws on unknown names.
  const Group& group_view(std::string_view name) const;

  // i.i.d. zero-mean normal draws with standard deviation `scale`.
  void gaussian_init(Rng& rng, double scale);

 private:
  std::vector<double> values_;
  std::vector<Group> partition_;
};

}  // namespace epi
