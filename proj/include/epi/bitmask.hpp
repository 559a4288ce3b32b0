#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace epi {

// Packed bit vector over parameter indices; bit j lives in word j/64 at
// bit position j%64.
class PackedBits {
 public:
  PackedBits() = default;
  explicit PackedBits(std::size_t size);

  std::size_t size() const { return size_; }
  const std::vector<std::uint64_t>& words() const { return words_; }
  std::vector<std::uint64_t>& words() { return words_; }

  bool test(std::size_t i) const {
    return (words_[i >> 6] >> (i & 63)) & 1u;
  }
  void set(std::size_t i) { words_[i >> 6] |= 1ull << (i & 63); }
  void reset(std::size_t i) { words_[i >> 6] &= ~(1ull << (i & 63)); }
  void clear();

  std::size_t popcount() const;

  friend bool operator==(const PackedBits& a, const PackedBits& b) = default;

  // Set-operation cardinalities; both sides must share the same size.
  static std::size_t xor_count(const PackedBits& a, const PackedBits& b);
  static std::size_t and_count(const PackedBits& a, const PackedBits& b);
  static std::size_t or_count(const PackedBits& a, const PackedBits& b);

 private:
  std::size_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

enum class MaskStrategy : std::uint8_t {
  kEpi = 0,
  kStatic = 1,
  kPerLayerBudget = 2,
  kGlobalRaw = 3,
  kRandom = 4,
};

const char* to_string(MaskStrategy s);
MaskStrategy mask_strategy_from_string(const std::string& s);

// Binary isolation mask plus the refresh metadata that goes into snapshots.
struct IsolationMask {
  PackedBits bits;
  std::uint64_t generated_at_step = 0;
  double ratio = 0.0;  // target isolation ratio p
  MaskStrategy strategy = MaskStrategy::kEpi;
};

// Snapshot wire format: magic "EPIM", u32 version, u64 d, u64 step,
// u32 round(p*1e6), u8 strategy, then ceil(d/64) little-endian u64 words.
void write_mask_snapshot(std::ostream& out, const IsolationMask& mask);
IsolationMask read_mask_snapshot(std::istream& in);  // throws on corruption

void save_mask_snapshot(const std::string& path, const IsolationMask& mask);
IsolationMask load_mask_snapshot(const std::string& path);

}  // namespace epi
