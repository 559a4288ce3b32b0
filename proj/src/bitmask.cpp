#include "epi/bitmask.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace epi {
namespace {

constexpr std::uint32_t kSnapshotVersion = 1;
constexpr char kMagic[4] = {'E', 'P', 'I', 'M'};

void require_same_size(const PackedBits& a, const PackedBits& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("bitset length mismatch");
  }
}

template <typename T>
void write_le(std::ostream& out, T value) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xff);
  }
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!in) throw std::runtime_error("corrupt snapshot: truncated");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(buf[i]) << (8 * i);
  }
  return value;
}

}  // namespace

PackedBits::PackedBits(std::size_t size)
    : size_(size), words_((size + 63) / 64, 0) {}

void PackedBits::clear() {
  std::fill(words_.begin(), words_.end(), 0);
}

std::size_t PackedBits::popcount() const {
  std::size_t n = 0;
  for (auto w : words_) n += std::popcount(w);
  return n;
}

std::size_t PackedBits::xor_count(const PackedBits& a, const PackedBits& b) {
  require_same_size(a, b);
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.words_.size(); ++i) {
    n += std::popcount(a.words_[i] ^ b.words_[i]);
  }
  return n;
}

std::size_t PackedBits::and_count(const PackedBits& a, const PackedBits& b) {
  require_same_size(a, b);
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.words_.size(); ++i) {
    n += std::popcount(a.words_[i] & b.words_[i]);
  }
  return n;
}

std::size_t PackedBits::or_count(const PackedBits& a, const PackedBits& b) {
  require_same_size(a, b);
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.words_.size(); ++i) {
    n += std::popcount(a.words_[i] | b.words_[i]);
  }
  return n;
}

const char* to_string(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::kEpi: return "epi";
    case MaskStrategy::kStatic: return "static";
    case MaskStrategy::kPerLayerBudget: return "per-layer-budget";
    case MaskStrategy::kGlobalRaw: return "global-raw";
    case MaskStrategy::kRandom: return "random";
  }
  return "unknown";
}

MaskStrategy mask_strategy_from_string(const std::string& s) {
  if (s == "epi") return MaskStrategy::kEpi;
  if (s == "static") return MaskStrategy::kStatic;
  if (s == "per-layer-budget") return MaskStrategy::kPerLayerBudget;
  if (s == "global-raw") return MaskStrategy::kGlobalRaw;
  if (s == "random") return MaskStrategy::kRandom;
  throw std::invalid_argument("unknown mask strategy: " + s);
}

void write_mask_snapshot(std::ostream& out, const IsolationMask& mask) {
  out.write(kMagic, 4);
  write_le<std::uint32_t>(out, kSnapshotVersion);
  write_le<std::uint64_t>(out, mask.bits.size());
  write_le<std::uint64_t>(out, mask.generated_at_step);
  write_le<std::uint32_t>(
      out, static_cast<std::uint32_t>(std::llround(mask.ratio * 1e6)));
  write_le<std::uint8_t>(out, static_cast<std::uint8_t>(mask.strategy));
  for (auto w : mask.bits.words()) write_le<std::uint64_t>(out, w);
}

IsolationMask read_mask_snapshot(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kMagic)) {
    throw std::runtime_error("corrupt snapshot: bad magic");
  }
  const auto version = read_le<std::uint32_t>(in);
  if (version != kSnapshotVersion) {
    throw std::runtime_error("corrupt snapshot: unsupported version");
  }
  const auto d = read_le<std::uint64_t>(in);
  IsolationMask mask;
  mask.bits = PackedBits(static_cast<std::size_t>(d));
  mask.generated_at_step = read_le<std::uint64_t>(in);
  mask.ratio = static_cast<double>(read_le<std::uint32_t>(in)) * 1e-6;
  const auto strategy = read_le<std::uint8_t>(in);
  if (strategy > static_cast<std::uint8_t>(MaskStrategy::kRandom)) {
    throw std::runtime_error("corrupt snapshot: bad strategy code");
  }
  mask.strategy = static_cast<MaskStrategy>(strategy);
  for (auto& w : mask.bits.words()) w = read_le<std::uint64_t>(in);
  // Any trailing payload means the file does not match the declared length.
  in.peek();
  if (!in.eof()) {
    throw std::runtime_error("corrupt snapshot: trailing bytes");
  }
  return mask;
}

void save_mask_snapshot(const std::string& path, const IsolationMask& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  write_mask_snapshot(out, mask);
  if (!out) throw std::runtime_error("write failed: " + path);
}

IsolationMask load_mask_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return read_mask_snapshot(in);
}

}  // namespace epi
