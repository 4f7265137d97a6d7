#include "nbm/bitcodec.hpp"

#include <stdexcept>

namespace nbm {

Bits to_bits(int x) {
  Bits bits{};
  if (x == kInf) {
    bits.fill(1);
    return bits;
  }
  if (x < 0 || x > kMaxFinite)
    throw std::invalid_argument("to_bits: value out of range (255 is reserved)");
  for (int i = 0; i < kNumBits; ++i) bits[i] = (x >> i) & 1;
  return bits;
}

int from_bits(const Bits& bits) {
  int x = 0;
  bool all_ones = true;
  for (int i = 0; i < kNumBits; ++i) {
    if (bits[i] != 0 && bits[i] != 1) throw std::invalid_argument("from_bits: non-binary entry");
    x |= bits[i] << i;
    all_ones = all_ones && bits[i] == 1;
  }
  return all_ones ? kInf : x;
}

}  // namespace nbm
