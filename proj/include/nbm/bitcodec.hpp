#pragma once

#include <array>
#include <limits>

#include "nbm/mat.hpp"

namespace nbm {

// Sentinel for an unbounded value (distances of unreached nodes, self-loop
// capacities). Encodes as the all-ones bit vector; 255 itself is reserved for
// it and rejected as a finite input.
constexpr int kInf = std::numeric_limits<int>::max();
constexpr int kNumBits = 8;
constexpr int kMaxFinite = 254;

using Bits = std::array<int, kNumBits>;

// Binary encoding, least significant bit first. Accepts 0..254 or kInf.
Bits to_bits(int x);
// Inverse; all-ones decodes to kInf.
int from_bits(const Bits& bits);

// Per-bit-position embedding table; the embedded feature is the bit-weighted
// sum of the position vectors.
struct BitEmbeddingTable {
  Mat vectors;  // kNumBits x d_emb

  explicit BitEmbeddingTable(int d_emb) : vectors(kNumBits, d_emb) {}

  Mat embed(const Bits& bits) const {
    Mat out(1, vectors.cols);
    for (int i = 0; i < kNumBits; ++i)
      if (bits[i])
        for (int c = 0; c < vectors.cols; ++c) out.data[c] += vectors.at(i, c);
    return out;
  }
};

// Embedding dimension per scalar channel; node/edge features concatenate one
// embedded block per scalar.
constexpr int kEmbedDim = 16;

}  // namespace nbm
