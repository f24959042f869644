/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sdse/graph.hpp"
#include "sdse/layer_models.hpp"

namespace sdse {

class CodecError : public Error {
public:
  using Error::Error;
};

enum class CodecScheme { None, RLE, Huffman };

std::string_view to_string(CodecScheme scheme);
CodecScheme parse_scheme(std::string_view name);

/// Sequence of L-bit words; every word is < 2^L.
struct WordStream {
  std::vector<uint32_t> words;
  int word_length = 8;

  /// Throws CodecError when a word does not fit in word_length bits.
  void validate() const;
  uint64_t raw_bits() const { return static_cast<uint64_t>(words.size()) * word_length; }
};

/// MSB-first packed bits with an exact bit count.
struct BitStream {
  std::vector<uint8_t> bytes;
  uint64_t bits = 0;

  void put(uint64_t value, int width);
};

class BitReader {
public:
  explicit BitReader(const BitStream &s) : s_(s) {}
  bool done() const { return pos_ >= s_.bits; }
  uint64_t remaining() const { return s_.bits - pos_; }
  uint64_t get(int width);
  int bit();

private:
  const BitStream &s_;
  uint64_t pos_ = 0;
};

/// Token = L-bit literal followed by an 8-bit run length in [1, 255].
inline constexpr int kRleRunBits = 8;
inline constexpr uint32_t kRleMaxRun = 255;

BitStream rle_encode(const WordStream &s);
WordStream rle_decode(const BitStream &bits, int word_length);
/// Encoded size without materialising the bitstream.
uint64_t rle_encoded_bits(std::span<const uint32_t> words, int word_length);

using Histogram = std::map<uint32_t, uint64_t>;
Histogram histogram(std::span<const uint32_t> words);

/// Canonical Huffman code. Symbols are ordered by (length, symbol).
struct CodecTable {
  CodecScheme scheme = CodecScheme::Huffman;
  int word_length = 8;
  std::map<uint32_t, int> lengths;

  uint64_t code(uint32_t symbol) const;
  /// Total bits for the stream; throws for symbols missing from the table.
  uint64_t encoded_bits(std::span<const uint32_t> words) const;
};

CodecTable huffman_build(const Histogram &hist, int word_length);
BitStream huffman_encode(const WordStream &s, const CodecTable &table);
WordStream huffman_decode(const BitStream &bits, const CodecTable &table);

/// Encoded/raw bit ratio of one stream. Huffman uses `table` when given, else a
/// table built from the stream itself.
double compression_ratio(const WordStream &s, CodecScheme scheme, const CodecTable *table = nullptr);

struct RatioEstimate {
  double c_bar = 1.0;
  double min = 1.0;
  double max = 1.0;
  std::vector<double> per_sample;
};

/// Mean of per-sample ratios. Huffman samples share one table built from the
/// pooled histogram, as a calibration-time table would be.
RatioEstimate estimate_ratio(const std::vector<WordStream> &samples, CodecScheme scheme);

struct Calibration {
  double activation_ratio = 1.0; ///< c_bar over the activation samples
  double weight_ratio = 1.0;     ///< exact ratio of the weight stream
};

/// Ratios measured on synthetic calibration data; CodecScheme::None gives 1.0.
Calibration calibrate(CodecScheme scheme, int word_length, uint64_t seed, int samples = 8,
                      std::size_t sample_words = 4096, double zero_fraction = 0.5);

/// Fixed per-stream encoder/decoder cost, linear in the number of streams.
ResourceVector codec_overhead(CodecScheme scheme, int64_t streams, const CostTable &costs = CostTable::defaults());

/// Raw tensor container: "SDRT", uint32 word length, uint64 count (little endian),
/// then the words packed little endian at word_length/8 bytes each.
std::vector<uint8_t> serialize_raw_tensor(const WordStream &s);
WordStream deserialize_raw_tensor(std::span<const uint8_t> bytes);
void write_raw_tensor(const std::string &path, const WordStream &s);
WordStream read_raw_tensor(const std::string &path);

/// ReLU-like activation map: `zero_fraction` zeros, the rest geometric magnitudes.
WordStream synthetic_activations(std::size_t count, int word_length, double zero_fraction, uint64_t seed);
/// Quantised weights with a peaked (two-sided geometric) distribution around zero.
WordStream synthetic_weights(std::size_t count, int word_length, uint64_t seed);

} // namespace sdse
