/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace sdse;

namespace {

WordStream random_stream(std::size_t n, int L, double zeros, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<uint32_t> w(0, (1u << L) - 1);
  WordStream s;
  s.word_length = L;
  for (std::size_t i = 0; i < n; ++i)
    s.words.push_back(u(rng) < zeros ? 0 : w(rng));
  return s;
}

// Token count from the format: one token per maximal run, runs longer than 255 split.
uint64_t count_rle_bits(const std::vector<uint32_t> &w, int L) {
  uint64_t tokens = 0;
  for (std::size_t i = 0; i < w.size();) {
    std::size_t j = i;
    while (j < w.size() && w[j] == w[i])
      ++j;
    tokens += (j - i + 254) / 255;
    i = j;
  }
  return tokens * static_cast<uint64_t>(L + 8);
}

double entropy_bits(const Histogram &h) {
  double n = 0, e = 0;
  for (const auto &[s, c] : h)
    n += static_cast<double>(c);
  for (const auto &[s, c] : h)
    e -= static_cast<double>(c) / n * std::log2(static_cast<double>(c) / n);
  return e;
}

// Smallest total cost of any prefix code, by exhaustive merge enumeration.
uint64_t best_prefix_cost(std::vector<uint64_t> w) {
  if (w.size() <= 1)
    return w.empty() ? 0 : w[0];
  uint64_t best = UINT64_MAX;
  for (std::size_t i = 0; i < w.size(); ++i)
    for (std::size_t j = i + 1; j < w.size(); ++j) {
      std::vector<uint64_t> rest;
      for (std::size_t k = 0; k < w.size(); ++k)
        if (k != i && k != j)
          rest.push_back(w[k]);
      const uint64_t merged = w[i] + w[j];
      rest.push_back(merged);
      best = std::min(best, merged + (rest.size() == 1 ? 0 : best_prefix_cost(rest)));
    }
  return best;
}

} // namespace

TEST(Codec, RleMaximalRun) {
  WordStream s{{0, 0, 0, 0}, 8};
  auto bits = rle_encode(s);
  EXPECT_EQ(bits.bits, 16u);
  EXPECT_DOUBLE_EQ(compression_ratio(s, CodecScheme::RLE), 16.0 / 32.0);
  EXPECT_EQ(rle_decode(bits, 8).words, s.words);
}

TEST(Codec, RleIncompressible) {
  WordStream s{{1, 2, 3, 4}, 8};
  EXPECT_EQ(rle_encode(s).bits, 64u);
  EXPECT_GT(compression_ratio(s, CodecScheme::RLE), 1.0);
}

TEST(Codec, RleLongRunsSplit) {
  WordStream s{std::vector<uint32_t>(600, 7), 8};
  EXPECT_EQ(rle_encode(s).bits, 3u * 16);
  EXPECT_EQ(rle_decode(rle_encode(s), 8).words, s.words);
}

TEST(Codec, RleSparseMatchesBitCount) {
  auto s = random_stream(10000, 8, 0.6, 11);
  EXPECT_EQ(rle_encode(s).bits, count_rle_bits(s.words, 8));
  EXPECT_EQ(rle_encoded_bits(s.words, 8), count_rle_bits(s.words, 8));
  EXPECT_DOUBLE_EQ(compression_ratio(s, CodecScheme::RLE),
                   static_cast<double>(count_rle_bits(s.words, 8)) / (10000.0 * 8));
}

TEST(Codec, RleDecodeErrors) {
  auto bits = rle_encode(WordStream{{5, 5, 9}, 8});
  BitStream cut = bits;
  cut.bits -= 3;
  EXPECT_THROW(rle_decode(cut, 8), CodecError);
  BitStream zero;
  zero.put(1, 8);
  zero.put(0, 8);
  EXPECT_THROW(rle_decode(zero, 8), CodecError);
}

TEST(Codec, HuffmanUniformIsFixedLength) {
  Histogram h;
  for (uint32_t s = 0; s < 256; ++s)
    h[s] = 10;
  auto t = huffman_build(h, 8);
  for (const auto &[s, len] : t.lengths)
    EXPECT_EQ(len, 8);
  WordStream all;
  for (uint32_t s = 0; s < 256; ++s)
    all.words.push_back(s);
  EXPECT_DOUBLE_EQ(compression_ratio(all, CodecScheme::Huffman, &t), 1.0);
}

TEST(Codec, HuffmanTwoSymbols) {
  auto t = huffman_build({{3, 3}, {9, 1}}, 8);
  EXPECT_EQ(t.lengths.at(3), 1);
  EXPECT_EQ(t.lengths.at(9), 1);
  WordStream s{{3, 3, 3, 9}, 8};
  EXPECT_DOUBLE_EQ(compression_ratio(s, CodecScheme::Huffman, &t), 1.0 / 8);
}

TEST(Codec, HuffmanSingleSymbol) {
  auto t = huffman_build({{42, 5}}, 8);
  EXPECT_EQ(t.lengths.at(42), 1);
  WordStream s{{42, 42, 42}, 8};
  EXPECT_EQ(huffman_decode(huffman_encode(s, t), t).words, s.words);
  EXPECT_THROW(huffman_build({}, 8), CodecError);
  EXPECT_THROW(huffman_encode(WordStream{{1}, 8}, t), CodecError);
}

TEST(Codec, HuffmanEntropyBound) {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    auto s = random_stream(5000, 8, 0.5, seed);
    auto h = histogram(s.words);
    auto t = huffman_build(h, 8);
    const double avg = static_cast<double>(t.encoded_bits(s.words)) / s.words.size();
    EXPECT_LE(avg, entropy_bits(h) + 1.0);
    EXPECT_GE(avg, entropy_bits(h) - 1e-9);
  }
}

TEST(Codec, HuffmanPrefixFree) {
  auto s = random_stream(3000, 8, 0.3, 9);
  auto t = huffman_build(histogram(s.words), 8);
  std::vector<std::pair<uint64_t, int>> codes;
  for (const auto &[sym, len] : t.lengths)
    codes.emplace_back(t.code(sym), len);
  for (std::size_t i = 0; i < codes.size(); ++i)
    for (std::size_t j = 0; j < codes.size(); ++j)
      if (i != j && codes[i].second <= codes[j].second)
        EXPECT_NE(codes[j].first >> (codes[j].second - codes[i].second), codes[i].first);
}

TEST(Codec, HuffmanOptimalOnSmallAlphabets) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + trial % 5;
    Histogram h;
    std::vector<uint64_t> w;
    for (int i = 0; i < n; ++i) {
      const uint64_t c = 1 + rng() % 50;
      h[static_cast<uint32_t>(i)] = c;
      w.push_back(c);
    }
    auto t = huffman_build(h, 8);
    uint64_t cost = 0;
    for (const auto &[s, c] : h)
      cost += c * static_cast<uint64_t>(t.lengths.at(s));
    EXPECT_EQ(cost, best_prefix_cost(w)) << "trial " << trial;
  }
}

TEST(Codec, RoundTripProperty) {
  for (int L : {8, 16}) {
    for (uint64_t seed = 0; seed < 20; ++seed) {
      auto s = random_stream(1 + seed * 97, L, seed % 2 ? 0.7 : 0.1, seed);
      EXPECT_EQ(rle_decode(rle_encode(s), L).words, s.words);
      auto t = huffman_build(histogram(s.words), L);
      EXPECT_EQ(huffman_decode(huffman_encode(s, t), t).words, s.words);
    }
  }
}

TEST(Codec, WeightRatioRecomputed) {
  auto g = sdse::test::model("unet_small");
  const int L = g.word_length();
  auto w = synthetic_weights(200000, L, 17);
  auto h = histogram(w.words);
  auto t = huffman_build(h, L);
  double bits = 0;
  for (const auto &[s, c] : h)
    bits += static_cast<double>(c) * t.lengths.at(s);
  EXPECT_DOUBLE_EQ(compression_ratio(w, CodecScheme::Huffman, &t), bits / (static_cast<double>(w.words.size()) * L));
}

TEST(Codec, EstimateRatio) {
  auto one = random_stream(4000, 8, 0.6, 1);
  auto r = estimate_ratio({one}, CodecScheme::RLE);
  EXPECT_DOUBLE_EQ(r.c_bar, compression_ratio(one, CodecScheme::RLE));
  EXPECT_DOUBLE_EQ(r.min, r.max);
  // Ratios 0.5 and 0.25 from constant streams: 1 token per 255 words vs 2 tokens.
  WordStream a{std::vector<uint32_t>(4, 0), 8};
  WordStream b{std::vector<uint32_t>(8, 0), 8};
  auto two = estimate_ratio({a, b}, CodecScheme::RLE);
  EXPECT_DOUBLE_EQ(two.c_bar, (0.5 + 0.25) / 2);
  EXPECT_THROW(estimate_ratio({}, CodecScheme::RLE), CodecError);
}

TEST(Codec, CalibrationSetMean) {
  std::vector<WordStream> maps;
  double sum = 0;
  for (uint64_t i = 0; i < 32; ++i) {
    maps.push_back(synthetic_activations(2048, 8, 0.5, 100 + i));
    sum += static_cast<double>(rle_encode(maps.back()).bits) / maps.back().raw_bits();
  }
  auto r = estimate_ratio(maps, CodecScheme::RLE);
  EXPECT_NEAR(r.c_bar, sum / 32, 1e-12);
  EXPECT_LE(r.min, r.c_bar);
  EXPECT_GE(r.max, r.c_bar);
}

TEST(Codec, CalibrateIsDeterministic) {
  auto a = calibrate(CodecScheme::Huffman, 8, 5);
  auto b = calibrate(CodecScheme::Huffman, 8, 5);
  EXPECT_EQ(a.activation_ratio, b.activation_ratio);
  EXPECT_EQ(a.weight_ratio, b.weight_ratio);
  EXPECT_LT(a.activation_ratio, 1.0);
  auto none = calibrate(CodecScheme::None, 8, 5);
  EXPECT_EQ(none.activation_ratio, 1.0);
  EXPECT_EQ(none.weight_ratio, 1.0);
}

TEST(Codec, Overhead) {
  EXPECT_EQ(codec_overhead(CodecScheme::RLE, 0), ResourceVector{});
  auto one = codec_overhead(CodecScheme::RLE, 1);
  auto two = codec_overhead(CodecScheme::RLE, 2);
  EXPECT_EQ(two.lut, 2 * one.lut);
  EXPECT_EQ(two.ff, 2 * one.ff);
  EXPECT_GT(one.lut, 0);
  EXPECT_EQ(codec_overhead(CodecScheme::None, 7), ResourceVector{});
}

TEST(Codec, RawTensorFile) {
  auto s = random_stream(333, 16, 0.2, 4);
  auto path = (std::filesystem::temp_directory_path() / "sdse_raw_tensor.bin").string();
  write_raw_tensor(path, s);
  auto back = read_raw_tensor(path);
  EXPECT_EQ(back.words, s.words);
  EXPECT_EQ(back.word_length, 16);
  std::filesystem::remove(path);
  auto bytes = serialize_raw_tensor(s);
  bytes.resize(bytes.size() - 1);
  EXPECT_THROW(deserialize_raw_tensor(bytes), CodecError);
}

TEST(Codec, WordValidation) {
  EXPECT_THROW(rle_encode(WordStream{{256}, 8}), CodecError);
  EXPECT_THROW(parse_scheme("zip"), Error);
  EXPECT_EQ(parse_scheme("rle"), CodecScheme::RLE);
}
