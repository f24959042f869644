/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "sdse/codec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <random>

namespace sdse {

std::string_view to_string(CodecScheme scheme) {
  switch (scheme) {
  case CodecScheme::None:
    return "none";
  case CodecScheme::RLE:
    return "rle";
  case CodecScheme::Huffman:
    return "huffman";
  }
  return "?";
}

CodecScheme parse_scheme(std::string_view name) {
  if (name == "none")
    return CodecScheme::None;
  if (name == "rle")
    return CodecScheme::RLE;
  if (name == "huffman")
    return CodecScheme::Huffman;
  throw ParseError("unknown codec scheme '" + std::string(name) + "'");
}

void WordStream::validate() const {
  if (word_length < 1 || word_length > 32)
    throw CodecError("word length must be in [1, 32]");
  if (word_length == 32)
    return;
  const uint32_t limit = uint32_t{1} << word_length;
  for (std::size_t i = 0; i < words.size(); ++i)
    if (words[i] >= limit)
      throw CodecError("word " + std::to_string(i) + " does not fit in " + std::to_string(word_length) + " bits");
}

void BitStream::put(uint64_t value, int width) {
  for (int i = width - 1; i >= 0; --i) {
    if (bits % 8 == 0)
      bytes.push_back(0);
    if ((value >> i) & 1u)
      bytes.back() |= static_cast<uint8_t>(0x80u >> (bits % 8));
    ++bits;
  }
}

int BitReader::bit() {
  if (pos_ >= s_.bits)
    throw CodecError("truncated bitstream");
  int b = (s_.bytes[pos_ / 8] >> (7 - pos_ % 8)) & 1;
  ++pos_;
  return b;
}

uint64_t BitReader::get(int width) {
  if (remaining() < static_cast<uint64_t>(width))
    throw CodecError("truncated bitstream");
  uint64_t v = 0;
  for (int i = 0; i < width; ++i)
    v = (v << 1) | static_cast<uint64_t>(bit());
  return v;
}

BitStream rle_encode(const WordStream &s) {
  s.validate();
  BitStream out;
  std::size_t i = 0;
  while (i < s.words.size()) {
    uint32_t value = s.words[i];
    uint32_t run = 1;
    while (i + run < s.words.size() && s.words[i + run] == value && run < kRleMaxRun)
      ++run;
    out.put(value, s.word_length);
    out.put(run, kRleRunBits);
    i += run;
  }
  return out;
}

uint64_t rle_encoded_bits(std::span<const uint32_t> words, int word_length) {
  uint64_t tokens = 0;
  std::size_t i = 0;
  while (i < words.size()) {
    uint32_t run = 1;
    while (i + run < words.size() && words[i + run] == words[i] && run < kRleMaxRun)
      ++run;
    ++tokens;
    i += run;
  }
  return tokens * static_cast<uint64_t>(word_length + kRleRunBits);
}

WordStream rle_decode(const BitStream &bits, int word_length) {
  WordStream out;
  out.word_length = word_length;
  BitReader reader(bits);
  while (!reader.done()) {
    if (reader.remaining() < static_cast<uint64_t>(word_length + kRleRunBits))
      throw CodecError("truncated RLE token");
    auto value = static_cast<uint32_t>(reader.get(word_length));
    auto run = static_cast<uint32_t>(reader.get(kRleRunBits));
    if (run == 0)
      throw CodecError("invalid RLE token: zero run length");
    out.words.insert(out.words.end(), run, value);
  }
  return out;
}

Histogram histogram(std::span<const uint32_t> words) {
  Histogram h;
  for (uint32_t w : words)
    ++h[w];
  return h;
}

namespace {

struct CanonicalOrder {
  std::vector<uint32_t> symbols;    // sorted by (length, symbol)
  std::vector<int> lengths;         // parallel to symbols
  std::map<uint32_t, uint64_t> codes;
};

CanonicalOrder canonical(const CodecTable &t) {
  CanonicalOrder c;
  std::vector<std::pair<int, uint32_t>> order;
  for (const auto &[sym, len] : t.lengths)
    order.emplace_back(len, sym);
  std::sort(order.begin(), order.end());
  uint64_t code = 0;
  int prev_len = order.empty() ? 0 : order.front().first;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto [len, sym] = order[i];
    if (i > 0) {
      code = (code + 1) << (len - prev_len);
    }
    prev_len = len;
    c.symbols.push_back(sym);
    c.lengths.push_back(len);
    c.codes[sym] = code;
  }
  return c;
}

} // namespace

uint64_t CodecTable::code(uint32_t symbol) const { return canonical(*this).codes.at(symbol); }

uint64_t CodecTable::encoded_bits(std::span<const uint32_t> words) const {
  uint64_t bits = 0;
  for (uint32_t w : words) {
    auto it = lengths.find(w);
    if (it == lengths.end())
      throw CodecError("symbol " + std::to_string(w) + " missing from Huffman table");
    bits += static_cast<uint64_t>(it->second);
  }
  return bits;
}

CodecTable huffman_build(const Histogram &hist, int word_length) {
  if (hist.empty())
    throw CodecError("Huffman table needs a non-empty histogram");
  CodecTable table;
  table.word_length = word_length;
  if (hist.size() == 1) {
    table.lengths[hist.begin()->first] = 1;
    return table;
  }
  // Nodes are ordered by (weight, creation index); leaves are created first in
  // symbol order, which makes the tree shape deterministic.
  struct Node {
    uint64_t weight;
    int left = -1, right = -1;
    uint32_t symbol = 0;
  };
  std::vector<Node> nodes;
  using Key = std::pair<uint64_t, std::size_t>;
  std::priority_queue<Key, std::vector<Key>, std::greater<>> heap;
  for (const auto &[sym, count] : hist) {
    if (count == 0)
      continue;
    nodes.push_back({count, -1, -1, sym});
    heap.emplace(count, nodes.size() - 1);
  }
  if (heap.size() == 1) {
    table.lengths[nodes.front().symbol] = 1;
    return table;
  }
  while (heap.size() > 1) {
    auto [wa, a] = heap.top();
    heap.pop();
    auto [wb, b] = heap.top();
    heap.pop();
    nodes.push_back({wa + wb, static_cast<int>(a), static_cast<int>(b), 0});
    heap.emplace(wa + wb, nodes.size() - 1);
  }
  std::vector<std::pair<std::size_t, int>> stack{{heap.top().second, 0}};
  while (!stack.empty()) {
    auto [n, depth] = stack.back();
    stack.pop_back();
    if (nodes[n].left < 0) {
      table.lengths[nodes[n].symbol] = depth;
    } else {
      stack.emplace_back(nodes[n].left, depth + 1);
      stack.emplace_back(nodes[n].right, depth + 1);
    }
  }
  return table;
}

BitStream huffman_encode(const WordStream &s, const CodecTable &table) {
  s.validate();
  auto c = canonical(table);
  BitStream out;
  for (uint32_t w : s.words) {
    auto it = c.codes.find(w);
    if (it == c.codes.end())
      throw CodecError("symbol " + std::to_string(w) + " missing from Huffman table");
    out.put(it->second, table.lengths.at(w));
  }
  return out;
}

WordStream huffman_decode(const BitStream &bits, const CodecTable &table) {
  auto c = canonical(table);
  WordStream out;
  out.word_length = table.word_length;
  if (c.symbols.empty())
    throw CodecError("empty Huffman table");
  const int max_len = c.lengths.back();
  // first code and index of the first symbol for every length
  std::vector<uint64_t> first_code(max_len + 2, 0);
  std::vector<std::size_t> first_index(max_len + 2, c.symbols.size());
  std::vector<std::size_t> count(max_len + 2, 0);
  for (std::size_t i = 0; i < c.symbols.size(); ++i) {
    int len = c.lengths[i];
    if (count[len]++ == 0) {
      first_index[len] = i;
      first_code[len] = c.codes[c.symbols[i]];
    }
  }
  BitReader reader(bits);
  while (!reader.done()) {
    uint64_t code = 0;
    int len = 0;
    while (true) {
      if (reader.done())
        throw CodecError("truncated Huffman code");
      code = (code << 1) | static_cast<uint64_t>(reader.bit());
      ++len;
      if (len > max_len)
        throw CodecError("invalid Huffman code");
      if (count[len] > 0 && code >= first_code[len] && code - first_code[len] < count[len]) {
        out.words.push_back(c.symbols[first_index[len] + (code - first_code[len])]);
        break;
      }
    }
  }
  return out;
}

double compression_ratio(const WordStream &s, CodecScheme scheme, const CodecTable *table) {
  if (s.words.empty())
    return 1.0;
  const double raw = static_cast<double>(s.raw_bits());
  switch (scheme) {
  case CodecScheme::None:
    return 1.0;
  case CodecScheme::RLE:
    return static_cast<double>(rle_encoded_bits(s.words, s.word_length)) / raw;
  case CodecScheme::Huffman: {
    if (table)
      return static_cast<double>(table->encoded_bits(s.words)) / raw;
    auto own = huffman_build(histogram(s.words), s.word_length);
    return static_cast<double>(own.encoded_bits(s.words)) / raw;
  }
  }
  return 1.0;
}

RatioEstimate estimate_ratio(const std::vector<WordStream> &samples, CodecScheme scheme) {
  if (samples.empty())
    throw CodecError("ratio estimation needs at least one sample");
  std::optional<CodecTable> table;
  if (scheme == CodecScheme::Huffman) {
    Histogram pooled;
    for (const auto &s : samples)
      for (uint32_t w : s.words)
        ++pooled[w];
    table = huffman_build(pooled, samples.front().word_length);
  }
  RatioEstimate est;
  for (const auto &s : samples)
    est.per_sample.push_back(compression_ratio(s, scheme, table ? &*table : nullptr));
  double sum = 0;
  for (double r : est.per_sample)
    sum += r;
  est.c_bar = sum / static_cast<double>(est.per_sample.size());
  est.min = *std::min_element(est.per_sample.begin(), est.per_sample.end());
  est.max = *std::max_element(est.per_sample.begin(), est.per_sample.end());
  return est;
}

ResourceVector codec_overhead(CodecScheme scheme, int64_t streams, const CostTable &costs) {
  ResourceVector r;
  if (streams <= 0 || scheme == CodecScheme::None)
    return r;
  const StreamCost &c = scheme == CodecScheme::RLE ? costs.rle : costs.huffman;
  r.lut = c.lut * streams;
  r.ff = c.ff * streams;
  return r;
}

namespace {
constexpr uint8_t kMagic[4] = {'S', 'D', 'R', 'T'};
}

std::vector<uint8_t> serialize_raw_tensor(const WordStream &s) {
  s.validate();
  if (s.word_length % 8 != 0)
    throw CodecError("raw tensors need a byte-multiple word length");
  std::vector<uint8_t> out(kMagic, kMagic + 4);
  auto put_le = [&](uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i)
      out.push_back(static_cast<uint8_t>(v >> (8 * i)));
  };
  put_le(static_cast<uint32_t>(s.word_length), 4);
  put_le(s.words.size(), 8);
  for (uint32_t w : s.words)
    put_le(w, s.word_length / 8);
  return out;
}

WordStream deserialize_raw_tensor(std::span<const uint8_t> bytes) {
  if (bytes.size() < 16 || !std::equal(kMagic, kMagic + 4, bytes.begin()))
    throw CodecError("raw tensor: bad header");
  auto get_le = [&](std::size_t at, int n) {
    uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<uint64_t>(bytes[at + i]) << (8 * i);
    return v;
  };
  WordStream s;
  s.word_length = static_cast<int>(get_le(4, 4));
  if (s.word_length != 8 && s.word_length != 16 && s.word_length != 32)
    throw CodecError("raw tensor: unsupported word length " + std::to_string(s.word_length));
  const uint64_t count = get_le(8, 8);
  const std::size_t width = static_cast<std::size_t>(s.word_length / 8);
  if (bytes.size() != 16 + count * width)
    throw CodecError("raw tensor: payload size does not match header count");
  s.words.reserve(count);
  for (uint64_t i = 0; i < count; ++i)
    s.words.push_back(static_cast<uint32_t>(get_le(16 + i * width, static_cast<int>(width))));
  return s;
}

void write_raw_tensor(const std::string &path, const WordStream &s) {
  auto bytes = serialize_raw_tensor(s);
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

WordStream read_raw_tensor(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ParseError("cannot open raw tensor '" + path + "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_raw_tensor(bytes);
}

WordStream synthetic_activations(std::size_t count, int word_length, double zero_fraction, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::geometric_distribution<uint32_t> magnitude(0.08);
  const uint32_t max_word = word_length >= 32 ? 0xffffffffu : (uint32_t{1} << word_length) - 1;
  WordStream s;
  s.word_length = word_length;
  s.words.reserve(count);
  // Zeros come in short spatial runs, as they do after ReLU.
  std::size_t run_left = 0;
  for (std::size_t i = 0; i < count; ++i) {
    if (run_left == 0 && unit(rng) < zero_fraction / 4.0 + 1e-12)
      run_left = 1 + static_cast<std::size_t>(unit(rng) * 7.0);
    if (run_left > 0 || unit(rng) < zero_fraction * 0.25) {
      s.words.push_back(0);
      if (run_left > 0)
        --run_left;
    } else {
      s.words.push_back(std::min(max_word, 1 + magnitude(rng)));
    }
  }
  return s;
}

WordStream synthetic_weights(std::size_t count, int word_length, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::geometric_distribution<uint32_t> magnitude(0.12);
  std::bernoulli_distribution negative(0.5);
  const uint32_t mask = word_length >= 32 ? 0xffffffffu : (uint32_t{1} << word_length) - 1;
  const uint32_t half = mask >> 1;
  WordStream s;
  s.word_length = word_length;
  s.words.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    uint32_t m = std::min(half, magnitude(rng));
    uint32_t w = negative(rng) ? (~m + 1) & mask : m;
    s.words.push_back(w);
  }
  return s;
}

Calibration calibrate(CodecScheme scheme, int word_length, uint64_t seed, int samples, std::size_t sample_words,
                      double zero_fraction) {
  Calibration c;
  if (scheme == CodecScheme::None)
    return c;
  std::vector<WordStream> acts;
  for (int i = 0; i < samples; ++i)
    acts.push_back(synthetic_activations(sample_words, word_length, zero_fraction, seed + static_cast<uint64_t>(i)));
  c.activation_ratio = estimate_ratio(acts, scheme).c_bar;
  c.weight_ratio = compression_ratio(synthetic_weights(sample_words * 4, word_length, seed ^ 0x5eedULL), scheme);
  return c;
}

} // namespace sdse
