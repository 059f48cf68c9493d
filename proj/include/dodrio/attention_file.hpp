#pragma once

// Binary attention payload: 20-byte little-endian header ("DDRA", L, H, n,
// reserved = 0) followed by L*H*n*n float32 values in (layer, head, from, to)
// row-major order.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "dodrio/error.hpp"
#include "dodrio/matrix.hpp"

namespace dodrio {

inline constexpr std::array<char, 4> kAttentionMagic = {'D', 'D', 'R', 'A'};
inline constexpr std::size_t kAttentionHeaderBytes = 20;

struct AttentionHeader {
  std::uint32_t layers = 0;
  std::uint32_t heads = 0;
  std::uint32_t tokens = 0;

  std::size_t value_count() const {
    return std::size_t{layers} * heads * tokens * tokens;
  }
  friend bool operator==(const AttentionHeader&, const AttentionHeader&) = default;
};

/// Per-instance attention weights, shape (layers, heads, n, n).
class AttentionTensor {
 public:
  AttentionTensor() = default;
  AttentionTensor(std::size_t layers, std::size_t heads, std::size_t tokens, float fill = 0.0f)
      : layers_(layers), heads_(heads), tokens_(tokens),
        values_(layers * heads * tokens * tokens, fill) {}
  AttentionTensor(std::size_t layers, std::size_t heads, std::size_t tokens,
                  std::vector<float> values)
      : layers_(layers), heads_(heads), tokens_(tokens), values_(std::move(values)) {
    if (values_.size() != layers * heads * tokens * tokens)
      throw Error(ErrorCode::LengthMismatch, "tensor value count does not match shape");
  }

  std::size_t layers() const noexcept { return layers_; }
  std::size_t heads() const noexcept { return heads_; }
  std::size_t tokens() const noexcept { return tokens_; }
  const std::vector<float>& values() const noexcept { return values_; }

  HeadView head(std::size_t layer, std::size_t head) const {
    check(layer, head);
    const std::size_t stride = tokens_ * tokens_;
    return HeadView(std::span<const float>(values_).subspan(offset(layer, head), stride),
                    tokens_);
  }

  std::span<float> head_values(std::size_t layer, std::size_t head) {
    check(layer, head);
    return std::span<float>(values_).subspan(offset(layer, head), tokens_ * tokens_);
  }

  template <MatrixLike M>
  void set_head(std::size_t layer, std::size_t head, const M& m) {
    if (m.rows() != tokens_ || m.cols() != tokens_)
      throw Error(ErrorCode::LengthMismatch, "head matrix does not match tensor token count");
    auto dst = head_values(layer, head);
    for (std::size_t i = 0; i < tokens_; ++i)
      for (std::size_t j = 0; j < tokens_; ++j)
        dst[i * tokens_ + j] = static_cast<float>(m(i, j));
  }

  AttentionHeader header() const {
    return {static_cast<std::uint32_t>(layers_), static_cast<std::uint32_t>(heads_),
            static_cast<std::uint32_t>(tokens_)};
  }

  friend bool operator==(const AttentionTensor&, const AttentionTensor&) = default;

 private:
  void check(std::size_t layer, std::size_t head) const {
    if (layer >= layers_ || head >= heads_)
      throw Error(ErrorCode::UnknownHead, "layer " + std::to_string(layer) + " head " +
                                              std::to_string(head) + " out of range");
  }
  std::size_t offset(std::size_t layer, std::size_t head) const {
    return (layer * heads_ + head) * tokens_ * tokens_;
  }

  std::size_t layers_ = 0;
  std::size_t heads_ = 0;
  std::size_t tokens_ = 0;
  std::vector<float> values_;
};

namespace detail {

inline void set_u32(char* p, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) p[b] = static_cast<char>((v >> (8 * b)) & 0xFFu);
}

inline std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b)
    v |= std::uint32_t{static_cast<unsigned char>(p[b])} << (8 * b);
  return v;
}

inline std::vector<char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, std::span<const char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

}  // namespace detail

inline std::vector<char> encode_attention(const AttentionTensor& tensor) {
  std::vector<char> out(kAttentionHeaderBytes + tensor.values().size() * 4);
  std::copy(kAttentionMagic.begin(), kAttentionMagic.end(), out.begin());
  const auto h = tensor.header();
  char* p = out.data() + kAttentionMagic.size();
  for (std::uint32_t v : {std::uint32_t(h.layers), std::uint32_t(h.heads), std::uint32_t(h.tokens), 0u}) {
    detail::set_u32(p, v);
    p += 4;
  }
  for (float v : tensor.values()) {
    detail::set_u32(p, std::bit_cast<std::uint32_t>(v));
    p += 4;
  }
  return out;
}

inline AttentionHeader decode_attention_header(std::span<const char> bytes,
                                               const std::string& origin) {
  if (bytes.size() < kAttentionHeaderBytes)
    throw Error(ErrorCode::MalformedAttention, origin + ": file shorter than header");
  if (!std::equal(kAttentionMagic.begin(), kAttentionMagic.end(), bytes.begin()))
    throw Error(ErrorCode::MalformedAttention, origin + ": bad magic");
  AttentionHeader h{detail::get_u32(bytes.data() + 4), detail::get_u32(bytes.data() + 8),
                    detail::get_u32(bytes.data() + 12)};
  if (detail::get_u32(bytes.data() + 16) != 0)
    throw Error(ErrorCode::MalformedAttention, origin + ": reserved header field is not 0");
  return h;
}

inline AttentionTensor decode_attention(std::span<const char> bytes, const std::string& origin) {
  const auto h = decode_attention_header(bytes, origin);
  const std::size_t count = h.value_count();
  if (bytes.size() != kAttentionHeaderBytes + count * 4)
    throw Error(ErrorCode::MalformedAttention,
                origin + ": body holds " + std::to_string(bytes.size() - kAttentionHeaderBytes) +
                    " bytes, header requires " + std::to_string(count * 4));
  std::vector<float> values(count);
  const char* p = bytes.data() + kAttentionHeaderBytes;
  for (std::size_t k = 0; k < count; ++k, p += 4)
    values[k] = std::bit_cast<float>(detail::get_u32(p));
  return AttentionTensor(h.layers, h.heads, h.tokens, std::move(values));
}

/// Reads only the header and checks that the file length agrees with it.
inline AttentionHeader read_attention_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::array<char, kAttentionHeaderBytes> buf{};
  in.read(buf.data(), buf.size());
  const auto got = static_cast<std::size_t>(in.gcount());
  const auto h = decode_attention_header(std::span<const char>(buf.data(), got), path.string());
  const auto size = std::filesystem::file_size(path);
  if (size != kAttentionHeaderBytes + h.value_count() * 4)
    throw Error(ErrorCode::MalformedAttention, path.string() + ": file size disagrees with header");
  return h;
}

inline AttentionTensor read_attention_file(const std::filesystem::path& path) {
  const auto bytes = detail::read_bytes(path);
  return decode_attention(bytes, path.string());
}

inline void write_attention_file(const std::filesystem::path& path,
                                 const AttentionTensor& tensor) {
  const auto bytes = encode_attention(tensor);
  detail::write_bytes(path, bytes);
}

}  // namespace dodrio
