#include "ideaeval/text.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>

#include "ideaeval/error.hpp"

namespace ideaeval::text {

namespace {

struct Decoded {
  char32_t cp;
  std::size_t len;
};

Decoded decode_at(std::string_view s, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  std::size_t len = 0;
  char32_t cp = 0;
  if (b0 < 0x80) {
    return {b0, 1};
  } else if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    throw ValidationError("malformed UTF-8 at byte " + std::to_string(i));
  }
  if (i + len > s.size()) throw ValidationError("truncated UTF-8 sequence at byte " + std::to_string(i));
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) throw ValidationError("malformed UTF-8 at byte " + std::to_string(i + k));
    cp = (cp << 6) | (b & 0x3F);
  }
  return {cp, len};
}

}  // namespace

std::vector<std::size_t> scalar_byte_offsets(std::string_view s) {
  std::vector<std::size_t> out;
  out.reserve(s.size() + 1);
  for (std::size_t i = 0; i < s.size();) {
    out.push_back(i);
    i += decode_at(s, i).len;
  }
  out.push_back(s.size());
  return out;
}

std::size_t scalar_length(std::string_view s) { return scalar_byte_offsets(s).size() - 1; }

std::string scalar_substr(std::string_view s, std::size_t start, std::size_t end) {
  const auto offs = scalar_byte_offsets(s);
  const std::size_t n = offs.size() - 1;
  if (start > end || end > n) throw ValidationError("scalar range out of bounds");
  return std::string(s.substr(offs[start], offs[end] - offs[start]));
}

bool is_unicode_whitespace(char32_t cp) noexcept {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

std::vector<std::string_view> split_words(std::string_view s) {
  std::vector<std::string_view> words;
  std::size_t word_start = std::string_view::npos;
  for (std::size_t i = 0; i < s.size();) {
    const auto d = decode_at(s, i);
    if (is_unicode_whitespace(d.cp)) {
      if (word_start != std::string_view::npos) {
        words.push_back(s.substr(word_start, i - word_start));
        word_start = std::string_view::npos;
      }
    } else if (word_start == std::string_view::npos) {
      word_start = i;
    }
    i += d.len;
  }
  if (word_start != std::string_view::npos) words.push_back(s.substr(word_start));
  return words;
}

std::string_view truncate_words(std::string_view s, std::size_t max_words) {
  const auto words = split_words(s);
  if (words.size() <= max_words) return s;
  if (max_words == 0) return s.substr(0, 0);
  const auto& last = words[max_words - 1];
  return s.substr(0, static_cast<std::size_t>(last.data() - s.data()) + last.size());
}

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::vector<std::uint8_t> sha256(std::string_view data) {
  std::vector<std::uint8_t> out(EVP_MAX_MD_SIZE);
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  out.resize(len);
  return out;
}

std::string sha256_hex(std::string_view data) {
  static constexpr char kHex[] = "0123456789abcdef";
  const auto raw = sha256(data);
  std::string out;
  out.reserve(raw.size() * 2);
  for (auto b : raw) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xF]);
  }
  return out;
}

}  // namespace ideaeval::text
