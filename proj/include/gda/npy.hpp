#pragma once

// Minimal reader/writer for NPY version 1.0 files (C order, little-endian
// '<f4' and '<i8' payloads). Headers are emitted byte-for-byte the way numpy
// writes them so files round-trip through numpy.save/numpy.load unchanged.

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "gda/error.hpp"

namespace gda::npy {

inline constexpr char kMagic[] = "\x93NUMPY";
inline constexpr std::size_t kMagicLen = 6;
inline constexpr std::size_t kPreambleLen = kMagicLen + 2 + 2;  // magic, version, header_len
inline constexpr std::size_t kAlign = 64;

struct Array {
  std::string descr;
  std::vector<std::size_t> shape;
  std::vector<char> payload;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
  }
};

namespace detail {

inline std::size_t item_size(std::string_view descr) {
  if (descr == "<f4") return 4;
  if (descr == "<i8" || descr == "<f8") return 8;
  return 0;
}

// Cursor over the python-literal header dict.
class HeaderParser {
 public:
  explicit HeaderParser(std::string_view text) : text_(text) {}

  Array parse() {
    Array out;
    bool have_descr = false, have_order = false, have_shape = false;
    expect('{');
    while (true) {
      skip_ws();
      if (peek() == '}') {
        ++pos_;
        break;
      }
      std::string key = quoted();
      expect(':');
      if (key == "descr") {
        out.descr = quoted();
        have_descr = true;
      } else if (key == "fortran_order") {
        skip_ws();
        if (consume_word("False")) {
          have_order = true;
        } else if (consume_word("True")) {
          fail(ErrorKind::MalformedHeader, "fortran_order=True is not supported");
        } else {
          fail(ErrorKind::MalformedHeader, "fortran_order must be a boolean");
        }
      } else if (key == "shape") {
        out.shape = tuple();
        have_shape = true;
      } else {
        fail(ErrorKind::MalformedHeader, "unexpected header key '" + key + "'");
      }
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      skip_ws();
      expect('}');
      break;
    }
    skip_ws();
    if (pos_ != text_.size()) fail(ErrorKind::MalformedHeader, "trailing bytes after header dict");
    if (!have_descr || !have_order || !have_shape) {
      fail(ErrorKind::MalformedHeader, "header is missing descr, fortran_order or shape");
    }
    return out;
  }

 private:
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(ErrorKind::MalformedHeader, std::string("expected '") + c + "' in header");
    ++pos_;
  }

  bool consume_word(std::string_view word) {
    if (text_.substr(pos_, word.size()) == word) {
      pos_ += word.size();
      return true;
    }
    return false;
  }

  std::string quoted() {
    skip_ws();
    char q = peek();
    if (q != '\'' && q != '"') fail(ErrorKind::MalformedHeader, "expected quoted string in header");
    ++pos_;
    auto end = text_.find(q, pos_);
    if (end == std::string_view::npos) fail(ErrorKind::MalformedHeader, "unterminated string");
    std::string s(text_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return s;
  }

  std::vector<std::size_t> tuple() {
    std::vector<std::size_t> dims;
    expect('(');
    while (true) {
      skip_ws();
      if (peek() == ')') {
        ++pos_;
        return dims;
      }
      if (!std::isdigit(static_cast<unsigned char>(peek()))) {
        fail(ErrorKind::MalformedHeader, "shape entries must be non-negative integers");
      }
      std::size_t v = 0;
      while (std::isdigit(static_cast<unsigned char>(peek()))) {
        v = v * 10 + static_cast<std::size_t>(peek() - '0');
        ++pos_;
      }
      dims.push_back(v);
      skip_ws();
      if (peek() == ',') ++pos_;
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

inline std::string shape_literal(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  if (shape.size() == 1) s += ",";
  s += ")";
  return s;
}

template <typename T>
void to_little_endian(char* bytes, std::size_t count) {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < count; ++i) {
      char* p = bytes + i * sizeof(T);
      for (std::size_t a = 0, b = sizeof(T) - 1; a < b; ++a, --b) std::swap(p[a], p[b]);
    }
  } else {
    (void)bytes;
    (void)count;
  }
}

}  // namespace detail

/// Serialize the header block (magic, version 1.0, length, padded dict).
inline std::string encode_header(std::string_view descr, const std::vector<std::size_t>& shape) {
  std::string dict = "{'descr': '" + std::string(descr) +
                     "', 'fortran_order': False, 'shape': " + detail::shape_literal(shape) + ", }";
  std::size_t used = kPreambleLen + dict.size() + 1;
  std::size_t pad = kAlign - (used % kAlign);
  dict.append(pad, ' ');
  dict.push_back('\n');
  if (dict.size() > 0xFFFF) fail(ErrorKind::MalformedHeader, "header too large for NPY 1.0");

  std::string out(kMagic, kMagicLen);
  out.push_back('\x01');
  out.push_back('\x00');
  out.push_back(static_cast<char>(dict.size() & 0xFF));
  out.push_back(static_cast<char>((dict.size() >> 8) & 0xFF));
  out += dict;
  return out;
}

inline Array parse(const std::vector<char>& bytes) {
  if (bytes.size() < kPreambleLen || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
    fail(ErrorKind::MalformedHeader, "missing NPY magic string");
  }
  if (bytes[6] != 1 || bytes[7] != 0) fail(ErrorKind::MalformedHeader, "only NPY version 1.0 is supported");
  std::size_t header_len = static_cast<unsigned char>(bytes[8]) |
                           (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
  if (bytes.size() < kPreambleLen + header_len) fail(ErrorKind::MalformedHeader, "truncated header");

  std::string_view text(bytes.data() + kPreambleLen, header_len);
  Array out = detail::HeaderParser(text).parse();
  std::size_t item = detail::item_size(out.descr);
  if (item == 0) fail(ErrorKind::DTypeMismatch, "unsupported dtype '" + out.descr + "'");

  std::size_t expected = out.element_count() * item;
  std::size_t actual = bytes.size() - kPreambleLen - header_len;
  if (actual != expected) {
    fail(ErrorKind::MalformedHeader, "payload holds " + std::to_string(actual) + " bytes, header declares " +
                                         std::to_string(expected));
  }
  out.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(kPreambleLen + header_len), bytes.end());
  return out;
}

inline std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoFailure, "cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorKind::IoFailure, "read error on " + path);
  return bytes;
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoFailure, "cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::IoFailure, "write error on " + path);
}

inline Array read(const std::string& path) {
  try {
    return parse(read_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::IoFailure) throw;
    throw Error(e.kind(), path + ": " + std::string(e.what()));
  }
}

inline std::vector<float> as_f32(const Array& a) {
  if (a.descr != "<f4") fail(ErrorKind::DTypeMismatch, "expected '<f4', found '" + a.descr + "'");
  std::vector<float> v(a.element_count());
  std::vector<char> raw = a.payload;
  detail::to_little_endian<float>(raw.data(), v.size());
  std::memcpy(v.data(), raw.data(), raw.size());
  return v;
}

inline std::vector<std::int64_t> as_i64(const Array& a) {
  if (a.descr != "<i8") fail(ErrorKind::DTypeMismatch, "expected '<i8', found '" + a.descr + "'");
  std::vector<std::int64_t> v(a.element_count());
  std::vector<char> raw = a.payload;
  detail::to_little_endian<std::int64_t>(raw.data(), v.size());
  std::memcpy(v.data(), raw.data(), raw.size());
  return v;
}

template <typename T>
std::string encode(std::string_view descr, const std::vector<std::size_t>& shape, const std::vector<T>& values) {
  std::string out = encode_header(descr, shape);
  std::size_t offset = out.size();
  out.resize(offset + values.size() * sizeof(T));
  std::memcpy(out.data() + offset, values.data(), values.size() * sizeof(T));
  detail::to_little_endian<T>(out.data() + offset, values.size());
  return out;
}

inline void write_f32(const std::string& path, const std::vector<std::size_t>& shape,
                      const std::vector<float>& values) {
  write_file(path, encode("<f4", shape, values));
}

inline void write_i64(const std::string& path, const std::vector<std::size_t>& shape,
                      const std::vector<std::int64_t>& values) {
  write_file(path, encode("<i8", shape, values));
}

}  // namespace gda::npy
