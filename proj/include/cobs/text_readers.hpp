#pragma once

#include <zlib.h>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "cobs/error.hpp"
#include "cobs/model.hpp"

namespace cobs {

namespace detail {

inline std::uint32_t read_le(std::string_view s, std::size_t at, int width) {
  std::uint32_t v = 0;
  for (int i = width - 1; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(s[at + i]);
  return v;
}

/// Inflates `in`; `window_bits` -15 for raw deflate (ZIP), 15 for zlib (PDF).
inline std::optional<std::string> inflate_bytes(std::string_view in, int window_bits, std::size_t limit = 64u << 20) {
  z_stream zs{};
  if (inflateInit2(&zs, window_bits) != Z_OK) return std::nullopt;
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
  zs.avail_in = static_cast<uInt>(in.size());
  std::string out;
  char buf[16384];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(buf);
    zs.avail_out = sizeof buf;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) break;
    out.append(buf, sizeof buf - zs.avail_out);
    if (out.size() > limit || (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0)) break;
  }
  inflateEnd(&zs);
  if (rc != Z_STREAM_END && out.empty()) return std::nullopt;
  return out;
}

/// Extracts one member of a ZIP archive via the central directory.
inline std::optional<std::string> zip_member(std::string_view zip, std::string_view name) {
  if (zip.size() < 22) return std::nullopt;
  std::size_t eocd = std::string_view::npos;
  for (std::size_t i = zip.size() - 22 + 1; i-- > 0;) {
    if (read_le(zip, i, 4) == 0x06054b50) { eocd = i; break; }
    if (zip.size() - i > 22 + 65535) break;
  }
  if (eocd == std::string_view::npos) return std::nullopt;
  std::size_t entries = read_le(zip, eocd + 10, 2);
  std::size_t at = read_le(zip, eocd + 16, 4);
  for (std::size_t e = 0; e < entries; ++e) {
    if (at + 46 > zip.size() || read_le(zip, at, 4) != 0x02014b50) return std::nullopt;
    auto method = read_le(zip, at + 10, 2);
    std::size_t csize = read_le(zip, at + 20, 4);
    std::size_t name_len = read_le(zip, at + 28, 2);
    std::size_t extra_len = read_le(zip, at + 30, 2);
    std::size_t comment_len = read_le(zip, at + 32, 2);
    std::size_t local = read_le(zip, at + 42, 4);
    if (at + 46 + name_len > zip.size()) return std::nullopt;
    if (zip.substr(at + 46, name_len) == name) {
      if (local + 30 > zip.size() || read_le(zip, local, 4) != 0x04034b50) return std::nullopt;
      std::size_t data = local + 30 + read_le(zip, local + 26, 2) + read_le(zip, local + 28, 2);
      if (data + csize > zip.size()) return std::nullopt;
      auto raw = zip.substr(data, csize);
      if (method == 0) return std::string(raw);
      if (method == 8) return inflate_bytes(raw, -15);
      return std::nullopt;
    }
    at += 46 + name_len + extra_len + comment_len;
  }
  return std::nullopt;
}

inline std::string decode_xml_entities(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') { out.push_back(s[i]); continue; }
    auto semi = s.find(';', i);
    if (semi == std::string_view::npos || semi - i > 10) { out.push_back('&'); continue; }
    auto ent = s.substr(i + 1, semi - i - 1);
    if (ent == "amp") out.push_back('&');
    else if (ent == "lt") out.push_back('<');
    else if (ent == "gt") out.push_back('>');
    else if (ent == "quot") out.push_back('"');
    else if (ent == "apos") out.push_back('\'');
    else if (!ent.empty() && ent[0] == '#') {
      std::uint32_t cp = 0;
      bool hex = ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X');
      try {
        cp = static_cast<std::uint32_t>(std::stoul(std::string(ent.substr(hex ? 2 : 1)), nullptr, hex ? 16 : 10));
      } catch (...) {
        cp = ' ';
      }
      std::string enc;
      if (cp < 0x80) enc.push_back(static_cast<char>(cp));
      else if (cp < 0x800) { enc.push_back(static_cast<char>(0xC0 | (cp >> 6))); enc.push_back(static_cast<char>(0x80 | (cp & 0x3F))); }
      else if (cp < 0x10000) { enc.push_back(static_cast<char>(0xE0 | (cp >> 12))); enc.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F))); enc.push_back(static_cast<char>(0x80 | (cp & 0x3F))); }
      else enc = " ";
      out += enc;
    } else {
      out.append(s.substr(i, semi - i + 1));
    }
    i = semi;
  }
  return out;
}

/// Collects the literal strings shown by Tj/TJ/'/" operators in a content
/// stream. Pieces of a TJ array are joined; a kerning gap wider than 200
/// thousandths of an em counts as a word break.
inline void pdf_show_strings(std::string_view stream, std::string& out) {
  bool in_text = false;
  bool in_array = false;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    char c = stream[i];
    if (!in_text) {
      if (c == 'B' && stream.substr(i, 2) == "BT") { in_text = true; ++i; }
      continue;
    }
    if (c == 'E' && stream.substr(i, 2) == "ET") { in_text = false; out.push_back('\n'); ++i; continue; }
    if (c == '[') { in_array = true; continue; }
    if (c == ']') { in_array = false; out.push_back(' '); continue; }
    if (in_array && (c == '-' || (c >= '0' && c <= '9') || c == '.')) {
      std::size_t j = i + 1;
      while (j < stream.size() && ((stream[j] >= '0' && stream[j] <= '9') || stream[j] == '.')) ++j;
      double kern = 0;
      try { kern = std::stod(std::string(stream.substr(i, j - i))); } catch (...) {}
      if (kern < -200) out.push_back(' ');
      i = j - 1;
      continue;
    }
    if (c != '(') continue;
    int depth = 1;
    ++i;
    for (; i < stream.size(); ++i) {
      char d = stream[i];
      if (d == '\\' && i + 1 < stream.size()) {
        char e = stream[++i];
        switch (e) {
          case 'n': out.push_back('\n'); break;
          case 'r': out.push_back('\r'); break;
          case 't': out.push_back('\t'); break;
          case 'b': case 'f': out.push_back(' '); break;
          default:
            if (e >= '0' && e <= '7') {
              int v = e - '0';
              for (int k = 0; k < 2 && i + 1 < stream.size() && stream[i + 1] >= '0' && stream[i + 1] <= '7'; ++k)
                v = v * 8 + (stream[++i] - '0');
              out.push_back(static_cast<char>(v));
            } else if (e != '\n' && e != '\r') {
              out.push_back(e);
            }
        }
        continue;
      }
      if (d == '(') ++depth;
      if (d == ')' && --depth == 0) break;
      out.push_back(d);
    }
    if (!in_array) out.push_back(' ');
  }
}

}  // namespace detail

inline std::string read_plain_text(BytesView data) { return std::string(data); }

/// Paragraph text of `word/document.xml`.
inline std::string read_docx_text(BytesView data) {
  auto xml = detail::zip_member(data, "word/document.xml");
  if (!xml) throw Error(Errc::UnsupportedType, "DOCX without a readable word/document.xml");
  std::string text;
  std::string_view x = *xml;
  for (std::size_t i = 0; i < x.size();) {
    if (x[i] == '<') {
      auto close = x.find('>', i);
      if (close == std::string_view::npos) break;
      auto tag = x.substr(i + 1, close - i - 1);
      if (tag == "/w:p" || tag.starts_with("w:br") || tag.starts_with("w:tab")) text.push_back(' ');
      i = close + 1;
    } else {
      auto next = x.find('<', i);
      text += detail::decode_xml_entities(x.substr(i, next - i));
      i = next == std::string_view::npos ? x.size() : next;
    }
  }
  return text;
}

/// Best-effort text of a PDF: literal strings in BT/ET blocks of every
/// content stream, inflating FlateDecode streams. Does not interpret fonts
/// or CMaps.
inline std::string read_pdf_text(BytesView data) {
  std::string text;
  std::size_t at = 0;
  while ((at = data.find("stream", at)) != std::string_view::npos) {
    if (at >= 3 && data.substr(at - 3, 3) == "end") { at += 6; continue; }
    std::size_t dict_start = data.rfind("<<", at);
    std::string_view dict = dict_start == std::string_view::npos ? std::string_view{} : data.substr(dict_start, at - dict_start);
    std::size_t begin = at + 6;
    if (begin < data.size() && data[begin] == '\r') ++begin;
    if (begin < data.size() && data[begin] == '\n') ++begin;
    std::size_t end = data.find("endstream", begin);
    if (end == std::string_view::npos) break;
    auto body = data.substr(begin, end - begin);
    if (dict.find("/FlateDecode") != std::string_view::npos) {
      if (auto inflated = detail::inflate_bytes(body, 15)) detail::pdf_show_strings(*inflated, text);
    } else if (dict.find("/Filter") == std::string_view::npos) {
      detail::pdf_show_strings(body, text);
    }
    at = end + 9;
  }
  return text;
}

using TextReader = std::function<std::string(BytesView)>;

/// Format-indexed text readers; replace an entry to plug in a better parser.
class TextReaders {
 public:
  TextReaders() {
    readers_[ContentFormat::PlainText] = read_plain_text;
    readers_[ContentFormat::DOCX] = read_docx_text;
    readers_[ContentFormat::PDF] = read_pdf_text;
  }

  void set(ContentFormat format, TextReader reader) { readers_[format] = std::move(reader); }

  std::string read(ContentFormat format, BytesView data) const {
    auto it = readers_.find(format);
    if (it == readers_.end()) throw Error(Errc::UnsupportedType, "no text reader for format");
    return it->second(data);
  }

 private:
  std::map<ContentFormat, TextReader> readers_;
};

}  // namespace cobs
