#include "kge/text.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "kge/common.hpp"

namespace kge::text {
namespace {

std::vector<UChar32> decode(std::string_view s) {
  std::vector<UChar32> out;
  out.reserve(s.size());
  const auto* bytes = reinterpret_cast<const std::uint8_t*>(s.data());
  const auto len = static_cast<std::int32_t>(s.size());
  std::int32_t i = 0;
  while (i < len) {
    UChar32 c = 0;
    U8_NEXT(bytes, i, len, c);
    if (c < 0) throw ValidationError("invalid UTF-8 sequence");
    out.push_back(c);
  }
  return out;
}

void append(std::string& out, UChar32 c) {
  char buf[U8_MAX_LENGTH];
  std::int32_t n = 0;
  UBool err = false;
  U8_APPEND(reinterpret_cast<std::uint8_t*>(buf), n, U8_MAX_LENGTH, c, err);
  (void)err;
  out.append(buf, static_cast<std::size_t>(n));
}

bool is_space(UChar32 c) { return u_isUWhiteSpace(c) || c == 0x09 || c == 0x0A || c == 0x0D; }

bool is_punct(UChar32 c) {
  if (u_ispunct(c)) return true;
  const auto cat = u_charType(c);
  return cat == U_MATH_SYMBOL || cat == U_CURRENCY_SYMBOL || cat == U_MODIFIER_SYMBOL ||
         cat == U_OTHER_SYMBOL;
}

}  // namespace

std::string nfc(std::string_view utf8) {
  decode(utf8);  // validate
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw RuntimeError("ICU NFC normalizer unavailable");
  const auto src = icu::UnicodeString::fromUTF8(icu::StringPiece(utf8.data(), static_cast<std::int32_t>(utf8.size())));
  icu::UnicodeString dst = norm->normalize(src, status);
  if (U_FAILURE(status)) throw ValidationError("NFC normalization failed");
  std::string out;
  dst.toUTF8String(out);
  return out;
}

std::string trim(std::string_view utf8) {
  const auto cps = decode(utf8);
  std::size_t b = 0, e = cps.size();
  while (b < e && is_space(cps[b])) ++b;
  while (e > b && is_space(cps[e - 1])) --e;
  std::string out;
  for (std::size_t i = b; i < e; ++i) append(out, cps[i]);
  return out;
}

std::string lowercase(std::string_view utf8) {
  std::string out;
  out.reserve(utf8.size());
  for (UChar32 c : decode(utf8)) append(out, u_tolower(c));
  return out;
}

std::vector<std::string> split_words(std::string_view utf8) {
  std::vector<std::string> words;
  std::string cur;
  for (UChar32 c : decode(utf8)) {
    if (is_space(c)) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else if (is_punct(c)) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
      std::string p;
      append(p, c);
      words.push_back(std::move(p));
    } else {
      append(cur, c);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::vector<std::string> code_points(std::string_view utf8) {
  std::vector<std::string> out;
  for (UChar32 c : decode(utf8)) {
    std::string s;
    append(s, c);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(line.substr(start));
      break;
    }
    parts.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

}  // namespace kge::text
