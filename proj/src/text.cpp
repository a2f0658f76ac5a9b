#include "lowres_rag/text.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace lowres_rag::text {

namespace {

icu::UnicodeString to_unicode(std::string_view s) {
    return icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
}

std::string to_utf8(const icu::UnicodeString& u) {
    std::string out;
    u.toUTF8String(out);
    return out;
}

std::u32string to_u32(std::string_view s) {
    std::u32string out;
    const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
    const auto len = static_cast<int32_t>(s.size());
    int32_t i = 0;
    while (i < len) {
        UChar32 c;
        U8_NEXT(bytes, i, len, c);
        out.push_back(c < 0 ? static_cast<char32_t>(0xFFFD) : static_cast<char32_t>(c));
    }
    return out;
}

std::string from_u32(std::u32string_view s) {
    icu::UnicodeString u;
    for (char32_t c : s) u.append(static_cast<UChar32>(c));
    return to_utf8(u);
}

bool is_space(char32_t c) { return u_isUWhiteSpace(static_cast<UChar32>(c)); }
bool is_punct(char32_t c) { return u_ispunct(static_cast<UChar32>(c)); }
bool is_alnum(char32_t c) {
    return u_isalnum(static_cast<UChar32>(c)) || u_hasBinaryProperty(static_cast<UChar32>(c), UCHAR_ALPHABETIC);
}

std::vector<std::u32string> split_whitespace(const std::u32string& s) {
    std::vector<std::u32string> out;
    std::u32string cur;
    for (char32_t c : s) {
        if (is_space(c)) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

}  // namespace

std::string fold(std::string_view s) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw std::runtime_error("ICU NFC normalizer unavailable");
    icu::UnicodeString u = to_unicode(s);
    u.toLower(icu::Locale::getRoot());
    icu::UnicodeString composed = nfc->normalize(u, status);
    if (U_FAILURE(status)) throw std::runtime_error("ICU normalization failed");
    return to_utf8(composed);
}

std::string normalize_term(std::string_view s) {
    std::u32string u = to_u32(fold(s));
    std::size_t b = 0;
    std::size_t e = u.size();
    while (e > b && (is_space(u[e - 1]) || is_punct(u[e - 1]))) --e;
    while (b < e) {
        const char32_t c = u[b];
        if (is_space(c)) {
            ++b;
            continue;
        }
        if (!is_punct(c)) break;
        if (c == U'-' && b + 1 < e && is_alnum(u[b + 1])) break;
        ++b;
    }
    return from_u32(std::u32string_view(u).substr(b, e - b));
}

std::vector<std::string> word_tokens(std::string_view s) {
    std::vector<std::string> out;
    for (const auto& piece : split_whitespace(to_u32(s))) {
        std::string t = normalize_term(from_u32(piece));
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

std::vector<std::string> query_terms(std::string_view s) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    auto add = [&](std::string t) {
        if (!t.empty() && seen.insert(t).second) out.push_back(std::move(t));
    };
    for (auto& tok : word_tokens(s)) {
        std::vector<std::string> pieces = split(tok, '-');
        add(tok);
        if (pieces.size() < 2) continue;
        for (std::size_t i = 0; i < pieces.size(); ++i) {
            if (pieces[i].empty()) continue;
            add(normalize_term(i == 0 ? pieces[i] : "-" + pieces[i]));
        }
    }
    return out;
}

std::vector<std::string> metric_tokens(std::string_view s) {
    std::vector<std::string> out;
    for (const auto& piece : split_whitespace(to_u32(fold(s)))) {
        std::size_t b = 0;
        std::size_t e = piece.size();
        std::vector<std::string> tail;
        while (b < e && is_punct(piece[b])) out.push_back(from_u32(piece.substr(b++, 1)));
        while (e > b && is_punct(piece[e - 1])) tail.push_back(from_u32(piece.substr(--e, 1)));
        if (e > b) out.push_back(from_u32(piece.substr(b, e - b)));
        out.insert(out.end(), tail.rbegin(), tail.rend());
    }
    return out;
}

std::vector<std::string> code_points(std::string_view s) {
    std::vector<std::string> out;
    for (char32_t c : to_u32(s)) out.push_back(from_u32(std::u32string_view(&c, 1)));
    return out;
}

std::size_t char_length(std::string_view s) { return to_u32(s).size(); }

std::string trim(std::string_view s) {
    const auto* ws = " \t\r\n\f\v";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            return out;
        }
        out.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

}  // namespace lowres_rag::text
