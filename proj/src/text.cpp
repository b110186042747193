#include "gazevqa/text.hpp"

#include "gazevqa/errors.hpp"

#include <unicode/unorm2.h>
#include <unicode/ustring.h>
#include <unicode/utypes.h>

namespace gazevqa::text {

std::vector<char32_t> utf8_decode(const std::string& s) {
    std::vector<char32_t> out;
    out.reserve(s.size());
    std::size_t i = 0;
    const auto fail = [&](std::size_t pos) -> char32_t {
        throw FormatError("invalid UTF-8 at byte " + std::to_string(pos));
    };
    while (i < s.size()) {
        const unsigned char b0 = static_cast<unsigned char>(s[i]);
        char32_t cp = 0;
        std::size_t len = 0;
        if (b0 < 0x80) {
            cp = b0;
            len = 1;
        } else if ((b0 & 0xE0) == 0xC0) {
            cp = b0 & 0x1F;
            len = 2;
        } else if ((b0 & 0xF0) == 0xE0) {
            cp = b0 & 0x0F;
            len = 3;
        } else if ((b0 & 0xF8) == 0xF0) {
            cp = b0 & 0x07;
            len = 4;
        } else {
            fail(i);
        }
        if (i + len > s.size()) {
            fail(i);
        }
        for (std::size_t k = 1; k < len; ++k) {
            const unsigned char bk = static_cast<unsigned char>(s[i + k]);
            if ((bk & 0xC0) != 0x80) {
                fail(i + k);
            }
            cp = (cp << 6) | (bk & 0x3F);
        }
        // reject overlong encodings and surrogates
        if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
            (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
            fail(i);
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

std::string utf8_encode(const std::vector<char32_t>& cps) {
    std::string out;
    out.reserve(cps.size() * 3);
    for (const char32_t cp : cps) {
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }
    return out;
}

std::size_t char_count(const std::string& s) {
    return utf8_decode(s).size();
}

std::string nfkc(const std::string& s) {
    if (s.empty()) {
        return s;
    }
    UErrorCode status = U_ZERO_ERROR;
    const UNormalizer2* norm = unorm2_getNFKCInstance(&status);
    if (U_FAILURE(status)) {
        throw Error("ICU NFKC normalizer unavailable");
    }

    std::vector<UChar> src(s.size() + 1);
    int32_t src_len = 0;
    u_strFromUTF8(src.data(), static_cast<int32_t>(src.size()), &src_len, s.data(),
                  static_cast<int32_t>(s.size()), &status);
    if (U_FAILURE(status)) {
        throw FormatError("invalid UTF-8 in text: " + s.substr(0, 32));
    }

    std::vector<UChar> dst(src_len * 3 + 16);
    int32_t dst_len = unorm2_normalize(norm, src.data(), src_len, dst.data(),
                                       static_cast<int32_t>(dst.size()), &status);
    if (status == U_BUFFER_OVERFLOW_ERROR) {
        status = U_ZERO_ERROR;
        dst.resize(dst_len + 1);
        dst_len = unorm2_normalize(norm, src.data(), src_len, dst.data(),
                                   static_cast<int32_t>(dst.size()), &status);
    }
    if (U_FAILURE(status)) {
        throw Error("NFKC normalization failed");
    }

    std::string out(static_cast<std::size_t>(dst_len) * 3 + 4, '\0');
    int32_t out_len = 0;
    u_strToUTF8(out.data(), static_cast<int32_t>(out.size()), &out_len, dst.data(), dst_len, &status);
    if (U_FAILURE(status)) {
        throw Error("UTF-8 re-encode failed");
    }
    out.resize(static_cast<std::size_t>(out_len));
    return out;
}

std::string trim(const std::string& s) {
    auto cps = utf8_decode(s);
    const auto is_space = [](char32_t c) {
        return c == U' ' || c == U'\t' || c == U'\r' || c == U'\n' || c == 0x3000;
    };
    std::size_t b = 0;
    std::size_t e = cps.size();
    while (b < e && is_space(cps[b])) {
        ++b;
    }
    while (e > b && is_space(cps[e - 1])) {
        --e;
    }
    return utf8_encode(std::vector<char32_t>(cps.begin() + b, cps.begin() + e));
}

std::string canonical(const std::string& s) {
    return trim(nfkc(s));
}

std::string answer_key(const std::string& s) {
    auto cps = utf8_decode(canonical(s));
    while (!cps.empty()) {
        const char32_t c = cps.back();
        if (c == 0x3002 || c == 0xFF0E || c == U'.') {
            cps.pop_back();
        } else {
            break;
        }
    }
    return utf8_encode(cps);
}

bool contains(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

} // namespace gazevqa::text
