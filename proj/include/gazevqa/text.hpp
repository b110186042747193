#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gazevqa::text {

// Throws FormatError on invalid UTF-8.
std::vector<char32_t> utf8_decode(const std::string& s);
std::string utf8_encode(const std::vector<char32_t>& cps);

// Number of Unicode code points.
std::size_t char_count(const std::string& s);

// Full NFKC normalization (merges full-width/half-width variants among others).
std::string nfkc(const std::string& s);

// Strips leading/trailing ASCII whitespace and U+3000.
std::string trim(const std::string& s);

// nfkc + trim; the canonical form used for uniqueness counting and matching.
std::string canonical(const std::string& s);

// canonical + strip of trailing sentence punctuation (U+3002, U+FF0E, '.');
// the form answers are compared under.
std::string answer_key(const std::string& s);

bool contains(const std::string& haystack, const std::string& needle);

} // namespace gazevqa::text
