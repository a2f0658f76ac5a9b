#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

// Shared Unicode text handling. Every keyword, query term and metric token in
// the toolkit goes through these functions so that matching is deterministic.
namespace lowres_rag::text {

/// NFC composition followed by full Unicode lowercasing.
std::string fold(std::string_view s);

/// Normalized form of a single term: fold(), trim whitespace, strip leading
/// and trailing punctuation. A hyphen directly in front of a letter or digit
/// survives at the start ("-kuna" stays "-kuna"). Idempotent.
std::string normalize_term(std::string_view s);

/// Whitespace-separated tokens of `s`, each passed through normalize_term();
/// tokens that normalize to nothing are dropped.
std::vector<std::string> word_tokens(std::string_view s);

/// Keyword query terms: word_tokens() plus the hyphen-split morpheme
/// candidates of every hyphenated token ("wasi-kuna" adds "wasi", "-kuna").
/// Deduplicated, first-occurrence order.
std::vector<std::string> query_terms(std::string_view s);

/// Tokens for the evaluation metrics: fold(), split on whitespace, leading and
/// trailing punctuation characters split off as one token each.
std::vector<std::string> metric_tokens(std::string_view s);

/// Unicode code points of `s` re-encoded one per string (UTF-8).
std::vector<std::string> code_points(std::string_view s);

/// Number of Unicode code points in a UTF-8 string.
std::size_t char_length(std::string_view s);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace lowres_rag::text
