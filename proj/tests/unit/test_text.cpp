#include <doctest.h>

#include "lowres_rag/text.hpp"

using namespace lowres_rag::text;
using V = std::vector<std::string>;

TEST_CASE("fold lowercases and composes") {
    CHECK(fold("WASI") == "wasi");
    CHECK(fold("PUN\xCC\x83UN") == "pu\xC3\xB1un");  // N + combining tilde
    CHECK(fold("Ñ") == "ñ");
}

TEST_CASE("normalize_term") {
    CHECK(normalize_term("  Wasi, ") == "wasi");
    CHECK(normalize_term("-kuna") == "-kuna");
    CHECK(normalize_term("\"-mi\"") == "-mi");
    CHECK(normalize_term("--") == "");
    CHECK(normalize_term("?!") == "");
    for (const char* s : {"Wasi-kuna!", "-KUNA", "¿allillanchu?", "a.b"})
        CHECK(normalize_term(normalize_term(s)) == normalize_term(s));
}

TEST_CASE("query_terms split hyphens") {
    CHECK(query_terms("wasi-kuna hatun") == V{"wasi-kuna", "wasi", "-kuna", "hatun"});
    CHECK(query_terms("wasikuna") == V{"wasikuna"});
    CHECK(query_terms("wasi wasi, WASI") == V{"wasi"});
    CHECK(query_terms("") .empty());
}

TEST_CASE("metric_tokens split punctuation") {
    CHECK(metric_tokens("Hello, how are you?") == V{"hello", ",", "how", "are", "you", "?"});
    CHECK(metric_tokens("  ") .empty());
    CHECK(metric_tokens("\"ok\"") == V{"\"", "ok", "\""});
}

TEST_CASE("code point helpers") {
    CHECK(char_length("puñun") == 5);
    CHECK(code_points("añ") == V{"a", "ñ"});
    CHECK(split("a\tb\t", '\t') == V{"a", "b", ""});
    CHECK(join({"a", "b"}, "; ") == "a; b");
    CHECK(trim(" \tx y\n") == "x y");
}
