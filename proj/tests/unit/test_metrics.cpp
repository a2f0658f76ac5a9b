#include <doctest.h>

#include <cmath>
#include <random>

#include "../oracles.hpp"
#include "lowres_rag/errors.hpp"
#include "lowres_rag/metrics.hpp"

using namespace lowres_rag;
using namespace lowres_rag::metrics;

namespace {

TranslationRecord rec(std::string q, std::string r) {
    TranslationRecord t;
    t.query = std::move(q);
    t.response = std::move(r);
    return t;
}

}  // namespace

TEST_CASE("tokenize") {
    CHECK(tokenize("The cat, sat.") == TokenSeq{"the", "cat", ",", "sat", "."});
}

TEST_CASE("bleu hand cases") {
    CHECK(bleu(tokenize("the cat sat"), {tokenize("the cat sat on the mat")}, 2, Smoothing::none) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-9));
    CHECK(std::abs(bleu(tokenize("the cat sat"), {tokenize("the cat sat on the mat")}, 2, Smoothing::none) -
                   0.36788) < 1e-5);
    auto s = tokenize("a b c d e");
    CHECK(bleu(s, {s}) == 1.0);
    CHECK(bleu(tokenize("a b c d x y"), {tokenize("a b c x d y")}, 4, Smoothing::none) == 0.0);
    CHECK(bleu({}, {s}) == 0.0);
    CHECK_THROWS_AS(bleu(s, {}), EmptyReferences);
}

TEST_CASE("bleu clipping and reference length") {
    // "the the the" vs "the cat": clipped unigram 1/3
    CHECK(bleu(tokenize("the the the"), {tokenize("the cat")}, 1, Smoothing::none) == doctest::Approx(1.0 / 3.0));
    auto st = bleu_stats(tokenize("a b c d"), {tokenize("a b"), tokenize("a b c d e f"), tokenize("a b c d e")});
    CHECK(st.reference_length == 5);
    st = bleu_stats(tokenize("a b c"), {tokenize("a b"), tokenize("a b c d")});
    CHECK(st.reference_length == 2);
}

TEST_CASE("add_one smoothing") {
    auto c = tokenize("a b c x");
    auto r = tokenize("a b c d");
    const double p1 = 3.0 / 4, p2 = (2.0 + 1) / (3 + 1), p3 = (1.0 + 1) / (2 + 1), p4 = (0.0 + 1) / (1 + 1);
    CHECK(bleu(c, {r}) == doctest::Approx(std::pow(p1 * p2 * p3 * p4, 0.25)).epsilon(1e-12));
    CHECK(bleu(c, {r}, 4, Smoothing::none) == 0.0);
}

TEST_CASE("bleu matches pooled-count oracle on random corpora") {
    std::mt19937_64 rng(21);
    const std::vector<std::string> vocab{"a", "b", "c", "d", "e", "f"};
    for (int trial = 0; trial < 40; ++trial) {
        BleuStats pooled;
        oracle::NgramTally t;
        for (int s = 0; s < 5; ++s) {
            auto gen = [&](std::size_t len) {
                TokenSeq out;
                for (std::size_t i = 0; i < len; ++i) out.push_back(vocab[rng() % vocab.size()]);
                return out;
            };
            auto c = gen(1 + rng() % 8);
            std::vector<TokenSeq> refs{gen(1 + rng() % 8), gen(1 + rng() % 8)};
            pooled += bleu_stats(c, refs);
            oracle::tally(t, c, refs, 4);
        }
        for (auto sm : {Smoothing::none, Smoothing::add_one})
            CHECK(bleu_from_stats(pooled, sm) ==
                  doctest::Approx(oracle::bleu_from_tally(t, sm == Smoothing::add_one)).epsilon(1e-12));
    }
}

TEST_CASE("rouge") {
    auto p = rouge_n(tokenize("the cat"), tokenize("the cat sat"), 1);
    CHECK(p.precision == doctest::Approx(1.0));
    CHECK(std::abs(p.recall - 0.6667) < 1e-4);
    CHECK(std::abs(p.f1 - 0.8) < 1e-4);
    p = rouge_n(tokenize("x y"), tokenize("the cat"), 1);
    CHECK(p.f1 == 0.0);
    p = rouge_n(tokenize("a b c"), tokenize("a b c"), 2);
    CHECK(p.f1 == 1.0);

    auto l = rouge_l(tokenize("a c e"), tokenize("a b c d e"));
    CHECK(l.precision == 1.0);
    CHECK(l.recall == 0.6);
    CHECK(l.f1 == 0.75);
    l = rouge_l({}, tokenize("a"));
    CHECK(l.precision == 0.0);
    CHECK(l.recall == 0.0);
    CHECK(l.f1 == 0.0);
    CHECK(lcs_length(tokenize("a b c b d a b"), tokenize("b d c a b a")) == 4);
}

TEST_CASE("bertscore") {
    OfflineEmbedder emb;
    auto s = tokenize("kay wasi hatun");
    CHECK(std::abs(bertscore(s, s, emb).f1 - 1.0) < 1e-9);
    CHECK(bertscore(tokenize("xyz"), tokenize("abc"), emb).precision < 0.05);

    auto c = tokenize("the big house");
    auto r = tokenize("large houses");
    double p = 0, rc = 0;
    for (const auto& a : c) {
        double best = 0;
        for (const auto& b : r) best = std::max(best, oracle::cosine(emb.embed(a), emb.embed(b)));
        p += std::clamp(best, 0.0, 1.0);
    }
    for (const auto& b : r) {
        double best = 0;
        for (const auto& a : c) best = std::max(best, oracle::cosine(emb.embed(a), emb.embed(b)));
        rc += std::clamp(best, 0.0, 1.0);
    }
    p /= 3;
    rc /= 2;
    auto got = bertscore(c, r, emb);
    CHECK(std::abs(got.precision - p) < 1e-9);
    CHECK(std::abs(got.recall - rc) < 1e-9);
    CHECK(std::abs(got.f1 - 2 * p * rc / (p + rc)) < 1e-9);
}

TEST_CASE("evaluate_corpus") {
    OfflineEmbedder emb;
    std::vector<ParallelPair> pairs{{"wasi", {"the house", "a house"}, "p0"}, {"hatun", {"it is big"}, "p1"}};
    auto perfect = evaluate_corpus({rec("wasi", "the house"), rec("hatun", "it is big")}, pairs, {}, emb, "echo");
    CHECK(perfect.bleu == 1.0);
    CHECK(perfect.rouge == 1.0);
    CHECK(perfect.bert_f1 >= 0.999);
    CHECK(perfect.n_sentences == 2);

    std::vector<ParallelPair> one{{"wasi", {"the house is big today"}, "p0"}};
    auto rep = evaluate_corpus({rec("wasi", "the house is big")}, one, {}, emb, "s");
    CHECK(rep.bleu == bleu(tokenize("the house is big"), {tokenize("the house is big today")}));

    try {
        evaluate_corpus({rec("wasi", "x"), rec("mayu", "y")}, pairs, {}, emb, "s");
        FAIL("expected AlignmentMismatch");
    } catch (const AlignmentMismatch& e) {
        CHECK(std::string(e.what()).find("p1") != std::string::npos);
    }
    CHECK_THROWS_AS(evaluate_corpus({rec("wasi", "x")}, pairs, {}, emb, "s"), AlignmentMismatch);

    EvalConfig cfg;
    cfg.rouge_variant = RougeVariant::rougeL;
    auto rl = evaluate_corpus({rec("wasi", "a house"), rec("hatun", "big")}, pairs, cfg, emb, "s");
    CHECK(rl.rouge_variant == RougeVariant::rougeL);
    CHECK(rl.rouge == doctest::Approx((1.0 + 0.5) / 2));
}

TEST_CASE("table layout") {
    MetricReport a;
    a.system = "GPT + RAG";
    a.bleu = 0.235;
    MetricReport b;
    b.system = "LLama";
    auto t = render_table({a, b});
    CHECK(t.find("Model") != std::string::npos);
    CHECK(t.find("Rouge Score") != std::string::npos);
    CHECK(t.find("BERT-style Score") != std::string::npos);
    CHECK(t.find("GPT + RAG") < t.find("LLama"));
    CHECK(t.find("0.235") != std::string::npos);
    CHECK(render_table({a}, true).find("23.5") != std::string::npos);
}
