#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lowres_rag/embedding.hpp"
#include "lowres_rag/llm_gateway.hpp"
#include "lowres_rag/resource_store.hpp"

namespace lowres_rag::metrics {

using TokenSeq = std::vector<std::string>;

/// NFC, lowercase, punctuation split into separate tokens.
TokenSeq tokenize(std::string_view s);

enum class Smoothing { none, add_one };
enum class RougeVariant { rouge1, rouge2, rougeL };

std::string_view to_string(Smoothing s);
Smoothing smoothing_from_string(std::string_view s);
std::string_view to_string(RougeVariant v);
RougeVariant rouge_variant_from_string(std::string_view s);

/// Clipped n-gram matches and candidate n-gram totals for n = 1..max_n, plus
/// candidate length and effective (closest, ties shorter) reference length.
struct BleuStats {
    std::vector<std::size_t> matches;
    std::vector<std::size_t> totals;
    std::size_t candidate_length = 0;
    std::size_t reference_length = 0;

    BleuStats& operator+=(const BleuStats& other);
};

BleuStats bleu_stats(const TokenSeq& candidate, const std::vector<TokenSeq>& references, std::size_t max_n = 4);

/// Geometric mean of the n-gram precisions times the brevity penalty.
/// add_one adds 1 to numerator and denominator of every p_n with n >= 2 when
/// any of those matches is zero.
double bleu_from_stats(const BleuStats& stats, Smoothing smoothing);

double bleu(const TokenSeq& candidate, const std::vector<TokenSeq>& references, std::size_t max_n = 4,
            Smoothing smoothing = Smoothing::add_one);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

Prf rouge_n(const TokenSeq& candidate, const TokenSeq& reference, std::size_t n);
Prf rouge_l(const TokenSeq& candidate, const TokenSeq& reference);
std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b);

/// Greedy max-cosine matching of token embeddings, clipped to [0, 1].
Prf bertscore(const TokenSeq& candidate, const TokenSeq& reference, const EmbeddingProvider& embedder);

struct EvalConfig {
    RougeVariant rouge_variant = RougeVariant::rouge1;
    Smoothing bleu_smoothing = Smoothing::add_one;
    std::size_t max_n = 4;
};

struct MetricReport {
    std::string system;
    RougeVariant rouge_variant = RougeVariant::rouge1;
    Smoothing bleu_smoothing = Smoothing::add_one;
    double rouge = 0.0;
    double bleu = 0.0;
    double bert_precision = 0.0;
    double bert_recall = 0.0;
    double bert_f1 = 0.0;
    std::size_t n_sentences = 0;
};

/// Corpus scores for one system. Records align with pairs by position and
/// must carry the pair's source as their query. BLEU pools n-gram statistics
/// over all sentences; ROUGE and BERT-style scores are sentence means, each
/// sentence taking its best-scoring reference.
MetricReport evaluate_corpus(const std::vector<TranslationRecord>& records, const std::vector<ParallelPair>& pairs,
                             const EvalConfig& config, const EmbeddingProvider& embedder, std::string system);

nlohmann::json report_to_json(const MetricReport& report);

/// Aligned comparison table, one row per system in the given order.
std::string render_table(const std::vector<MetricReport>& reports, bool bleu_x100 = false);

}  // namespace lowres_rag::metrics
