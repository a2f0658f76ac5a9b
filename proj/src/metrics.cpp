#include "lowres_rag/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <unordered_map>

#include "lowres_rag/errors.hpp"
#include "lowres_rag/retrieval.hpp"
#include "lowres_rag/text.hpp"

namespace lowres_rag::metrics {

using nlohmann::json;

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngram_counts(const TokenSeq& toks, std::size_t n) {
    NgramCounts out;
    if (n == 0 || toks.size() < n) return out;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) ++out[TokenSeq(toks.begin() + i, toks.begin() + i + n)];
    return out;
}

double harmonic(double p, double r) { return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

Prf best_over_references(const std::vector<Prf>& scores) {
    Prf best;
    bool first = true;
    for (const auto& s : scores)
        if (first || s.f1 > best.f1) {
            best = s;
            first = false;
        }
    return best;
}

}  // namespace

TokenSeq tokenize(std::string_view s) { return text::metric_tokens(s); }

std::string_view to_string(Smoothing s) { return s == Smoothing::none ? "none" : "add_one"; }

Smoothing smoothing_from_string(std::string_view s) {
    if (s == "none") return Smoothing::none;
    if (s == "add_one") return Smoothing::add_one;
    throw ConfigError("unknown BLEU smoothing: " + std::string(s));
}

std::string_view to_string(RougeVariant v) {
    switch (v) {
        case RougeVariant::rouge1: return "rouge1";
        case RougeVariant::rouge2: return "rouge2";
        case RougeVariant::rougeL: return "rougeL";
    }
    return "rouge1";
}

RougeVariant rouge_variant_from_string(std::string_view s) {
    if (s == "rouge1") return RougeVariant::rouge1;
    if (s == "rouge2") return RougeVariant::rouge2;
    if (s == "rougeL") return RougeVariant::rougeL;
    throw ConfigError("unknown ROUGE variant: " + std::string(s));
}

BleuStats& BleuStats::operator+=(const BleuStats& other) {
    if (matches.size() < other.matches.size()) {
        matches.resize(other.matches.size(), 0);
        totals.resize(other.totals.size(), 0);
    }
    for (std::size_t i = 0; i < other.matches.size(); ++i) {
        matches[i] += other.matches[i];
        totals[i] += other.totals[i];
    }
    candidate_length += other.candidate_length;
    reference_length += other.reference_length;
    return *this;
}

BleuStats bleu_stats(const TokenSeq& candidate, const std::vector<TokenSeq>& references, std::size_t max_n) {
    if (references.empty()) throw EmptyReferences();
    if (max_n == 0) throw ConfigError("max_n must be at least 1");
    BleuStats st;
    st.matches.assign(max_n, 0);
    st.totals.assign(max_n, 0);
    st.candidate_length = candidate.size();

    const std::size_t c = candidate.size();
    std::size_t best = references.front().size();
    for (const auto& r : references) {
        const auto diff = [c](std::size_t len) { return len > c ? len - c : c - len; };
        if (diff(r.size()) < diff(best) || (diff(r.size()) == diff(best) && r.size() < best)) best = r.size();
    }
    st.reference_length = best;

    for (std::size_t n = 1; n <= max_n; ++n) {
        NgramCounts max_ref;
        for (const auto& r : references)
            for (const auto& [g, cnt] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], cnt);
        for (const auto& [g, cnt] : ngram_counts(candidate, n)) {
            st.totals[n - 1] += cnt;
            auto it = max_ref.find(g);
            if (it != max_ref.end()) st.matches[n - 1] += std::min(cnt, it->second);
        }
    }
    return st;
}

double bleu_from_stats(const BleuStats& st, Smoothing smoothing) {
    if (st.candidate_length == 0 || st.matches.empty()) return 0.0;
    bool smooth = false;
    if (smoothing == Smoothing::add_one)
        for (std::size_t i = 1; i < st.matches.size(); ++i) smooth = smooth || st.matches[i] == 0;

    double log_sum = 0.0;
    for (std::size_t i = 0; i < st.matches.size(); ++i) {
        double m = static_cast<double>(st.matches[i]);
        double t = static_cast<double>(st.totals[i]);
        if (smooth && i >= 1) {
            m += 1.0;
            t += 1.0;
        }
        if (m == 0.0 || t == 0.0) return 0.0;
        log_sum += std::log(m / t);
    }
    const double c = static_cast<double>(st.candidate_length);
    const double r = static_cast<double>(st.reference_length);
    const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
    return bp * std::exp(log_sum / static_cast<double>(st.matches.size()));
}

double bleu(const TokenSeq& candidate, const std::vector<TokenSeq>& references, std::size_t max_n,
            Smoothing smoothing) {
    return bleu_from_stats(bleu_stats(candidate, references, max_n), smoothing);
}

Prf rouge_n(const TokenSeq& candidate, const TokenSeq& reference, std::size_t n) {
    if (n == 0) throw ConfigError("ROUGE-N needs n >= 1");
    const auto cand = ngram_counts(candidate, n);
    const auto ref = ngram_counts(reference, n);
    std::size_t cand_total = 0, ref_total = 0, overlap = 0;
    for (const auto& [g, cnt] : cand) cand_total += cnt;
    for (const auto& [g, cnt] : ref) {
        ref_total += cnt;
        if (auto it = cand.find(g); it != cand.end()) overlap += std::min(cnt, it->second);
    }
    if (cand_total == 0 || ref_total == 0) return {};
    Prf out;
    out.precision = static_cast<double>(overlap) / static_cast<double>(cand_total);
    out.recall = static_cast<double>(overlap) / static_cast<double>(ref_total);
    out.f1 = 2.0 * static_cast<double>(overlap) / static_cast<double>(cand_total + ref_total);
    return out;
}

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

Prf rouge_l(const TokenSeq& candidate, const TokenSeq& reference) {
    if (candidate.empty() || reference.empty()) return {};
    const double l = static_cast<double>(lcs_length(candidate, reference));
    Prf out;
    out.precision = l / static_cast<double>(candidate.size());
    out.recall = l / static_cast<double>(reference.size());
    out.f1 = 2.0 * l / static_cast<double>(candidate.size() + reference.size());
    return out;
}

Prf bertscore(const TokenSeq& candidate, const TokenSeq& reference, const EmbeddingProvider& embedder) {
    if (candidate.empty() || reference.empty()) return {};
    const auto cand_vecs = embedder.embed_batch(candidate);
    const auto ref_vecs = embedder.embed_batch(reference);

    std::vector<double> best_for_cand(candidate.size(), -1.0);
    std::vector<double> best_for_ref(reference.size(), -1.0);
    for (std::size_t i = 0; i < candidate.size(); ++i)
        for (std::size_t j = 0; j < reference.size(); ++j) {
            const double s = cosine_similarity(cand_vecs[i], ref_vecs[j]);
            best_for_cand[i] = std::max(best_for_cand[i], s);
            best_for_ref[j] = std::max(best_for_ref[j], s);
        }
    auto clipped_mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += std::clamp(x, 0.0, 1.0);
        return std::clamp(s / static_cast<double>(v.size()), 0.0, 1.0);
    };
    Prf out;
    out.precision = clipped_mean(best_for_cand);
    out.recall = clipped_mean(best_for_ref);
    out.f1 = harmonic(out.precision, out.recall);
    return out;
}

MetricReport evaluate_corpus(const std::vector<TranslationRecord>& records, const std::vector<ParallelPair>& pairs,
                             const EvalConfig& config, const EmbeddingProvider& embedder, std::string system) {
    if (records.size() != pairs.size())
        throw AlignmentMismatch("system '" + system + "' has " + std::to_string(records.size()) +
                                " records for " + std::to_string(pairs.size()) + " parallel pairs");
    if (pairs.empty()) throw AlignmentMismatch("cannot evaluate an empty corpus");

    MetricReport rep;
    rep.system = std::move(system);
    rep.rouge_variant = config.rouge_variant;
    rep.bleu_smoothing = config.bleu_smoothing;
    rep.n_sentences = pairs.size();

    BleuStats pooled;
    double rouge_sum = 0.0, bp_sum = 0.0, br_sum = 0.0, bf_sum = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& pair = pairs[i];
        if (text::trim(records[i].query) != text::trim(pair.source))
            throw AlignmentMismatch("record " + std::to_string(i) + " does not match pair_id " + pair.pair_id);
        const TokenSeq cand = tokenize(records[i].ok ? records[i].response : std::string());
        std::vector<TokenSeq> refs;
        for (const auto& r : pair.references) refs.push_back(tokenize(r));

        pooled += bleu_stats(cand, refs, config.max_n);

        std::vector<Prf> rouge_scores, bert_scores;
        for (const auto& ref : refs) {
            switch (config.rouge_variant) {
                case RougeVariant::rouge1: rouge_scores.push_back(rouge_n(cand, ref, 1)); break;
                case RougeVariant::rouge2: rouge_scores.push_back(rouge_n(cand, ref, 2)); break;
                case RougeVariant::rougeL: rouge_scores.push_back(rouge_l(cand, ref)); break;
            }
            bert_scores.push_back(bertscore(cand, ref, embedder));
        }
        rouge_sum += best_over_references(rouge_scores).f1;
        const Prf bert = best_over_references(bert_scores);
        bp_sum += bert.precision;
        br_sum += bert.recall;
        bf_sum += bert.f1;
    }
    const double n = static_cast<double>(pairs.size());
    rep.bleu = bleu_from_stats(pooled, config.bleu_smoothing);
    rep.rouge = rouge_sum / n;
    rep.bert_precision = bp_sum / n;
    rep.bert_recall = br_sum / n;
    rep.bert_f1 = bf_sum / n;
    return rep;
}

json report_to_json(const MetricReport& r) {
    return json{{"system", r.system},
                {"rouge_variant", to_string(r.rouge_variant)},
                {"rouge", r.rouge},
                {"bleu", r.bleu},
                {"bleu_smoothing", to_string(r.bleu_smoothing)},
                {"bert_precision", r.bert_precision},
                {"bert_recall", r.bert_recall},
                {"bert_f1", r.bert_f1},
                {"n_sentences", r.n_sentences}};
}

std::string render_table(const std::vector<MetricReport>& reports, bool bleu_x100) {
    std::size_t name_w = 5;
    for (const auto& r : reports) name_w = std::max(name_w, text::char_length(r.system));
    auto pad = [](const std::string& s, std::size_t w) {
        const auto len = text::char_length(s);
        return s + std::string(w > len ? w - len : 0, ' ');
    };
    const std::string h_rouge = "Rouge Score", h_bleu = bleu_x100 ? "BLEU (x100)" : "BLEU Score",
                      h_bert = "BERT-style Score";
    std::string out = pad("Model", name_w) + " | " + h_rouge + " | " + h_bleu + " | " + h_bert + "\n";
    out += std::string(name_w, '-') + "-+-" + std::string(h_rouge.size(), '-') + "-+-" +
           std::string(h_bleu.size(), '-') + "-+-" + std::string(h_bert.size(), '-') + "\n";
    char buf[64];
    for (const auto& r : reports) {
        out += pad(r.system, name_w) + " | ";
        std::snprintf(buf, sizeof buf, "%*.3f", static_cast<int>(h_rouge.size()), r.rouge);
        out += std::string(buf) + " | ";
        std::snprintf(buf, sizeof buf, bleu_x100 ? "%*.1f" : "%*.3f", static_cast<int>(h_bleu.size()),
                      bleu_x100 ? 100.0 * r.bleu : r.bleu);
        out += std::string(buf) + " | ";
        std::snprintf(buf, sizeof buf, "%*.3f", static_cast<int>(h_bert.size()), r.bert_f1);
        out += std::string(buf) + "\n";
    }
    return out;
}

}  // namespace lowres_rag::metrics
