// Acceptance gate: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "lowres_rag/lora_lab.hpp"
#include "lowres_rag/metrics.hpp"
#include "lowres_rag/pipeline.hpp"
#include "lowres_rag/retrieval.hpp"
#include "lowres_rag/text.hpp"

using namespace lowres_rag;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%s] %-34s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::vector<oracle::Hit> hits(const RetrievalSet& s) {
    std::vector<oracle::Hit> out;
    for (const auto& it : s.items) out.push_back({it.doc_id, it.score});
    return out;
}

bool same_ranking(const std::vector<oracle::Hit>& a, const std::vector<oracle::Hit>& b, double tol) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].doc_id != b[i].doc_id || std::abs(a[i].score - b[i].score) > tol) return false;
    return true;
}

void retrieval_oracles() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240601);
    std::size_t kw_bad = 0, vec_bad = 0, hyb_bad = 0, checks = 0;
    for (int store_no = 0; store_no < 200; ++store_no) {
        const std::size_t vocab = 1 + rng() % 40;
        auto docs = oracle::random_store(rng, 50, vocab, 8);
        std::string query;
        for (std::size_t i = 0, n = 1 + rng() % 4; i < n; ++i) query += "t" + std::to_string(rng() % vocab) + " ";
        const auto qv = oracle::random_unit(rng, 8);
        oracle::TableEmbedder emb(8, {{query, qv}});
        const auto kw = build_keyword_index(docs);
        const auto vec = build_vector_index(docs, emb);
        const auto terms = text::query_terms(query);
        const auto kw_want = oracle::keyword(docs, terms);
        kw_bad += hits(keyword_retrieve(kw, terms)) != kw_want;
        std::vector<std::pair<std::string, std::vector<double>>> raw;
        for (const auto& d : docs) raw.push_back({d.doc_id, *d.embedding});
        for (std::size_t k : {1u, 3u, 5u}) {
            ++checks;
            const auto vec_want = oracle::vector_topk(raw, qv, k);
            vec_bad += !same_ranking(hits(vector_retrieve(vec, qv, k)), vec_want, 1e-12);
            std::set<std::string> want;
            for (const auto& h : kw_want) want.insert(h.doc_id);
            for (const auto& h : vec_want) want.insert(h.doc_id);
            const auto got = hybrid_retrieve(kw, vec, emb, query, k).doc_ids();
            hyb_bad += got.size() != want.size() || std::set<std::string>(got.begin(), got.end()) != want;
        }
    }
    const double secs = seconds_since(t0);
    std::ostringstream d;
    d << "200 stores, " << checks << " K-queries; mismatches kw=" << kw_bad << " vec=" << vec_bad
      << " hybrid=" << hyb_bad << "; " << fmt("%.2fs", secs);
    report("retrieval oracle equivalence", kw_bad + vec_bad + hyb_bad == 0 && secs < 10.0, d.str());
}

void cosine_properties() {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> pos(0.01, 100.0);
    std::size_t bad = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t dim = 1 + rng() % 16;
        std::vector<double> u(dim), v(dim), w(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            u[j] = n(rng);
            v[j] = n(rng);
            w[j] = n(rng);
        }
        const double uv = cosine_similarity(u, v), vu = cosine_similarity(v, u);
        const double uw = cosine_similarity(u, w);
        bad += uv != vu;
        bad += uv < -1 - 1e-9 || uv > 1 + 1e-9;
        auto scaled = v;
        const double sv = pos(rng);
        for (double& x : scaled) x *= sv;
        const double us = cosine_similarity(u, scaled);
        bad += std::abs(us - uv) > 1e-9;
        // ranking of v against w relative to u survives positive scaling of u
        auto su = u;
        const double s_u = pos(rng);
        for (double& x : su) x *= s_u;
        bad += (uv < uw) != (cosine_similarity(su, v) < cosine_similarity(su, w)) && std::abs(uv - uw) > 1e-12;
    }
    const double hand = cosine_similarity({1, 1}, {1, 0});
    std::ostringstream d;
    d << "1000 pairs, violations=" << bad << "; (1,1).(1,0)=" << fmt("%.10f", hand);
    report("cosine properties", bad == 0 && std::abs(hand - 0.70710678) < 1e-8, d.str());
}

void bleu_correctness() {
    using namespace metrics;
    const double hand = bleu(tokenize("the cat sat"), {tokenize("the cat sat on the mat")}, 2, Smoothing::none);
    const auto s = tokenize("kay wasi hatun mana allin");
    const double ident = bleu(s, {s});
    std::mt19937_64 rng(99);
    const std::vector<std::string> vocab{"a", "b", "c", "d", "e", "f", "g"};
    auto gen = [&](std::size_t len) {
        TokenSeq out;
        for (std::size_t i = 0; i < len; ++i) out.push_back(vocab[rng() % vocab.size()]);
        return out;
    };
    std::size_t bad = 0;
    for (int i = 0; i < 100; ++i) {
        auto c = gen(1 + rng() % 10);
        std::vector<TokenSeq> refs;
        for (std::size_t j = 0, n = 2 + rng() % 3; j < n; ++j) refs.push_back(gen(1 + rng() % 10));
        const double base = bleu(c, refs);
        auto perm = refs;
        std::shuffle(perm.begin(), perm.end(), rng);
        bad += bleu(c, perm) != base;
        std::reverse(perm.begin(), perm.end());
        bad += bleu(c, perm) != base;
    }
    std::ostringstream d;
    d << "hand=" << fmt("%.6f", hand) << " identity=" << fmt("%.17g", ident) << " permutation violations=" << bad;
    report("BLEU correctness", std::abs(hand - 0.36788) < 1e-5 && ident == 1.0 && bad == 0, d.str());
}

void rouge_correctness() {
    using namespace metrics;
    const auto r1 = rouge_n(tokenize("the cat"), tokenize("the cat sat"), 1);
    const auto rl = rouge_l(tokenize("a c e"), tokenize("a b c d e"));
    const bool r1_ok =
        std::abs(r1.precision - 1.0) < 1e-4 && std::abs(r1.recall - 0.6667) < 1e-4 && std::abs(r1.f1 - 0.8) < 1e-4;
    const bool rl_ok = rl.precision == 1.0 && rl.recall == 0.6 && rl.f1 == 0.75;
    std::mt19937_64 rng(5);
    std::size_t bad = 0;
    for (int i = 0; i < 200; ++i) {
        TokenSeq a, b;
        for (std::size_t j = 0, n = rng() % 15; j < n; ++j) a.push_back(std::string(1, static_cast<char>('a' + rng() % 5)));
        for (std::size_t j = 0, n = rng() % 15; j < n; ++j) b.push_back(std::string(1, static_cast<char>('a' + rng() % 5)));
        bad += lcs_length(a, b) != lcs_length(b, a);
    }
    std::ostringstream d;
    d << "rouge1=(" << fmt("%.4f", r1.precision) << ", " << fmt("%.4f", r1.recall) << ", " << fmt("%.4f", r1.f1)
      << ") rougeL=(" << rl.precision << ", " << rl.recall << ", " << rl.f1 << ") lcs asymmetries=" << bad;
    report("ROUGE correctness", r1_ok && rl_ok && bad == 0, d.str());
}

void bert_metric() {
    using namespace metrics;
    OfflineEmbedder emb;
    const auto s = tokenize("wasi-kuna hatun kanku");
    const double self = bertscore(s, s, emb).f1;
    const auto c = tokenize("the big houses");
    const auto r = tokenize("large house");
    std::vector<std::vector<double>> sim(c.size(), std::vector<double>(r.size()));
    for (std::size_t i = 0; i < c.size(); ++i)
        for (std::size_t j = 0; j < r.size(); ++j)
            sim[i][j] = std::clamp(oracle::cosine(emb.embed(c[i]), emb.embed(r[j])), 0.0, 1.0);
    double p = 0, rc = 0;
    for (std::size_t i = 0; i < c.size(); ++i) p += *std::max_element(sim[i].begin(), sim[i].end());
    for (std::size_t j = 0; j < r.size(); ++j) {
        double best = 0;
        for (std::size_t i = 0; i < c.size(); ++i) best = std::max(best, sim[i][j]);
        rc += best;
    }
    p /= static_cast<double>(c.size());
    rc /= static_cast<double>(r.size());
    const double f = p + rc > 0 ? 2 * p * rc / (p + rc) : 0.0;
    const auto got = bertscore(c, r, emb);
    const double err = std::max({std::abs(got.precision - p), std::abs(got.recall - rc), std::abs(got.f1 - f)});
    std::ostringstream d;
    d << "self f1=" << fmt("%.12f", self) << " 3x2 max deviation=" << fmt("%.2e", err);
    report("BERT-style metric", std::abs(self - 1.0) < 1e-9 && err < 1e-9, d.str());
}

lora::Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
    std::normal_distribution<double> n(0.0, 1.0);
    lora::Matrix m(r, c);
    for (double& x : m.data()) x = n(rng);
    return m;
}

void lora_math() {
    using namespace lora;
    std::mt19937_64 rng(31);
    std::size_t rank_bad = 0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t d = 1 + rng() % 12, k = 1 + rng() % 12;
        const std::size_t r = 1 + rng() % std::min<std::size_t>({4, d, k});
        LowRankAdapter a{random_matrix(rng, d, r), random_matrix(rng, r, k)};
        const auto dw = delta_w(a);
        std::vector<std::vector<double>> rows(d, std::vector<double>(k));
        for (std::size_t x = 0; x < d; ++x)
            for (std::size_t y = 0; y < k; ++y) rows[x][y] = dw(x, y);
        rank_bad += oracle::matrix_rank(rows) > r;
    }
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t d = 1 + rng() % 16, k = 1 + rng() % 16;
        const std::size_t r = 1 + rng() % std::min<std::size_t>({6, d, k});
        const Matrix w = random_matrix(rng, d, k);
        LowRankAdapter a{random_matrix(rng, d, r), random_matrix(rng, r, k)};
        const RowVector x = random_matrix(rng, 1, d).data();
        const auto fast = adapted_forward(x, w, a);
        const auto slow = row_times(x, apply_adapter(w, a));
        double num = 0, den = 0;
        for (std::size_t j = 0; j < k; ++j) {
            num = std::max(num, std::abs(fast[j] - slow[j]));
            den = std::max(den, std::abs(slow[j]));
        }
        worst = std::max(worst, num / std::max(den, 1e-300));
    }
    const auto pc = trainable_param_count(1024, 1024, 8);
    const bool pc_ok = pc.lora_params == 16384 && pc.full_params == 1048576;

    const auto prob = make_planted_rank1(16, 12, 96, 4242);
    const auto before = checksum(prob.w);
    TrainOptions opt;
    opt.steps = 5000;
    opt.lr = 4.0;
    const auto t0 = Clock::now();
    const auto res = train_adapter(prob.w, prob.data, init_adapter(16, 12, 1, 7), opt);
    const double secs = seconds_since(t0);
    const double ratio = res.final_loss / res.loss_trace.front();
    std::size_t steps_to_1pct = 0;
    for (; steps_to_1pct < res.loss_trace.size(); ++steps_to_1pct)
        if (res.loss_trace[steps_to_1pct] < 0.01 * res.loss_trace.front()) break;

    const auto a_rand = LowRankAdapter{random_matrix(rng, 16, 2), random_matrix(rng, 2, 12)};
    const double gc_random = gradient_check(prob.w, a_rand, prob.data).max_rel_error;
    const double gc = std::max(res.grad_check.max_rel_error, gc_random);

    std::ostringstream d1, d2, d3, d4, d5;
    d1 << "100 adapters, rank violations=" << rank_bad;
    d2 << "1000 trials, max relative deviation=" << fmt("%.2e", worst);
    d3 << "(1024,1024,8) -> " << pc.lora_params << " vs " << pc.full_params;
    d4 << "max relative error=" << fmt("%.2e", gc);
    d5 << "final/initial=" << fmt("%.2e", ratio) << ", <1% after " << steps_to_1pct << " steps, "
       << fmt("%.2fs", secs) << ", W frozen=" << (checksum(prob.w) == before ? "yes" : "no");
    report("LoRA rank bound", rank_bad == 0, d1.str());
    report("LoRA fast vs materialized forward", worst <= 1e-9, d2.str());
    report("LoRA parameter count", pc_ok, d3.str());
    report("LoRA gradient check", gc < 1e-4, d4.str());
    report("LoRA planted rank-1 recovery",
           ratio < 0.01 && steps_to_1pct <= 5000 && secs < 30.0 && checksum(prob.w) == before, d5.str());
}

struct FixtureRun {
    fs::path dir;
    PipelineConfig cfg;
    std::vector<ParallelPair> pairs;
    std::vector<std::string> sources;
};

FixtureRun prepare_fixture() {
    FixtureRun f;
    f.dir = fs::temp_directory_path() / "lowres_rag_acceptance";
    fs::remove_all(f.dir);
    fs::create_directories(f.dir);
    for (const auto& e : fs::directory_iterator(fs::path(LOWRES_RAG_FIXTURES) / "quechua"))
        if (e.is_regular_file()) fs::copy_file(e.path(), f.dir / e.path().filename());
    f.cfg = load_config((f.dir / "demo.ini").string());
    run_ingest(f.cfg);
    run_index(f.cfg);
    f.pairs = parse_parallel(read_file(f.cfg.resolve(f.cfg.parallel_path)), RecordFormat::tsv);
    f.sources = read_lines((f.dir / "input.txt").string());
    return f;
}

std::string translate_with(FixtureRun& f, const std::vector<std::string>& overrides, const std::string& name) {
    auto cfg = load_config((f.dir / "demo.ini").string(), overrides);
    const auto out = (f.dir / name).string();
    run_translate(cfg, (f.dir / "input.txt").string(), out);
    return out;
}

metrics::MetricReport score(const FixtureRun& f, const std::vector<TranslationRecord>& recs, const std::string& sys) {
    auto emb = make_embedder(f.cfg);
    return metrics::evaluate_corpus(recs, f.pairs, f.cfg.eval, *emb, sys);
}

std::vector<TranslationRecord> echo_records(const FixtureRun& f) {
    std::vector<TranslationRecord> out;
    for (const auto& p : f.pairs) {
        TranslationRecord t;
        t.query = p.source;
        t.response = p.references.front();
        t.backend_name = "reference-echo";
        out.push_back(t);
    }
    return out;
}

void end_to_end() {
    auto f = prepare_fixture();
    const auto a = read_file(translate_with(f, {"run.workers=1"}, "run_a.jsonl"));
    const auto b = read_file(translate_with(f, {"run.workers=1"}, "run_b.jsonl"));
    const auto c = read_file(translate_with(f, {"run.workers=4"}, "run_w4.jsonl"));
    const auto n = records_from_jsonl(a).size();
    const auto echo = score(f, echo_records(f), "reference-echo");
    std::ostringstream d;
    d << n << " records; rerun identical=" << (a == b ? "yes" : "no") << ", workers 1 vs 4 identical="
      << (a == c ? "yes" : "no") << "; echo bleu=" << echo.bleu << " rouge=" << echo.rouge
      << " bert_f1=" << fmt("%.6f", echo.bert_f1);
    report("end-to-end determinism", n == 20 && a == b && a == c && echo.bleu == 1.0 && echo.rouge == 1.0 &&
                                         echo.bert_f1 >= 0.999,
           d.str());

    const auto rag = score(f, records_from_jsonl(a), "rag");
    const auto base_path = translate_with(f, {"retrieval.mode=none"}, "run_none.jsonl");
    const auto base = score(f, records_from_jsonl(read_file(base_path)), "none");
    std::ostringstream e;
    e << "RAG bleu=" << fmt("%.4f", rag.bleu) << " vs no-retrieval bleu=" << fmt("%.4f", base.bleu);
    report("retrieval effect on BLEU", rag.bleu > base.bleu, e.str());

    const auto kw_path = translate_with(f, {"retrieval.mode=keyword"}, "run_keyword.jsonl");
    const auto vec_path = translate_with(f, {"retrieval.mode=vector"}, "run_vector.jsonl");
    write_file((f.dir / "run_echo.jsonl").string(), records_to_jsonl(echo_records(f)));
    const auto reports =
        run_evaluate(f.cfg,
                     {base_path, kw_path, vec_path, (f.dir / "run_a.jsonl").string(),
                      (f.dir / "run_echo.jsonl").string()},
                     {"mock (no retrieval)", "mock + keyword", "mock + vector", "mock + hybrid RAG", "reference echo"},
                     (f.dir / "table.json").string());
    const auto table = metrics::render_table(reports);
    std::printf("%s", table.c_str());
    std::size_t lines = 0;
    for (char ch : table) lines += ch == '\n';
    bool ordered = true;
    std::size_t pos = 0;
    for (const auto& r : reports) {
        const auto at = table.find(r.system, pos);
        ordered &= at != std::string::npos;
        pos = at == std::string::npos ? pos : at;
    }
    std::ostringstream g;
    g << reports.size() << " systems x 3 metric columns, row order preserved=" << (ordered ? "yes" : "no");
    report("comparison table layout",
           reports.size() == 5 && ordered && table.find("Rouge Score") != std::string::npos &&
               table.find("BLEU Score") != std::string::npos && table.find("BERT-style Score") != std::string::npos,
           g.str());
    fs::remove_all(f.dir);
}

}  // namespace

int main() {
    retrieval_oracles();
    cosine_properties();
    bleu_correctness();
    rouge_correctness();
    bert_metric();
    lora_math();
    try {
        end_to_end();
    } catch (const std::exception& e) {
        report("end-to-end", false, std::string("exception: ") + e.what());
    }
    std::printf("%s: %d criteria failed\n", failures ? "FAILED" : "ALL PASSED", failures);
    return failures ? 1 : 0;
}
