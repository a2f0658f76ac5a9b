#include "lowres_rag/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "lowres_rag/errors.hpp"
#include "lowres_rag/text.hpp"

namespace lowres_rag {

using nlohmann::json;

namespace {

constexpr int kIndexFormatVersion = 1;

bool by_score_then_id(const RetrievedItem& a, const RetrievedItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
}

}  // namespace

std::string_view to_string(Channel c) {
    switch (c) {
        case Channel::keyword: return "keyword";
        case Channel::vector: return "vector";
        case Channel::both: return "both";
    }
    return "keyword";
}

RetrievalMode retrieval_mode_from_string(std::string_view s) {
    if (s == "hybrid") return RetrievalMode::hybrid;
    if (s == "keyword") return RetrievalMode::keyword;
    if (s == "vector") return RetrievalMode::vector;
    if (s == "none") return RetrievalMode::none;
    throw ConfigError("unknown retrieval mode: " + std::string(s));
}

std::string_view to_string(RetrievalMode m) {
    switch (m) {
        case RetrievalMode::hybrid: return "hybrid";
        case RetrievalMode::keyword: return "keyword";
        case RetrievalMode::vector: return "vector";
        case RetrievalMode::none: return "none";
    }
    return "hybrid";
}

std::vector<std::string> RetrievalSet::doc_ids() const {
    std::vector<std::string> ids;
    ids.reserve(items.size());
    for (const auto& it : items) ids.push_back(it.doc_id);
    return ids;
}

KeywordIndex build_keyword_index(const std::vector<Document>& docs) {
    KeywordIndex index;
    index.doc_count = docs.size();
    std::unordered_set<std::string> ids;
    for (const auto& d : docs) {
        if (!ids.insert(d.doc_id).second) throw DuplicateDocId(d.doc_id);
        for (const auto& k : d.keywords) index.postings[k].insert(d.doc_id);
    }
    return index;
}

RetrievalSet keyword_retrieve(const KeywordIndex& index, const std::vector<std::string>& query_terms) {
    std::unordered_map<std::string, int> shared;
    std::unordered_set<std::string> seen;
    for (const auto& term : query_terms) {
        if (!seen.insert(term).second) continue;
        auto it = index.postings.find(term);
        if (it == index.postings.end()) continue;
        for (const auto& id : it->second) ++shared[id];
    }
    RetrievalSet out;
    out.items.reserve(shared.size());
    for (auto& [id, n] : shared) out.items.push_back({id, static_cast<double>(n), Channel::keyword});
    std::sort(out.items.begin(), out.items.end(), by_score_then_id);
    return out;
}

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
    if (u.size() != v.size()) throw DimensionMismatch(u.size(), v.size());
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

VectorIndex build_vector_index(const std::vector<Document>& docs, const EmbeddingProvider& embedder) {
    VectorIndex index;
    index.dim = embedder.dim();
    std::vector<std::string> pending_texts;
    std::vector<std::size_t> pending_slots;
    index.entries.reserve(docs.size());
    for (const auto& d : docs) {
        index.entries.push_back({d.doc_id, {}});
        if (d.embedding && index.dim != 0 && d.embedding->size() == index.dim) {
            index.entries.back().embedding = *d.embedding;
        } else {
            pending_texts.push_back(d.text);
            pending_slots.push_back(index.entries.size() - 1);
        }
    }
    auto vecs = embedder.embed_batch(pending_texts);
    for (std::size_t i = 0; i < vecs.size(); ++i) index.entries[pending_slots[i]].embedding = std::move(vecs[i]);
    if (index.dim == 0) index.dim = embedder.dim();
    for (const auto& e : index.entries)
        if (e.embedding.size() != index.dim) throw DimensionMismatch(index.dim, e.embedding.size());
    return index;
}

RetrievalSet vector_retrieve(const VectorIndex& index, const EmbeddingVector& query_vec, std::size_t k) {
    if (k == 0) throw ConfigError("K must be at least 1");
    if (query_vec.size() != index.dim) throw DimensionMismatch(index.dim, query_vec.size());
    RetrievalSet out;
    out.k_used = k;
    out.items.reserve(index.entries.size());
    for (const auto& e : index.entries)
        out.items.push_back({e.doc_id, cosine_similarity(query_vec, e.embedding), Channel::vector});
    const auto keep = std::min(k, out.items.size());
    std::partial_sort(out.items.begin(), out.items.begin() + static_cast<std::ptrdiff_t>(keep), out.items.end(),
                      by_score_then_id);
    out.items.resize(keep);
    return out;
}

RetrievalSet merge_channels(const RetrievalSet& keyword_hits, const RetrievalSet& vector_hits, std::string query,
                            std::size_t k) {
    std::unordered_map<std::string, double> vec_score;
    for (const auto& it : vector_hits.items) vec_score.emplace(it.doc_id, it.score);

    std::vector<RetrievedItem> kw_only, both, vec_only;
    std::unordered_set<std::string> in_kw;
    for (const auto& it : keyword_hits.items) {
        in_kw.insert(it.doc_id);
        if (auto f = vec_score.find(it.doc_id); f != vec_score.end())
            both.push_back({it.doc_id, f->second, Channel::both});
        else
            kw_only.push_back(it);
    }
    for (const auto& it : vector_hits.items)
        if (!in_kw.count(it.doc_id)) vec_only.push_back(it);
    std::sort(kw_only.begin(), kw_only.end(), by_score_then_id);
    std::sort(both.begin(), both.end(), by_score_then_id);
    std::sort(vec_only.begin(), vec_only.end(), by_score_then_id);

    RetrievalSet out;
    out.query = std::move(query);
    out.k_used = k;
    out.items = std::move(kw_only);
    out.items.insert(out.items.end(), both.begin(), both.end());
    out.items.insert(out.items.end(), vec_only.begin(), vec_only.end());
    return out;
}

RetrievalSet hybrid_retrieve(const KeywordIndex& kw_index, const VectorIndex& vec_index,
                             const EmbeddingProvider& embedder, std::string_view query, std::size_t k) {
    return retrieve(RetrievalMode::hybrid, kw_index, vec_index, embedder, query, k);
}

RetrievalSet retrieve(RetrievalMode mode, const KeywordIndex& kw_index, const VectorIndex& vec_index,
                      const EmbeddingProvider& embedder, std::string_view query, std::size_t k) {
    RetrievalSet kw, vec;
    if (mode == RetrievalMode::hybrid || mode == RetrievalMode::keyword)
        kw = keyword_retrieve(kw_index, text::query_terms(query));
    if ((mode == RetrievalMode::hybrid || mode == RetrievalMode::vector) && !vec_index.entries.empty())
        vec = vector_retrieve(vec_index, embedder.embed(query), k);
    return merge_channels(kw, vec, std::string(query), k);
}

json keyword_index_to_json(const KeywordIndex& index) {
    json postings = json::object();
    for (const auto& [term, ids] : index.postings) postings[term] = ids;
    return json{{"format_version", kIndexFormatVersion},
                {"kind", "keyword"},
                {"doc_count", index.doc_count},
                {"postings", std::move(postings)}};
}

KeywordIndex keyword_index_from_json(const json& j) {
    try {
        if (j.at("format_version").get<int>() != kIndexFormatVersion || j.at("kind") != "keyword")
            throw DataError("not a keyword index file (format_version 1)");
        KeywordIndex index;
        index.doc_count = j.at("doc_count").get<std::size_t>();
        for (const auto& [term, ids] : j.at("postings").items())
            index.postings[term] = ids.get<std::set<std::string>>();
        return index;
    } catch (const json::exception& e) {
        throw DataError(std::string("corrupt keyword index: ") + e.what());
    }
}

json vector_index_to_json(const VectorIndex& index, std::string_view provider_name) {
    json entries = json::array();
    for (const auto& e : index.entries) entries.push_back({{"doc_id", e.doc_id}, {"embedding", e.embedding}});
    return json{{"format_version", kIndexFormatVersion},
                {"kind", "vector"},
                {"provider", provider_name},
                {"dim", index.dim},
                {"entries", std::move(entries)}};
}

VectorIndex vector_index_from_json(const json& j) {
    try {
        if (j.at("format_version").get<int>() != kIndexFormatVersion || j.at("kind") != "vector")
            throw DataError("not a vector index file (format_version 1)");
        VectorIndex index;
        index.dim = j.at("dim").get<std::size_t>();
        for (const auto& e : j.at("entries")) {
            VectorEntry ve{e.at("doc_id").get<std::string>(), e.at("embedding").get<EmbeddingVector>()};
            if (ve.embedding.size() != index.dim) throw DimensionMismatch(index.dim, ve.embedding.size());
            index.entries.push_back(std::move(ve));
        }
        return index;
    } catch (const json::exception& e) {
        throw DataError(std::string("corrupt vector index: ") + e.what());
    }
}

}  // namespace lowres_rag
