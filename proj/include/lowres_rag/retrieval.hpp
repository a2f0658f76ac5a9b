#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lowres_rag/embedding.hpp"
#include "lowres_rag/resource_store.hpp"

namespace lowres_rag {

/// Inverted index: normalized term -> ids of the documents listing it.
struct KeywordIndex {
    std::map<std::string, std::set<std::string>> postings;
    std::size_t doc_count = 0;

    bool operator==(const KeywordIndex&) const = default;
};

struct VectorEntry {
    std::string doc_id;
    EmbeddingVector embedding;

    bool operator==(const VectorEntry&) const = default;
};

struct VectorIndex {
    std::vector<VectorEntry> entries;
    std::size_t dim = 0;

    bool operator==(const VectorIndex&) const = default;
};

enum class Channel { keyword, vector, both };

std::string_view to_string(Channel c);

struct RetrievedItem {
    std::string doc_id;
    double score = 0.0;
    Channel channel = Channel::keyword;

    bool operator==(const RetrievedItem&) const = default;
};

struct RetrievalSet {
    std::vector<RetrievedItem> items;
    std::string query;
    std::size_t k_used = 0;

    std::vector<std::string> doc_ids() const;
};

enum class RetrievalMode { hybrid, keyword, vector, none };

RetrievalMode retrieval_mode_from_string(std::string_view s);
std::string_view to_string(RetrievalMode m);

inline constexpr std::size_t kDefaultTopK = 5;

KeywordIndex build_keyword_index(const std::vector<Document>& docs);

/// Documents sharing at least one term with the query. Score is the number of
/// distinct shared terms; ordered by score descending, then doc_id.
RetrievalSet keyword_retrieve(const KeywordIndex& index, const std::vector<std::string>& query_terms);

/// Cosine similarity; 0 when either side is the zero vector.
double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v);

/// Embeds each document's text. Documents that already carry an embedding of
/// the provider's dimension keep it.
VectorIndex build_vector_index(const std::vector<Document>& docs, const EmbeddingProvider& embedder);

/// The K highest-cosine documents, score descending then doc_id ascending.
RetrievalSet vector_retrieve(const VectorIndex& index, const EmbeddingVector& query_vec, std::size_t k);

/// Union of both channels. Ordering: keyword-only, then both, then
/// vector-only; each group score-descending with doc_id tiebreak. Documents
/// found by both channels keep their cosine score.
RetrievalSet merge_channels(const RetrievalSet& keyword_hits, const RetrievalSet& vector_hits, std::string query,
                            std::size_t k);

RetrievalSet hybrid_retrieve(const KeywordIndex& kw_index, const VectorIndex& vec_index,
                             const EmbeddingProvider& embedder, std::string_view query, std::size_t k);

/// Single-channel or no-channel variants used for baseline comparisons.
RetrievalSet retrieve(RetrievalMode mode, const KeywordIndex& kw_index, const VectorIndex& vec_index,
                      const EmbeddingProvider& embedder, std::string_view query, std::size_t k);

// Persistence: one JSON file per index carrying `format_version`.
nlohmann::json keyword_index_to_json(const KeywordIndex& index);
KeywordIndex keyword_index_from_json(const nlohmann::json& j);
nlohmann::json vector_index_to_json(const VectorIndex& index, std::string_view provider_name);
VectorIndex vector_index_from_json(const nlohmann::json& j);

}  // namespace lowres_rag
