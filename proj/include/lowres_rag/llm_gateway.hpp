#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lowres_rag/embedding.hpp"
#include "lowres_rag/http.hpp"
#include "lowres_rag/prompt_builder.hpp"
#include "lowres_rag/retrieval.hpp"

namespace lowres_rag {

enum class BackendKind { remote, mock };

struct Completion {
    std::string text;
    int attempts = 1;
};

/// R = LLM(P). Implementations must be shareable across worker threads.
class CompletionBackend {
public:
    virtual ~CompletionBackend() = default;

    virtual std::string name() const = 0;
    virtual BackendKind kind() const = 0;
    /// Deterministic backends record latency as 0 so runs replay bit-exactly.
    virtual bool deterministic() const = 0;
    virtual Completion complete(const PromptBundle& bundle) const = 0;
};

/// Glosses query tokens from the DICTIONARY sections of the prompt: each
/// whitespace token whose normalized form is a headword becomes that entry's
/// first gloss, anything else is echoed. With no DICTIONARY section the query
/// is returned unchanged.
class MockBackend final : public CompletionBackend {
public:
    std::string name() const override { return "mock"; }
    BackendKind kind() const override { return BackendKind::mock; }
    bool deterministic() const override { return true; }
    Completion complete(const PromptBundle& bundle) const override;
};

struct RemoteBackendConfig {
    std::string base_url;
    std::string path = "/v1/chat/completions";
    std::string model_id = "gpt-4o";
    double temperature = 0.0;
    int max_output_tokens = 256;
    std::size_t max_in_flight = 4;
    bool context_in_system = false;
    RetryPolicy retry;
};

/// Chat-completions style HTTP backend.
class RemoteBackend final : public CompletionBackend {
public:
    RemoteBackend(RemoteBackendConfig config, std::shared_ptr<HttpTransport> transport);

    std::string name() const override { return "remote:" + config_.model_id; }
    BackendKind kind() const override { return BackendKind::remote; }
    bool deterministic() const override { return false; }
    Completion complete(const PromptBundle& bundle) const override;

    /// Request body for `bundle`, exposed for wire-format tests.
    nlohmann::json request_body(const PromptBundle& bundle) const;
    const InFlightLimiter& limiter() const { return limiter_; }

private:
    RemoteBackendConfig config_;
    std::shared_ptr<HttpTransport> transport_;
    mutable InFlightLimiter limiter_;
};

struct TranslationRecord {
    std::string query;
    std::vector<std::string> retrieved_ids;
    PromptBundle prompt;
    std::string response;
    std::string backend_name;
    std::uint64_t latency_ms = 0;
    int attempt_count = 1;
    bool ok = true;
    std::string error_stage;
    std::string error;

    bool operator==(const TranslationRecord&) const = default;
};

nlohmann::json record_to_json(const TranslationRecord& r);
TranslationRecord record_from_json(const nlohmann::json& j);
std::string records_to_jsonl(const std::vector<TranslationRecord>& records);
std::vector<TranslationRecord> records_from_jsonl(std::string_view raw);

/// Everything needed for q -> D_q -> P -> R. Borrowed pointers must outlive
/// the pipeline; all members are read-only during translation.
struct Pipeline {
    const DocumentMap* docs = nullptr;
    const KeywordIndex* keyword_index = nullptr;
    const VectorIndex* vector_index = nullptr;
    const EmbeddingProvider* embedder = nullptr;
    const CompletionBackend* backend = nullptr;
    PromptTemplate prompt_template;
    RetrievalMode mode = RetrievalMode::hybrid;
    std::size_t k = kDefaultTopK;
};

/// Throws StageError tagged "retrieval", "prompt" or "completion".
TranslationRecord translate_one(const Pipeline& pipeline, std::string_view source);

/// Like translate_one but a failure becomes a record with ok=false.
TranslationRecord translate_or_record_failure(const Pipeline& pipeline, std::string_view source);

/// Runs `workers` threads; records come back in input order.
std::vector<TranslationRecord> translate_batch(const Pipeline& pipeline, const std::vector<std::string>& sources,
                                               std::size_t workers);

/// Rebuilds the prompt of a record from its query and retrieved ids.
PromptBundle replay_prompt(const Pipeline& pipeline, const TranslationRecord& record);

}  // namespace lowres_rag
