#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lowres_rag/embedding.hpp"
#include "lowres_rag/llm_gateway.hpp"
#include "lowres_rag/lora_lab.hpp"
#include "lowres_rag/metrics.hpp"
#include "lowres_rag/prompt_builder.hpp"
#include "lowres_rag/retrieval.hpp"

namespace lowres_rag {

inline constexpr const char* kToolVersion = "0.3.0";

/// Flat "section.key" -> value view of an INI-style config file.
using ConfigMap = std::map<std::string, std::string>;

struct LoraDemoConfig {
    std::size_t d = 64;
    std::size_t k = 64;
    std::size_t r = 4;
    std::size_t samples = 128;
    std::size_t steps = 1000;
    double lr = 8.0;
};

struct PipelineConfig {
    std::filesystem::path base_dir;
    ConfigMap raw;  // snapshot after overrides, written into run manifests

    std::string lexicon_path;
    std::string grammar_path;
    std::string parallel_path;
    bool index_examples = true;

    std::string store_path = "work/store.json";
    std::string keyword_index_path = "work/keyword_index.json";
    std::string vector_index_path = "work/vector_index.json";
    std::string index_manifest_path = "work/index_manifest.json";

    std::string embedding_provider = "offline";
    std::size_t embedding_dim = OfflineEmbedder::kDefaultDim;
    RemoteEmbedderConfig remote_embedding;

    RetrievalMode retrieval_mode = RetrievalMode::hybrid;
    std::size_t k = kDefaultTopK;

    PromptTemplate prompt;

    std::string backend = "mock";
    RemoteBackendConfig remote_backend;
    int timeout_s = 60;

    metrics::EvalConfig eval;
    bool bleu_x100 = false;

    std::size_t workers = 1;
    std::uint64_t seed = 0;
    LoraDemoConfig lora;

    /// Path resolved against the config file's directory.
    std::string resolve(const std::string& p) const;
};

/// Parses INI text into a flat map; "section.key=value" overrides win.
ConfigMap parse_config_text(const std::string& ini_text, const std::vector<std::string>& overrides = {});

/// Typed view of a flat config; unknown keys raise ConfigError.
PipelineConfig config_from_map(const ConfigMap& map, const std::filesystem::path& base_dir);

PipelineConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
/// Rebuilds the config recorded in a run manifest.
PipelineConfig load_config_from_manifest(const std::string& manifest_path,
                                         const std::vector<std::string>& overrides = {});

std::unique_ptr<EmbeddingProvider> make_embedder(const PipelineConfig& cfg);
std::unique_ptr<CompletionBackend> make_backend(const PipelineConfig& cfg);

/// FNV-1a 64 of the file bytes, as 16 hex digits.
std::string file_checksum(const std::string& path);

struct IngestResult {
    std::size_t lexicon = 0;
    std::size_t grammar = 0;
    std::size_t examples = 0;
    std::size_t total() const { return lexicon + grammar + examples; }
};

IngestResult run_ingest(const PipelineConfig& cfg);

struct IndexResult {
    std::size_t documents = 0;
    std::size_t terms = 0;
    std::string keyword_checksum;
    std::string vector_checksum;
};

/// Writes both indexes and the index manifest. On failure, none of the
/// output files is left behind.
IndexResult run_index(const PipelineConfig& cfg);

/// Loaded store and indexes plus the backend, ready to translate.
class LoadedPipeline {
public:
    explicit LoadedPipeline(const PipelineConfig& cfg);

    const Pipeline& pipeline() const { return pipeline_; }
    const std::vector<Document>& documents() const { return documents_; }
    std::map<std::string, std::string> index_checksums() const;

private:
    PipelineConfig cfg_;
    std::vector<Document> documents_;
    DocumentMap docs_by_id_;
    KeywordIndex keyword_index_;
    VectorIndex vector_index_;
    std::unique_ptr<EmbeddingProvider> embedder_;
    std::unique_ptr<CompletionBackend> backend_;
    Pipeline pipeline_;
};

struct TranslateResult {
    std::vector<TranslationRecord> records;
    std::size_t failed = 0;
    std::string manifest_path;
};

/// One record per input line, in input order; writes records JSONL and a
/// run manifest next to it (<output>.manifest.json).
TranslateResult run_translate(const PipelineConfig& cfg, const std::string& input_path,
                              const std::string& output_path);

std::vector<std::string> read_lines(const std::string& path);

/// One report per records file, in argument order. `systems` may be empty
/// (names default to the file stem).
std::vector<metrics::MetricReport> run_evaluate(const PipelineConfig& cfg, const std::vector<std::string>& record_paths,
                                                const std::vector<std::string>& systems,
                                                const std::string& report_path);

struct LoraDemoResult {
    lora::ParamCount params;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double grad_rel_error = 0.0;
    double attention_grad_rel_error = 0.0;
    bool ok = false;
};

LoraDemoResult run_lora_demo(const PipelineConfig& cfg, std::ostream& out);

}  // namespace lowres_rag
