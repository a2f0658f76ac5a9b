#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lowres_rag/resource_store.hpp"
#include "lowres_rag/retrieval.hpp"

namespace lowres_rag {

struct PromptTemplate {
    std::string system_text =
        "You are an expert translator from {source_lang} to {target_lang}. Use the provided dictionary entries, "
        "grammar notes, and examples. Output only the translation.";
    std::string context_header = "REFERENCE MATERIAL:";
    std::string query_frame = "Translate: {query}";
    std::string source_lang = "Quechua";
    std::string target_lang = "English";
    std::size_t max_context_docs = 12;
    std::size_t max_context_chars = 6000;

    /// Throws InvalidTemplate unless every placeholder occurs exactly once
    /// and both budgets are positive.
    void validate() const;
};

struct ContextSection {
    std::string label;
    std::string text;

    bool operator==(const ContextSection&) const = default;
};

struct PromptBundle {
    std::string system;
    std::string context_header;
    std::vector<ContextSection> context_sections;
    std::string query;
    std::string user;
    bool truncated = false;

    bool operator==(const PromptBundle&) const = default;
};

using DocumentMap = std::map<std::string, Document, std::less<>>;

DocumentMap index_documents(const std::vector<Document>& docs);

std::string_view section_label(DocKind kind);

/// Builds the prompt from the query and the retrieved set. Sections follow
/// the retrieval order; the tail is dropped once either budget is exceeded.
PromptBundle construct_prompt(const PromptTemplate& tmpl, std::string_view query, const RetrievalSet& retrieved,
                              const DocumentMap& docs_by_id);

/// Context block followed by the user text, as sent in the user message.
std::string render_user_message(const PromptBundle& bundle);

nlohmann::json bundle_to_json(const PromptBundle& bundle);
PromptBundle bundle_from_json(const nlohmann::json& j);

/// Applies keys from a `[prompt]` config section (system_text, context_header,
/// query_frame, source_lang, target_lang, max_context_docs,
/// max_context_chars). Unknown keys are rejected.
PromptTemplate template_from_config(const std::map<std::string, std::string>& section);

}  // namespace lowres_rag
