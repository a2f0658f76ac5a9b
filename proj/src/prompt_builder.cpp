#include "lowres_rag/prompt_builder.hpp"

#include "lowres_rag/errors.hpp"
#include "lowres_rag/text.hpp"

namespace lowres_rag {

using nlohmann::json;

namespace {

std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
    return n;
}

std::string replace_once(std::string s, std::string_view placeholder, std::string_view value) {
    const auto pos = s.find(placeholder);
    if (pos != std::string::npos) s.replace(pos, placeholder.size(), value);
    return s;
}

std::size_t parse_positive(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const long long n = std::stoll(value, &used);
        if (used != value.size() || n <= 0) throw std::invalid_argument(value);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ConfigError("prompt." + key + " must be a positive integer, got '" + value + "'");
    }
}

}  // namespace

void PromptTemplate::validate() const {
    auto require_once = [](std::string_view field, std::string_view s, std::string_view ph) {
        if (count_occurrences(s, ph) != 1)
            throw InvalidTemplate(std::string(field) + " must contain " + std::string(ph) + " exactly once");
    };
    require_once("system_text", system_text, "{source_lang}");
    require_once("system_text", system_text, "{target_lang}");
    require_once("query_frame", query_frame, "{query}");
    if (max_context_docs == 0 || max_context_chars == 0) throw InvalidTemplate("context budgets must be positive");
}

DocumentMap index_documents(const std::vector<Document>& docs) {
    DocumentMap m;
    for (const auto& d : docs)
        if (!m.emplace(d.doc_id, d).second) throw DuplicateDocId(d.doc_id);
    return m;
}

std::string_view section_label(DocKind kind) {
    switch (kind) {
        case DocKind::lexicon: return "DICTIONARY";
        case DocKind::grammar: return "GRAMMAR";
        case DocKind::example: return "EXAMPLE";
    }
    return "DICTIONARY";
}

PromptBundle construct_prompt(const PromptTemplate& tmpl, std::string_view query, const RetrievalSet& retrieved,
                              const DocumentMap& docs_by_id) {
    tmpl.validate();
    PromptBundle b;
    b.system = replace_once(replace_once(tmpl.system_text, "{source_lang}", tmpl.source_lang), "{target_lang}",
                            tmpl.target_lang);
    b.context_header = tmpl.context_header;
    b.query = std::string(query);
    b.user = replace_once(tmpl.query_frame, "{query}", query);

    std::size_t used_chars = 0;
    for (const auto& item : retrieved.items) {
        auto it = docs_by_id.find(item.doc_id);
        if (it == docs_by_id.end()) throw UnresolvedDocId(item.doc_id);
        if (b.truncated) continue;
        const auto len = text::char_length(it->second.text);
        if (b.context_sections.size() >= tmpl.max_context_docs || used_chars + len > tmpl.max_context_chars) {
            b.truncated = true;
            continue;
        }
        used_chars += len;
        b.context_sections.push_back({std::string(section_label(it->second.kind)), it->second.text});
    }
    return b;
}

std::string render_user_message(const PromptBundle& bundle) {
    if (bundle.context_sections.empty()) return bundle.user;
    std::string out = bundle.context_header + "\n";
    for (const auto& s : bundle.context_sections) out += "[" + s.label + "] " + s.text + "\n";
    out += "\n" + bundle.user;
    return out;
}

json bundle_to_json(const PromptBundle& bundle) {
    json sections = json::array();
    for (const auto& s : bundle.context_sections) sections.push_back({{"label", s.label}, {"text", s.text}});
    return json{{"system", bundle.system},
                {"context_header", bundle.context_header},
                {"context_sections", std::move(sections)},
                {"query", bundle.query},
                {"user", bundle.user},
                {"truncated", bundle.truncated}};
}

PromptBundle bundle_from_json(const json& j) {
    PromptBundle b;
    b.system = j.at("system").get<std::string>();
    b.context_header = j.at("context_header").get<std::string>();
    for (const auto& s : j.at("context_sections"))
        b.context_sections.push_back({s.at("label").get<std::string>(), s.at("text").get<std::string>()});
    b.query = j.at("query").get<std::string>();
    b.user = j.at("user").get<std::string>();
    b.truncated = j.at("truncated").get<bool>();
    return b;
}

PromptTemplate template_from_config(const std::map<std::string, std::string>& section) {
    PromptTemplate t;
    for (const auto& [key, value] : section) {
        if (key == "system_text") t.system_text = value;
        else if (key == "context_header") t.context_header = value;
        else if (key == "query_frame") t.query_frame = value;
        else if (key == "source_lang") t.source_lang = value;
        else if (key == "target_lang") t.target_lang = value;
        else if (key == "max_context_docs") t.max_context_docs = parse_positive(key, value);
        else if (key == "max_context_chars") t.max_context_chars = parse_positive(key, value);
        else throw ConfigError("unknown prompt key: " + key);
    }
    t.validate();
    return t;
}

}  // namespace lowres_rag
