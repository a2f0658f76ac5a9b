#include "lowres_rag/llm_gateway.hpp"

#include <atomic>
#include <chrono>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "lowres_rag/errors.hpp"
#include "lowres_rag/text.hpp"

namespace lowres_rag {

using nlohmann::json;

namespace {

// "<headword> = <gloss1; gloss2> [pos] [morphemes]" -> (headword, gloss1)
std::optional<std::pair<std::string, std::string>> parse_dictionary_line(std::string_view line) {
    const auto eq = line.find(" = ");
    if (eq == std::string_view::npos) return std::nullopt;
    std::string_view glosses = line.substr(eq + 3);
    if (auto br = glosses.find(" ["); br != std::string_view::npos) glosses = glosses.substr(0, br);
    if (auto semi = glosses.find(';'); semi != std::string_view::npos) glosses = glosses.substr(0, semi);
    auto head = text::normalize_term(line.substr(0, eq));
    auto gloss = text::trim(glosses);
    if (head.empty() || gloss.empty()) return std::nullopt;
    return std::make_pair(std::move(head), std::move(gloss));
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const RemoteError*>(&e)) return 3;
    if (dynamic_cast<const ConfigError*>(&e)) return 1;
    return 2;
}

}  // namespace

Completion MockBackend::complete(const PromptBundle& bundle) const {
    std::unordered_map<std::string, std::string> gloss_of;
    for (const auto& s : bundle.context_sections) {
        if (s.label != section_label(DocKind::lexicon)) continue;
        if (auto parsed = parse_dictionary_line(s.text)) gloss_of.emplace(parsed->first, parsed->second);
    }
    if (gloss_of.empty()) return {bundle.query, 1};

    std::vector<std::string> out;
    std::istringstream in(bundle.query);
    for (std::string tok; in >> tok;) {
        auto it = gloss_of.find(text::normalize_term(tok));
        out.push_back(it == gloss_of.end() ? tok : it->second);
    }
    return {text::join(out, " "), 1};
}

RemoteBackend::RemoteBackend(RemoteBackendConfig config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)), limiter_(config_.max_in_flight) {}

json RemoteBackend::request_body(const PromptBundle& bundle) const {
    std::string system = bundle.system;
    std::string user;
    if (config_.context_in_system) {
        PromptBundle context_only = bundle;
        context_only.user.clear();
        if (!bundle.context_sections.empty()) system += "\n\n" + text::trim(render_user_message(context_only));
        user = bundle.user;
    } else {
        user = render_user_message(bundle);
    }
    return json{{"model", config_.model_id},
                {"temperature", config_.temperature},
                {"max_tokens", config_.max_output_tokens},
                {"messages", json::array({json{{"role", "system"}, {"content", system}},
                                          json{{"role", "user"}, {"content", user}}})}};
}

Completion RemoteBackend::complete(const PromptBundle& bundle) const {
    HttpHeaders headers = default_json_headers();
    auto result = post_with_retry(*transport_, limiter_, config_.retry, config_.path, request_body(bundle).dump(),
                                  headers);
    try {
        const json resp = json::parse(result.response.body);
        return {resp.at("choices").at(0).at("message").at("content").get<std::string>(), result.attempts};
    } catch (const json::exception& e) {
        throw RemoteUnavailable(std::string("malformed completion response: ") + e.what());
    }
}

json record_to_json(const TranslationRecord& r) {
    json j{{"query", r.query},
           {"retrieved_ids", r.retrieved_ids},
           {"prompt", bundle_to_json(r.prompt)},
           {"response", r.response},
           {"backend_name", r.backend_name},
           {"latency_ms", r.latency_ms},
           {"attempt_count", r.attempt_count},
           {"status", r.ok ? "ok" : "failed"}};
    if (!r.ok) {
        j["error_stage"] = r.error_stage;
        j["error"] = r.error;
    }
    return j;
}

TranslationRecord record_from_json(const json& j) {
    try {
        TranslationRecord r;
        r.query = j.at("query").get<std::string>();
        r.retrieved_ids = j.at("retrieved_ids").get<std::vector<std::string>>();
        r.prompt = bundle_from_json(j.at("prompt"));
        r.response = j.at("response").get<std::string>();
        r.backend_name = j.at("backend_name").get<std::string>();
        r.latency_ms = j.at("latency_ms").get<std::uint64_t>();
        r.attempt_count = j.at("attempt_count").get<int>();
        r.ok = j.at("status").get<std::string>() == "ok";
        if (!r.ok) {
            r.error_stage = j.value("error_stage", "");
            r.error = j.value("error", "");
        }
        return r;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed translation record: ") + e.what());
    }
}

std::string records_to_jsonl(const std::vector<TranslationRecord>& records) {
    std::string out;
    for (const auto& r : records) out += record_to_json(r).dump() + "\n";
    return out;
}

std::vector<TranslationRecord> records_from_jsonl(std::string_view raw) {
    std::vector<TranslationRecord> out;
    std::size_t line_no = 0;
    std::istringstream in{std::string(raw)};
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            out.push_back(record_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw MalformedRecord(line_no, e.what());
        }
    }
    return out;
}

TranslationRecord translate_one(const Pipeline& p, std::string_view source) {
    TranslationRecord rec;
    rec.query = std::string(source);
    rec.backend_name = p.backend->name();

    RetrievalSet retrieved;
    try {
        retrieved = retrieve(p.mode, *p.keyword_index, *p.vector_index, *p.embedder, source, p.k);
    } catch (const std::exception& e) {
        throw StageError("retrieval", e.what(), exit_code_for(e));
    }
    rec.retrieved_ids = retrieved.doc_ids();

    try {
        rec.prompt = construct_prompt(p.prompt_template, source, retrieved, *p.docs);
    } catch (const std::exception& e) {
        throw StageError("prompt", e.what(), exit_code_for(e));
    }

    try {
        const auto start = std::chrono::steady_clock::now();
        Completion c = p.backend->complete(rec.prompt);
        const auto elapsed = std::chrono::steady_clock::now() - start;
        rec.response = std::move(c.text);
        rec.attempt_count = c.attempts;
        rec.latency_ms = p.backend->deterministic()
                             ? 0
                             : static_cast<std::uint64_t>(
                                   std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count());
    } catch (const std::exception& e) {
        throw StageError("completion", e.what(), exit_code_for(e));
    }
    return rec;
}

TranslationRecord translate_or_record_failure(const Pipeline& p, std::string_view source) {
    try {
        return translate_one(p, source);
    } catch (const StageError& e) {
        TranslationRecord rec;
        rec.query = std::string(source);
        rec.backend_name = p.backend->name();
        rec.ok = false;
        rec.attempt_count = 0;
        rec.error_stage = e.stage();
        rec.error = e.what();
        return rec;
    }
}

std::vector<TranslationRecord> translate_batch(const Pipeline& p, const std::vector<std::string>& sources,
                                               std::size_t workers) {
    std::vector<TranslationRecord> out(sources.size());
    if (workers <= 1 || sources.size() <= 1) {
        for (std::size_t i = 0; i < sources.size(); ++i) out[i] = translate_or_record_failure(p, sources[i]);
        return out;
    }
    std::atomic<std::size_t> next{0};
    {
        std::vector<std::jthread> pool;
        const auto n = std::min(workers, sources.size());
        for (std::size_t w = 0; w < n; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < sources.size(); i = next++)
                    out[i] = translate_or_record_failure(p, sources[i]);
            });
        }
    }
    return out;
}

PromptBundle replay_prompt(const Pipeline& p, const TranslationRecord& record) {
    RetrievalSet rs;
    rs.query = record.query;
    rs.k_used = p.k;
    for (const auto& id : record.retrieved_ids) rs.items.push_back({id, 0.0, Channel::keyword});
    return construct_prompt(p.prompt_template, record.query, rs, *p.docs);
}

}  // namespace lowres_rag
