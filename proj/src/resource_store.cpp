#include "lowres_rag/resource_store.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <unordered_set>

#include "lowres_rag/errors.hpp"
#include "lowres_rag/text.hpp"

namespace lowres_rag {

using nlohmann::json;

namespace {

constexpr int kStoreFormatVersion = 1;

// Calls `fn(line, line_no)` for every record line.
void for_each_record(std::string_view raw, const std::function<void(std::string_view, std::size_t)>& fn) {
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= raw.size()) {
        auto end = raw.find('\n', start);
        if (end == std::string_view::npos) end = raw.size();
        std::string_view line = raw.substr(start, end - start);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        const std::string trimmed = text::trim(line);
        if (!trimmed.empty() && trimmed.front() != '#') fn(line, line_no);
        if (end == raw.size()) break;
        start = end + 1;
    }
}

std::vector<std::string> split_list(std::string_view s, char sep) {
    std::vector<std::string> out;
    for (auto& piece : text::split(s, sep)) {
        auto t = text::trim(piece);
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

json parse_json_line(std::string_view line, std::size_t line_no) {
    try {
        json j = json::parse(line);
        if (!j.is_object()) throw MalformedRecord(line_no, "expected a JSON object");
        return j;
    } catch (const json::exception& e) {
        throw MalformedRecord(line_no, e.what());
    }
}

std::string string_field(const json& j, const char* key, std::size_t line_no, bool required) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        if (required) throw MalformedRecord(line_no, std::string("missing field '") + key + "'");
        return {};
    }
    if (!it->is_string()) throw MalformedRecord(line_no, std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
}

std::vector<std::string> string_list_field(const json& j, const char* key, std::size_t line_no) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return {};
    if (!it->is_array()) throw MalformedRecord(line_no, std::string("field '") + key + "' must be an array");
    std::vector<std::string> out;
    for (const auto& v : *it) {
        if (!v.is_string()) throw MalformedRecord(line_no, std::string("field '") + key + "' must hold strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

std::string ordinal_id(std::size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu", n);
    return buf;
}

void push_unique(std::vector<std::string>& out, std::unordered_set<std::string>& seen, std::string t) {
    if (!t.empty() && seen.insert(t).second) out.push_back(std::move(t));
}

std::string strip_hyphens(std::string_view s) {
    std::string out;
    for (char c : s)
        if (c != '-') out.push_back(c);
    return out;
}

}  // namespace

RecordFormat format_from_path(std::string_view path) {
    const auto ext = std::filesystem::path(path).extension().string();
    if (ext == ".tsv" || ext == ".txt") return RecordFormat::tsv;
    if (ext == ".jsonl" || ext == ".json") return RecordFormat::jsonl;
    throw ConfigError("cannot infer record format from extension of " + std::string(path));
}

bool LexiconEntry::concatenative() const {
    if (!morphemes) return true;
    std::string joined;
    for (const auto& m : *morphemes) joined += strip_hyphens(text::fold(m));
    return joined == strip_hyphens(text::normalize_term(headword));
}

std::string_view to_string(DocKind kind) {
    switch (kind) {
        case DocKind::lexicon: return "lexicon";
        case DocKind::grammar: return "grammar";
        case DocKind::example: return "example";
    }
    return "lexicon";
}

DocKind doc_kind_from_string(std::string_view s) {
    if (s == "lexicon") return DocKind::lexicon;
    if (s == "grammar") return DocKind::grammar;
    if (s == "example") return DocKind::example;
    throw DataError("unknown document kind: " + std::string(s));
}

std::vector<LexiconEntry> parse_lexicon(std::string_view raw, RecordFormat format) {
    std::vector<LexiconEntry> out;
    for_each_record(raw, [&](std::string_view line, std::size_t line_no) {
        LexiconEntry e;
        if (format == RecordFormat::tsv) {
            auto cols = text::split(line, '\t');
            if (cols.size() < 2 || cols.size() > 4)
                throw MalformedRecord(line_no, "expected 2-4 tab-separated columns, got " + std::to_string(cols.size()));
            e.headword = text::trim(cols[0]);
            e.glosses = split_list(cols[1], ';');
            if (cols.size() > 2 && !text::trim(cols[2]).empty()) e.pos = text::trim(cols[2]);
            if (cols.size() > 3 && !text::trim(cols[3]).empty()) e.morphemes = split_list(cols[3], '+');
        } else {
            json j = parse_json_line(line, line_no);
            e.headword = text::trim(string_field(j, "headword", line_no, false));
            e.glosses = string_list_field(j, "glosses", line_no);
            if (auto p = string_field(j, "pos", line_no, false); !p.empty()) e.pos = p;
            if (j.contains("morphemes") && !j["morphemes"].is_null())
                e.morphemes = string_list_field(j, "morphemes", line_no);
            e.source_id = string_field(j, "source_id", line_no, false);
        }
        if (text::normalize_term(e.headword).empty()) throw EmptyHeadword(line_no);
        if (e.glosses.empty()) throw MalformedRecord(line_no, "no glosses");
        if (e.source_id.empty()) e.source_id = "line:" + std::to_string(line_no);
        out.push_back(std::move(e));
    });
    return out;
}

std::vector<GrammarNote> parse_grammar(std::string_view raw, RecordFormat format) {
    std::vector<GrammarNote> out;
    std::set<std::string> ids;
    for_each_record(raw, [&](std::string_view line, std::size_t line_no) {
        GrammarNote n;
        std::vector<std::string> kws;
        if (format == RecordFormat::tsv) {
            auto cols = text::split(line, '\t');
            if (cols.size() != 4) throw MalformedRecord(line_no, "expected 4 tab-separated columns");
            n.note_id = text::trim(cols[0]);
            n.title = text::trim(cols[1]);
            n.body = text::trim(cols[2]);
            kws = split_list(cols[3], ';');
        } else {
            json j = parse_json_line(line, line_no);
            n.note_id = string_field(j, "note_id", line_no, true);
            n.title = string_field(j, "title", line_no, false);
            n.body = string_field(j, "body", line_no, false);
            kws = string_list_field(j, "keywords", line_no);
        }
        if (n.note_id.empty()) throw MalformedRecord(line_no, "empty note_id");
        if (!ids.insert(n.note_id).second) throw MalformedRecord(line_no, "duplicate note_id " + n.note_id);
        std::unordered_set<std::string> seen;
        for (auto& k : kws) push_unique(n.keywords, seen, text::normalize_term(k));
        out.push_back(std::move(n));
    });
    return out;
}

std::vector<ParallelPair> parse_parallel(std::string_view raw, RecordFormat format) {
    std::vector<ParallelPair> out;
    std::set<std::string> ids;
    for_each_record(raw, [&](std::string_view line, std::size_t line_no) {
        ParallelPair p;
        if (format == RecordFormat::tsv) {
            auto cols = text::split(line, '\t');
            p.source = text::trim(cols[0]);
            for (std::size_t i = 1; i < cols.size(); ++i)
                if (auto r = text::trim(cols[i]); !r.empty()) p.references.push_back(std::move(r));
        } else {
            json j = parse_json_line(line, line_no);
            p.source = text::trim(string_field(j, "source", line_no, true));
            p.pair_id = string_field(j, "pair_id", line_no, false);
            for (auto& r : string_list_field(j, "references", line_no))
                if (auto t = text::trim(r); !t.empty()) p.references.push_back(std::move(t));
        }
        if (p.source.empty()) throw MalformedRecord(line_no, "empty source sentence");
        if (p.references.empty()) throw MissingReference(line_no);
        if (p.pair_id.empty()) p.pair_id = ordinal_id(out.size());
        if (!ids.insert(p.pair_id).second) throw MalformedRecord(line_no, "duplicate pair_id " + p.pair_id);
        out.push_back(std::move(p));
    });
    return out;
}

std::string serialize_lexicon(const std::vector<LexiconEntry>& entries, RecordFormat format) {
    std::ostringstream os;
    for (const auto& e : entries) {
        if (format == RecordFormat::tsv) {
            os << e.headword << '\t' << text::join(e.glosses, ";");
            if (e.pos || e.morphemes) os << '\t' << e.pos.value_or("");
            if (e.morphemes) os << '\t' << text::join(*e.morphemes, "+");
        } else {
            json j{{"headword", e.headword}, {"glosses", e.glosses}, {"source_id", e.source_id}};
            if (e.pos) j["pos"] = *e.pos;
            if (e.morphemes) j["morphemes"] = *e.morphemes;
            os << j.dump();
        }
        os << '\n';
    }
    return os.str();
}

std::string serialize_grammar(const std::vector<GrammarNote>& notes, RecordFormat format) {
    std::ostringstream os;
    for (const auto& n : notes) {
        if (format == RecordFormat::tsv)
            os << n.note_id << '\t' << n.title << '\t' << n.body << '\t' << text::join(n.keywords, ";");
        else
            os << json{{"note_id", n.note_id}, {"title", n.title}, {"body", n.body}, {"keywords", n.keywords}}.dump();
        os << '\n';
    }
    return os.str();
}

std::string serialize_parallel(const std::vector<ParallelPair>& pairs, RecordFormat format) {
    std::ostringstream os;
    for (const auto& p : pairs) {
        if (format == RecordFormat::tsv)
            os << p.source << '\t' << text::join(p.references, "\t");
        else
            os << json{{"pair_id", p.pair_id}, {"source", p.source}, {"references", p.references}}.dump();
        os << '\n';
    }
    return os.str();
}

std::string render_lexicon_text(const LexiconEntry& e) {
    std::string out = e.headword + " = " + text::join(e.glosses, "; ");
    if (e.pos) out += " [" + *e.pos + "]";
    if (e.morphemes) out += " [" + text::join(*e.morphemes, "+") + "]";
    return out;
}

std::vector<Document> to_documents(const std::vector<LexiconEntry>& entries,
                                   const std::vector<GrammarNote>& notes,
                                   const std::vector<ParallelPair>& pairs,
                                   bool include_examples) {
    std::vector<Document> docs;
    std::unordered_set<std::string> ids;
    auto add = [&](Document d) {
        if (!ids.insert(d.doc_id).second) throw DuplicateDocId(d.doc_id);
        docs.push_back(std::move(d));
    };

    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        Document d{"lexicon:" + std::to_string(i), DocKind::lexicon, render_lexicon_text(e), {}, std::nullopt};
        std::unordered_set<std::string> seen;
        push_unique(d.keywords, seen, text::normalize_term(e.headword));
        if (e.morphemes)
            for (const auto& m : *e.morphemes) push_unique(d.keywords, seen, text::normalize_term(m));
        add(std::move(d));
    }
    for (const auto& n : notes) {
        Document d{"grammar:" + n.note_id, DocKind::grammar, n.title + "\n" + n.body, {}, std::nullopt};
        std::unordered_set<std::string> seen;
        for (const auto& k : n.keywords) push_unique(d.keywords, seen, text::normalize_term(k));
        add(std::move(d));
    }
    if (include_examples) {
        for (const auto& p : pairs) {
            Document d{"example:" + p.pair_id, DocKind::example, p.source + " ||| " + p.references.front(), {},
                       std::nullopt};
            std::unordered_set<std::string> seen;
            for (auto& t : text::word_tokens(p.source)) push_unique(d.keywords, seen, std::move(t));
            add(std::move(d));
        }
    }
    return docs;
}

json documents_to_json(const std::vector<Document>& docs) {
    json arr = json::array();
    for (const auto& d : docs) {
        json j{{"doc_id", d.doc_id}, {"kind", to_string(d.kind)}, {"text", d.text}, {"keywords", d.keywords}};
        if (d.embedding) j["embedding"] = *d.embedding;
        arr.push_back(std::move(j));
    }
    return json{{"format_version", kStoreFormatVersion}, {"documents", std::move(arr)}};
}

std::vector<Document> documents_from_json(const json& j) {
    try {
        if (j.at("format_version").get<int>() != kStoreFormatVersion)
            throw DataError("unsupported document store format_version");
        std::vector<Document> docs;
        std::unordered_set<std::string> ids;
        for (const auto& d : j.at("documents")) {
            Document doc;
            doc.doc_id = d.at("doc_id").get<std::string>();
            doc.kind = doc_kind_from_string(d.at("kind").get<std::string>());
            doc.text = d.at("text").get<std::string>();
            doc.keywords = d.at("keywords").get<std::vector<std::string>>();
            if (d.contains("embedding")) doc.embedding = d["embedding"].get<std::vector<double>>();
            if (!ids.insert(doc.doc_id).second) throw DuplicateDocId(doc.doc_id);
            docs.push_back(std::move(doc));
        }
        return docs;
    } catch (const json::exception& e) {
        throw DataError(std::string("corrupt document store: ") + e.what());
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::string& path, std::string_view content) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write file: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace lowres_rag
