#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace lowres_rag {

enum class RecordFormat { tsv, jsonl };

/// Picks the format from a file extension (".tsv" or ".jsonl").
RecordFormat format_from_path(std::string_view path);

struct LexiconEntry {
    std::string headword;
    std::vector<std::string> glosses;
    std::optional<std::string> pos;
    std::optional<std::vector<std::string>> morphemes;
    std::string source_id;

    /// False when the morphemes, hyphens removed, do not spell the headword.
    bool concatenative() const;

    bool operator==(const LexiconEntry&) const = default;
};

struct GrammarNote {
    std::string note_id;
    std::string title;
    std::string body;
    std::vector<std::string> keywords;

    bool operator==(const GrammarNote&) const = default;
};

struct ParallelPair {
    std::string source;
    std::vector<std::string> references;
    std::string pair_id;

    bool operator==(const ParallelPair&) const = default;
};

enum class DocKind { lexicon, grammar, example };

std::string_view to_string(DocKind kind);
DocKind doc_kind_from_string(std::string_view s);

struct Document {
    std::string doc_id;
    DocKind kind = DocKind::lexicon;
    std::string text;
    std::vector<std::string> keywords;
    std::optional<std::vector<double>> embedding;

    bool operator==(const Document&) const = default;
};

// TSV lexicon columns: headword, glosses (";"), optional pos, optional
// morphemes ("+"). Blank lines and lines starting with '#' are skipped in
// every parser; line numbers in errors are 1-based physical lines.
std::vector<LexiconEntry> parse_lexicon(std::string_view raw, RecordFormat format);

// TSV grammar columns: note_id, title, body, keywords (";").
std::vector<GrammarNote> parse_grammar(std::string_view raw, RecordFormat format);

// TSV parallel columns: source, reference 1, reference 2, ...
// pair_id defaults to the zero-padded record ordinal.
std::vector<ParallelPair> parse_parallel(std::string_view raw, RecordFormat format);

std::string serialize_lexicon(const std::vector<LexiconEntry>& entries, RecordFormat format);
std::string serialize_grammar(const std::vector<GrammarNote>& notes, RecordFormat format);
std::string serialize_parallel(const std::vector<ParallelPair>& pairs, RecordFormat format);

/// Renders every resource as a retrievable document. Example documents are
/// produced only when `include_examples` is set.
std::vector<Document> to_documents(const std::vector<LexiconEntry>& entries,
                                   const std::vector<GrammarNote>& notes,
                                   const std::vector<ParallelPair>& pairs,
                                   bool include_examples = true);

std::string render_lexicon_text(const LexiconEntry& e);

// Document store file: {"format_version":1,"documents":[...]}
nlohmann::json documents_to_json(const std::vector<Document>& docs);
std::vector<Document> documents_from_json(const nlohmann::json& j);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace lowres_rag
