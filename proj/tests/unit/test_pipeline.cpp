#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "../oracles.hpp"
#include "lowres_rag/errors.hpp"
#include "lowres_rag/pipeline.hpp"

using namespace lowres_rag;
namespace fs = std::filesystem;

namespace {

/// Fresh copy of a fixture directory under the temp dir.
struct Workdir {
    fs::path root;
    explicit Workdir(const std::string& fixture) {
        root = fs::temp_directory_path() / ("lowres_rag_" + fixture + "_" + std::to_string(std::rand()));
        fs::remove_all(root);
        fs::create_directories(root);
        for (const auto& e : fs::directory_iterator(fs::path(LOWRES_RAG_FIXTURES) / fixture))
            if (e.is_regular_file()) fs::copy_file(e.path(), root / e.path().filename());
    }
    ~Workdir() { fs::remove_all(root); }
    std::string operator/(const std::string& rel) const { return (root / rel).string(); }
};

const char* kSmallIni = R"([resources]
lexicon = lexicon.tsv
grammar = grammar.jsonl
parallel = parallel.tsv

[store]
path = work/store.json

[index]
keyword = work/keyword_index.json
vector = work/vector_index.json
manifest = work/index_manifest.json
)";

void write(const std::string& path, const std::string& s) {
    std::ofstream f(path, std::ios::binary);
    f << s;
}

struct Cli {
    int code;
    std::string out;
};

Cli run_cli(const std::string& args) {
    const auto log = fs::temp_directory_path() / ("lowres_rag_cli_" + std::to_string(std::rand()) + ".log");
    const std::string cmd = std::string("\"") + LOWRES_RAG_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    Cli r{WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(log.string())};
    fs::remove(log);
    return r;
}

}  // namespace

TEST_CASE("config parsing") {
    auto m = parse_config_text("[retrieval]\nk = 3 ; comment\n# hash comment\nmode=keyword\n", {"retrieval.k=7"});
    CHECK(m.at("retrieval.k") == "7");
    CHECK(m.at("retrieval.mode") == "keyword");
    auto cfg = config_from_map(m, "/base");
    CHECK(cfg.k == 7);
    CHECK(cfg.retrieval_mode == RetrievalMode::keyword);
    CHECK(cfg.resolve("x.tsv") == "/base/x.tsv");
    CHECK(cfg.resolve("/abs/x.tsv") == "/abs/x.tsv");

    CHECK_THROWS_AS(config_from_map({{"retrieval.kk", "3"}}, "/"), ConfigError);
    CHECK_THROWS_AS(config_from_map({{"retrieval.k", "three"}}, "/"), ConfigError);
    CHECK_THROWS_AS(config_from_map({{"retrieval.mode", "fuzzy"}}, "/"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("", {"novalue"}), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/demo.ini"), Error);
}

TEST_CASE("ingest and index the small fixture") {
    Workdir w("small");
    write(w / "demo.ini", kSmallIni);
    auto cfg = load_config(w / "demo.ini");
    auto ing = run_ingest(cfg);
    CHECK(ing.total() == 10);
    const auto store1 = read_file(w / "work/store.json");
    run_ingest(cfg);
    CHECK(read_file(w / "work/store.json") == store1);

    auto idx = run_index(cfg);
    CHECK(idx.documents == 10);
    auto docs = documents_from_json(nlohmann::json::parse(store1));
    auto kw = keyword_index_from_json(nlohmann::json::parse(read_file(w / "work/keyword_index.json")));
    CHECK(kw.postings == oracle::postings(docs));
    auto idx2 = run_index(cfg);
    CHECK(idx2.keyword_checksum == idx.keyword_checksum);
    CHECK(idx2.vector_checksum == idx.vector_checksum);
    CHECK(file_checksum(w / "work/vector_index.json") == idx.vector_checksum);

    LoadedPipeline lp(cfg);
    CHECK(lp.documents().size() == 10);
    auto rec = translate_one(lp.pipeline(), "wasi");
    CHECK(rec.response == "house");
}

TEST_CASE("empty store gives valid empty indexes") {
    Workdir w("small");
    write(w / "empty.tsv", "");
    write(w / "empty.jsonl", "");
    write(w / "demo.ini", std::string(kSmallIni) + "\n");
    auto cfg = load_config(w / "demo.ini", {"resources.lexicon=empty.tsv", "resources.grammar=empty.jsonl",
                                            "resources.index_examples=false"});
    CHECK(run_ingest(cfg).total() == 0);
    auto idx = run_index(cfg);
    CHECK(idx.documents == 0);
    CHECK(idx.terms == 0);
    LoadedPipeline lp(cfg);
    CHECK(translate_one(lp.pipeline(), "wasi").response == "wasi");
}

TEST_CASE("tampered index is rejected") {
    Workdir w("small");
    write(w / "demo.ini", kSmallIni);
    auto cfg = load_config(w / "demo.ini");
    run_ingest(cfg);
    run_index(cfg);
    auto text = read_file(w / "work/keyword_index.json");
    write(w / "work/keyword_index.json", text + " ");
    CHECK_THROWS_AS(LoadedPipeline{cfg}, DataError);
}

TEST_CASE("cli ingest, translate and evaluate") {
    Workdir w("small");
    write(w / "demo.ini", kSmallIni);
    const std::string conf = " --config \"" + (w / "demo.ini") + "\"";

    auto r = run_cli("ingest" + conf);
    CHECK(r.code == 0);
    CHECK(r.out.find("10 documents") != std::string::npos);
    CHECK(run_cli("index" + conf).code == 0);

    write(w / "one.txt", "wasi\n");
    r = run_cli("translate" + conf + " --input \"" + (w / "one.txt") + "\" --output \"" + (w / "one.jsonl") + "\"");
    CHECK(r.code == 0);
    auto recs = records_from_jsonl(read_file(w / "one.jsonl"));
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].response == "house");

    write(w / "empty.txt", "");
    r = run_cli("translate" + conf + " --input \"" + (w / "empty.txt") + "\" --output \"" + (w / "empty.jsonl") +
                "\"");
    CHECK(r.code == 0);
    CHECK(read_file(w / "empty.jsonl").empty());

    r = run_cli("ingest --config \"" + (w / "demo.ini") + "\" --set resources.lexicon=missing.tsv");
    CHECK(r.code == 2);
    CHECK(r.out.find("missing.tsv") != std::string::npos);
    CHECK(run_cli("ingest --config \"" + (w / "nope.ini") + "\"").code != 0);
    CHECK(run_cli("frobnicate").code != 0);
}

TEST_CASE("cli on the 20-sentence fixture") {
    Workdir w("quechua");
    const std::string conf = " --config \"" + (w / "demo.ini") + "\"";
    REQUIRE(run_cli("ingest" + conf).code == 0);
    REQUIRE(run_cli("index" + conf).code == 0);
    const std::string in = " --input \"" + (w / "input.txt") + "\"";

    REQUIRE(run_cli("translate" + conf + in + " --output \"" + (w / "w1.jsonl") + "\" --workers 1").code == 0);
    REQUIRE(run_cli("translate" + conf + in + " --output \"" + (w / "w4.jsonl") + "\" --workers 4").code == 0);
    REQUIRE(run_cli("translate" + conf + in + " --output \"" + (w / "again.jsonl") + "\"").code == 0);
    REQUIRE(run_cli("translate" + conf + in + " --output \"" + (w / "base.jsonl") + "\" --no-retrieval").code == 0);
    const auto w1 = read_file(w / "w1.jsonl");
    CHECK(read_file(w / "w4.jsonl") == w1);
    CHECK(read_file(w / "again.jsonl") == w1);
    CHECK(records_from_jsonl(w1).size() == 20);

    // replay from the recorded manifest
    REQUIRE(run_cli("translate --manifest \"" + (w / "w1.jsonl.manifest.json") + "\"" + in + " --output \"" +
                    (w / "replay.jsonl") + "\"")
                .code == 0);
    CHECK(read_file(w / "replay.jsonl") == w1);

    // echo system: the first reference of every pair
    auto pairs = parse_parallel(read_file(w / "parallel.tsv"), RecordFormat::tsv);
    std::vector<TranslationRecord> echo;
    for (const auto& p : pairs) {
        TranslationRecord t;
        t.query = p.source;
        t.response = p.references.front();
        t.backend_name = "echo";
        echo.push_back(t);
    }
    write(w / "echo.jsonl", records_to_jsonl(echo));

    auto r = run_cli("evaluate" + conf + " --records \"" + (w / "w1.jsonl") + "\" --records \"" +
                     (w / "base.jsonl") + "\" --records \"" + (w / "echo.jsonl") +
                     "\" --system RAG --system baseline --system echo --report \"" + (w / "report.json") + "\"");
    REQUIRE(r.code == 0);
    auto rep = nlohmann::json::parse(read_file(w / "report.json"));
    REQUIRE(rep.size() == 3);
    CHECK(rep[0]["system"] == "RAG");
    CHECK(rep[2]["bleu"] == 1.0);
    CHECK(rep[2]["rouge"] == 1.0);
    CHECK(rep[2]["bert_f1"].get<double>() >= 0.999);
    CHECK(rep[0]["bleu"].get<double>() > rep[1]["bleu"].get<double>());
    CHECK(r.out.find("RAG") < r.out.find("baseline"));
    CHECK(r.out.find("baseline") < r.out.find("echo"));

    auto cfg = load_config(w / "demo.ini");
    auto emb = make_embedder(cfg);
    auto lib = metrics::evaluate_corpus(records_from_jsonl(w1), pairs, cfg.eval, *emb, "RAG");
    CHECK(rep[0]["bleu"].get<double>() == lib.bleu);
    CHECK(rep[0]["rouge"].get<double>() == lib.rouge);
    CHECK(rep[0]["bert_f1"].get<double>() == lib.bert_f1);

    // misaligned records name the offending pair
    auto shuffled = records_from_jsonl(w1);
    std::swap(shuffled[3], shuffled[4]);
    write(w / "bad.jsonl", records_to_jsonl(shuffled));
    r = run_cli("evaluate" + conf + " --records \"" + (w / "bad.jsonl") + "\" --report \"" + (w / "bad.json") + "\"");
    CHECK(r.code == 2);
    CHECK(r.out.find(pairs[3].pair_id) != std::string::npos);
}

TEST_CASE("cli lora demo") {
    Workdir w("quechua");
    auto r = run_cli("lora-demo --config \"" + (w / "demo.ini") + "\"");
    CHECK(r.code == 0);
    CHECK(r.out.find("512") != std::string::npos);
    CHECK(r.out.find("4096") != std::string::npos);
    CHECK(r.out.find("0.125") != std::string::npos);

    auto cfg = load_config(w / "demo.ini");
    std::ostringstream out;
    auto res = run_lora_demo(cfg, out);
    CHECK(res.ok);
    CHECK(res.final_loss < 0.01 * res.initial_loss);
    CHECK(res.grad_rel_error < 1e-4);
    CHECK(res.attention_grad_rel_error < 1e-4);
}
