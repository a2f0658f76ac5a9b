#include "lowres_rag/pipeline.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "lowres_rag/errors.hpp"
#include "lowres_rag/lora_lab.hpp"
#include "lowres_rag/resource_store.hpp"
#include "lowres_rag/text.hpp"

namespace lowres_rag {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

bool parse_bool(const std::string& key, const std::string& v) {
    const std::string s = text::fold(v);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::size_t parse_size(const std::string& key, const std::string& v, std::size_t min_value) {
    try {
        std::size_t used = 0;
        const long long n = std::stoll(v, &used);
        if (used != v.size() || n < static_cast<long long>(min_value)) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer >= " + std::to_string(min_value) + ", got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

json read_json_file(const std::string& path) {
    const std::string raw = read_file(path);
    try {
        return json::parse(raw);
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
}

template <typename Fn>
auto with_path(const std::string& path, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const MalformedRecord& e) {
        throw DataError(path + ": " + e.what());
    } catch (const EmptyHeadword& e) {
        throw DataError(path + ": " + e.what());
    } catch (const MissingReference& e) {
        throw DataError(path + ": " + e.what());
    }
}

std::vector<ParallelPair> load_parallel(const PipelineConfig& cfg) {
    if (cfg.parallel_path.empty()) return {};
    const auto path = cfg.resolve(cfg.parallel_path);
    const auto raw = read_file(path);
    return with_path(path, [&] { return parse_parallel(raw, format_from_path(path)); });
}

}  // namespace

std::string PipelineConfig::resolve(const std::string& p) const {
    if (p.empty()) return p;
    fs::path path(p);
    if (path.is_absolute() || base_dir.empty()) return path.string();
    return (base_dir / path).lexically_normal().string();
}

ConfigMap parse_config_text(const std::string& ini_text, const std::vector<std::string>& overrides) {
    boost::property_tree::ptree tree;
    std::istringstream in(ini_text);
    try {
        boost::property_tree::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    ConfigMap map;
    for (const auto& [section, child] : tree) {
        if (child.empty()) throw ConfigError("config key '" + section + "' must live inside a [section]");
        for (const auto& [key, value] : child) map[section + "." + key] = value.get_value<std::string>();
    }
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos || ov.find('.') > eq)
            throw ConfigError("override must look like section.key=value: " + ov);
        map[text::trim(ov.substr(0, eq))] = text::trim(ov.substr(eq + 1));
    }
    return map;
}

PipelineConfig config_from_map(const ConfigMap& map, const fs::path& base_dir) {
    PipelineConfig c;
    c.base_dir = base_dir;
    c.raw = map;
    std::map<std::string, std::string> prompt_section;
    for (const auto& [key, v] : map) {
        if (key == "resources.lexicon") c.lexicon_path = v;
        else if (key == "resources.grammar") c.grammar_path = v;
        else if (key == "resources.parallel") c.parallel_path = v;
        else if (key == "resources.index_examples") c.index_examples = parse_bool(key, v);
        else if (key == "store.path") c.store_path = v;
        else if (key == "index.keyword") c.keyword_index_path = v;
        else if (key == "index.vector") c.vector_index_path = v;
        else if (key == "index.manifest") c.index_manifest_path = v;
        else if (key == "embedding.provider") c.embedding_provider = v;
        else if (key == "embedding.dim") c.embedding_dim = parse_size(key, v, 1);
        else if (key == "embedding.base_url") c.remote_embedding.base_url = v;
        else if (key == "embedding.path") c.remote_embedding.path = v;
        else if (key == "embedding.model") c.remote_embedding.model = v;
        else if (key == "embedding.max_in_flight") c.remote_embedding.max_in_flight = parse_size(key, v, 1);
        else if (key == "retrieval.mode") c.retrieval_mode = retrieval_mode_from_string(v);
        else if (key == "retrieval.k") c.k = parse_size(key, v, 1);
        else if (key.rfind("prompt.", 0) == 0) prompt_section[key.substr(7)] = v;
        else if (key == "backend.kind") c.backend = v;
        else if (key == "backend.base_url") c.remote_backend.base_url = v;
        else if (key == "backend.path") c.remote_backend.path = v;
        else if (key == "backend.model") c.remote_backend.model_id = v;
        else if (key == "backend.temperature") c.remote_backend.temperature = parse_double(key, v);
        else if (key == "backend.max_output_tokens")
            c.remote_backend.max_output_tokens = static_cast<int>(parse_size(key, v, 1));
        else if (key == "backend.max_in_flight") c.remote_backend.max_in_flight = parse_size(key, v, 1);
        else if (key == "backend.context_in_system") c.remote_backend.context_in_system = parse_bool(key, v);
        else if (key == "backend.max_attempts") {
            c.remote_backend.retry.max_attempts = static_cast<int>(parse_size(key, v, 1));
            c.remote_embedding.retry.max_attempts = c.remote_backend.retry.max_attempts;
        } else if (key == "backend.timeout_s") c.timeout_s = static_cast<int>(parse_size(key, v, 1));
        else if (key == "metrics.rouge_variant") c.eval.rouge_variant = metrics::rouge_variant_from_string(v);
        else if (key == "metrics.bleu_smoothing") c.eval.bleu_smoothing = metrics::smoothing_from_string(v);
        else if (key == "metrics.max_n") c.eval.max_n = parse_size(key, v, 1);
        else if (key == "metrics.bleu_x100") c.bleu_x100 = parse_bool(key, v);
        else if (key == "run.workers") c.workers = parse_size(key, v, 1);
        else if (key == "run.seed") c.seed = parse_size(key, v, 0);
        else if (key == "lora.d") c.lora.d = parse_size(key, v, 1);
        else if (key == "lora.k") c.lora.k = parse_size(key, v, 1);
        else if (key == "lora.r") c.lora.r = parse_size(key, v, 1);
        else if (key == "lora.samples") c.lora.samples = parse_size(key, v, 1);
        else if (key == "lora.steps") c.lora.steps = parse_size(key, v, 1);
        else if (key == "lora.lr") c.lora.lr = parse_double(key, v);
        else throw ConfigError("unknown config key: " + key);
    }
    if (c.remote_backend.temperature < 0.0) throw ConfigError("backend.temperature must be >= 0");
    c.prompt = template_from_config(prompt_section);
    if (c.embedding_provider != "offline" && c.embedding_provider != "remote")
        throw ConfigError("embedding.provider must be 'offline' or 'remote'");
    if (c.backend != "mock" && c.backend != "remote") throw ConfigError("backend.kind must be 'mock' or 'remote'");
    return c;
}

PipelineConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    const fs::path base = fs::absolute(fs::path(path)).parent_path();
    return config_from_map(parse_config_text(os.str(), overrides), base);
}

PipelineConfig load_config_from_manifest(const std::string& manifest_path, const std::vector<std::string>& overrides) {
    json m;
    try {
        m = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
        throw ConfigError(manifest_path + ": " + e.what());
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    try {
        ConfigMap map = m.at("config").get<ConfigMap>();
        for (const auto& [k, v] : parse_config_text("", overrides)) map[k] = v;
        return config_from_map(map, fs::path(m.at("base_dir").get<std::string>()));
    } catch (const json::exception& e) {
        throw ConfigError(manifest_path + ": not a run manifest: " + e.what());
    }
}

std::unique_ptr<EmbeddingProvider> make_embedder(const PipelineConfig& cfg) {
    if (cfg.embedding_provider == "offline") return std::make_unique<OfflineEmbedder>(cfg.embedding_dim);
    if (cfg.remote_embedding.base_url.empty()) throw ConfigError("embedding.base_url is required for remote");
    return std::make_unique<RemoteEmbedder>(
        cfg.remote_embedding, make_http_transport(cfg.remote_embedding.base_url, std::chrono::seconds(cfg.timeout_s)));
}

std::unique_ptr<CompletionBackend> make_backend(const PipelineConfig& cfg) {
    if (cfg.backend == "mock") return std::make_unique<MockBackend>();
    if (cfg.remote_backend.base_url.empty()) throw ConfigError("backend.base_url is required for remote");
    return std::make_unique<RemoteBackend>(
        cfg.remote_backend, make_http_transport(cfg.remote_backend.base_url, std::chrono::seconds(cfg.timeout_s)));
}

std::string file_checksum(const std::string& path) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(read_file(path))));
    return buf;
}

IngestResult run_ingest(const PipelineConfig& cfg) {
    std::vector<LexiconEntry> entries;
    std::vector<GrammarNote> notes;
    if (!cfg.lexicon_path.empty()) {
        const auto path = cfg.resolve(cfg.lexicon_path);
        const auto raw = read_file(path);
        entries = with_path(path, [&] { return parse_lexicon(raw, format_from_path(path)); });
    }
    if (!cfg.grammar_path.empty()) {
        const auto path = cfg.resolve(cfg.grammar_path);
        const auto raw = read_file(path);
        notes = with_path(path, [&] { return parse_grammar(raw, format_from_path(path)); });
    }
    const auto pairs = load_parallel(cfg);
    const auto docs = to_documents(entries, notes, pairs, cfg.index_examples);
    write_file(cfg.resolve(cfg.store_path), documents_to_json(docs).dump(1) + "\n");
    return IngestResult{entries.size(), notes.size(), cfg.index_examples ? pairs.size() : 0};
}

IndexResult run_index(const PipelineConfig& cfg) {
    const auto docs = documents_from_json(read_json_file(cfg.resolve(cfg.store_path)));
    const auto kw_path = cfg.resolve(cfg.keyword_index_path);
    const auto vec_path = cfg.resolve(cfg.vector_index_path);
    const auto manifest_path = cfg.resolve(cfg.index_manifest_path);
    const std::vector<std::string> finals{kw_path, vec_path, manifest_path};
    auto cleanup = [&] {
        std::error_code ec;
        for (const auto& p : finals) {
            fs::remove(p + ".tmp", ec);
            fs::remove(p, ec);
        }
    };
    try {
        const auto embedder = make_embedder(cfg);
        const auto kw = build_keyword_index(docs);
        write_file(kw_path + ".tmp", keyword_index_to_json(kw).dump(1) + "\n");
        const auto vec = build_vector_index(docs, *embedder);
        write_file(vec_path + ".tmp", vector_index_to_json(vec, embedder->name()).dump() + "\n");

        IndexResult res{docs.size(), kw.postings.size(), file_checksum(kw_path + ".tmp"),
                        file_checksum(vec_path + ".tmp")};
        const json manifest{{"format_version", 1},
                            {"store_checksum", file_checksum(cfg.resolve(cfg.store_path))},
                            {"keyword_index", {{"path", cfg.keyword_index_path}, {"checksum", res.keyword_checksum}}},
                            {"vector_index",
                             {{"path", cfg.vector_index_path},
                              {"checksum", res.vector_checksum},
                              {"provider", embedder->name()},
                              {"dim", vec.dim}}}};
        write_file(manifest_path + ".tmp", manifest.dump(2) + "\n");
        for (const auto& p : finals) fs::rename(p + ".tmp", p);
        return res;
    } catch (...) {
        cleanup();
        throw;
    }
}

LoadedPipeline::LoadedPipeline(const PipelineConfig& cfg) : cfg_(cfg) {
    documents_ = documents_from_json(read_json_file(cfg.resolve(cfg.store_path)));
    docs_by_id_ = index_documents(documents_);
    const auto manifest_path = cfg.resolve(cfg.index_manifest_path);
    if (fs::exists(manifest_path)) {
        const json m = read_json_file(manifest_path);
        const auto check = [&](const std::string& path, const char* key) {
            const auto expected = m.at(key).at("checksum").get<std::string>();
            if (file_checksum(path) != expected) throw DataError(path + " changed since it was indexed");
        };
        check(cfg.resolve(cfg.keyword_index_path), "keyword_index");
        check(cfg.resolve(cfg.vector_index_path), "vector_index");
    }
    keyword_index_ = keyword_index_from_json(read_json_file(cfg.resolve(cfg.keyword_index_path)));
    vector_index_ = vector_index_from_json(read_json_file(cfg.resolve(cfg.vector_index_path)));
    embedder_ = make_embedder(cfg);
    if (embedder_->dim() != 0 && vector_index_.dim != embedder_->dim())
        throw DataError("vector index dim " + std::to_string(vector_index_.dim) + " does not match embedder dim " +
                        std::to_string(embedder_->dim()));
    backend_ = make_backend(cfg);
    pipeline_ = Pipeline{&docs_by_id_, &keyword_index_, &vector_index_, embedder_.get(), backend_.get(),
                         cfg.prompt,   cfg.retrieval_mode, cfg.k};
}

std::map<std::string, std::string> LoadedPipeline::index_checksums() const {
    return {{"store", file_checksum(cfg_.resolve(cfg_.store_path))},
            {"keyword_index", file_checksum(cfg_.resolve(cfg_.keyword_index_path))},
            {"vector_index", file_checksum(cfg_.resolve(cfg_.vector_index_path))}};
}

std::vector<std::string> read_lines(const std::string& path) {
    const std::string raw = read_file(path);
    std::vector<std::string> lines;
    std::istringstream in(raw);
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    return lines;
}

TranslateResult run_translate(const PipelineConfig& cfg, const std::string& input_path,
                              const std::string& output_path) {
    const auto sources = read_lines(input_path);
    LoadedPipeline loaded(cfg);
    TranslateResult res;
    res.records = translate_batch(loaded.pipeline(), sources, cfg.workers);
    for (const auto& r : res.records) res.failed += r.ok ? 0 : 1;
    write_file(output_path, records_to_jsonl(res.records));

    res.manifest_path = output_path + ".manifest.json";
    const json manifest{{"tool", "lowres-rag"},
                        {"version", kToolVersion},
                        {"timestamp", utc_timestamp()},
                        {"base_dir", cfg.base_dir.string()},
                        {"config", cfg.raw},
                        {"index_checksums", loaded.index_checksums()},
                        {"input", {{"path", input_path}, {"checksum", file_checksum(input_path)}}},
                        {"outputs", {{"records", output_path}, {"records_checksum", file_checksum(output_path)}}},
                        {"counts", {{"records", res.records.size()}, {"failed", res.failed}}}};
    write_file(res.manifest_path, manifest.dump(2) + "\n");
    return res;
}

std::vector<metrics::MetricReport> run_evaluate(const PipelineConfig& cfg, const std::vector<std::string>& record_paths,
                                                const std::vector<std::string>& systems,
                                                const std::string& report_path) {
    if (record_paths.empty()) throw ConfigError("evaluate needs at least one records file");
    if (!systems.empty() && systems.size() != record_paths.size())
        throw ConfigError("--system must be given once per records file");
    const auto pairs = load_parallel(cfg);
    const auto embedder = make_embedder(cfg);
    std::vector<metrics::MetricReport> reports;
    for (std::size_t i = 0; i < record_paths.size(); ++i) {
        const auto records = records_from_jsonl(read_file(record_paths[i]));
        const std::string name = systems.empty() ? fs::path(record_paths[i]).stem().string() : systems[i];
        reports.push_back(metrics::evaluate_corpus(records, pairs, cfg.eval, *embedder, name));
    }
    if (!report_path.empty()) {
        json out;
        if (reports.size() == 1) {
            out = metrics::report_to_json(reports.front());
        } else {
            out = json::array();
            for (const auto& r : reports) out.push_back(metrics::report_to_json(r));
        }
        write_file(report_path, out.dump(2) + "\n");
        write_file(report_path + ".table.txt", metrics::render_table(reports, cfg.bleu_x100));
    }
    return reports;
}

LoraDemoResult run_lora_demo(const PipelineConfig& cfg, std::ostream& out) {
    const auto& lc = cfg.lora;
    LoraDemoResult res;
    res.params = lora::trainable_param_count(lc.d, lc.k, lc.r);
    out << "LoRA parameter count (d=" << lc.d << ", k=" << lc.k << ", r=" << lc.r << ")\n"
        << "  adapter params : " << res.params.lora_params << "\n"
        << "  full params    : " << res.params.full_params << "\n"
        << "  ratio          : " << res.params.ratio << "\n";
    if (res.params.rank_warning) out << "  warning: r >= min(d, k)/2, the low-rank saving is small\n";

    const auto problem = lora::make_planted_rank1(lc.d, lc.k, lc.samples, cfg.seed);
    const auto w_before = lora::checksum(problem.w);
    lora::TrainOptions opts;
    opts.steps = lc.steps;
    opts.lr = lc.lr;
    opts.seed = cfg.seed;
    const auto trained =
        lora::train_adapter(problem.w, problem.data, lora::init_adapter(lc.d, lc.k, lc.r, cfg.seed + 1), opts);
    res.initial_loss = trained.loss_trace.front();
    res.final_loss = trained.final_loss;
    res.grad_rel_error = trained.grad_check.max_rel_error;

    out << "\nPlanted rank-1 recovery (" << lc.samples << " samples, " << lc.steps << " steps, lr " << lc.lr << ")\n";
    const std::size_t stride = std::max<std::size_t>(1, lc.steps / 10);
    for (std::size_t s = 0; s < trained.loss_trace.size(); s += stride)
        out << "  step " << std::setw(6) << s << "  loss " << std::scientific << std::setprecision(4)
            << trained.loss_trace[s] << std::defaultfloat << "\n";
    out << "  final        loss " << std::scientific << res.final_loss << std::defaultfloat << "\n";
    const double ratio = res.final_loss / res.initial_loss;
    out << "  final/initial = " << ratio << (ratio < 0.01 ? "  [ok]" : "  [FAIL: >= 0.01]") << "\n";
    const bool frozen = lora::checksum(problem.w) == w_before;
    out << "  base weights unchanged: " << (frozen ? "yes" : "NO") << "\n";

    // Gradient check on a toy attention layer with query and value adapters.
    std::mt19937_64 rng(cfg.seed + 7);
    std::normal_distribution<double> normal(0.0, 0.5);
    const std::size_t dm = 6, dh = 4, t = 5;
    auto random_matrix = [&](std::size_t r, std::size_t c) {
        lora::Matrix m(r, c);
        for (double& x : m.data()) x = normal(rng);
        return m;
    };
    lora::ToyAttentionLayer layer{random_matrix(dm, dh), random_matrix(dm, dh), random_matrix(dm, dh), {}, {}};
    lora::LowRankAdapter q{random_matrix(dm, 2), random_matrix(2, dh), lora::AdapterTarget::query, 1.0};
    lora::LowRankAdapter v{random_matrix(dm, 2), random_matrix(2, dh), lora::AdapterTarget::value, 1.0};
    layer.attach(q);
    layer.attach(v);
    std::vector<lora::SequenceSample> seqs;
    for (int i = 0; i < 3; ++i) seqs.push_back({random_matrix(t, dm), random_matrix(t, dh)});
    res.attention_grad_rel_error = lora::attention_gradient_check(layer, seqs).max_rel_error;

    out << "\nGradient check (central differences, h = 1e-5)\n"
        << "  projection adapter : max rel error " << std::scientific << res.grad_rel_error << "\n"
        << "  attention q/v      : max rel error " << res.attention_grad_rel_error << std::defaultfloat << "\n";
    const bool grads_ok = res.grad_rel_error < 1e-4 && res.attention_grad_rel_error < 1e-4;
    out << "  verdict: " << (grads_ok ? "PASS" : "FAIL") << "\n";

    res.ok = ratio < 0.01 && frozen && grads_ok;
    return res;
}

}  // namespace lowres_rag
