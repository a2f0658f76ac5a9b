// lowres-rag: ingest resources, build indexes, translate with retrieval
// augmentation, score system outputs and run the LoRA demonstration.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "lowres_rag/errors.hpp"
#include "lowres_rag/pipeline.hpp"

namespace {

using namespace lowres_rag;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRemote = 3;

struct CommonOptions {
    std::string config;
    std::string manifest;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& opts, bool allow_manifest = false) {
    cmd->add_option("--config", opts.config, "INI config file");
    if (allow_manifest) cmd->add_option("--manifest", opts.manifest, "replay the config recorded in a run manifest");
    cmd->add_option("--set", opts.overrides, "override a config value, section.key=value (repeatable)");
}

PipelineConfig resolve_config(const CommonOptions& opts) {
    if (!opts.manifest.empty()) return load_config_from_manifest(opts.manifest, opts.overrides);
    if (opts.config.empty()) return config_from_map(parse_config_text("", opts.overrides), {});
    return load_config(opts.config, opts.overrides);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Retrieval-augmented translation toolkit for low-resource languages"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    CommonOptions ingest_opts, index_opts, translate_opts, evaluate_opts, lora_opts;

    auto* ingest = app.add_subcommand("ingest", "parse lexicon, grammar and parallel files into the document store");
    add_common(ingest, ingest_opts);

    auto* index = app.add_subcommand("index", "build the keyword and vector indexes from the store");
    add_common(index, index_opts);

    std::string input_path, output_path;
    bool no_retrieval = false;
    auto* translate = app.add_subcommand("translate", "translate one sentence per input line");
    add_common(translate, translate_opts, true);
    translate->add_option("--input", input_path, "source sentences, one per line")->required();
    translate->add_option("--output", output_path, "translation records (JSONL)")->required();
    std::size_t workers = 0;
    translate->add_option("--workers", workers, "worker threads (overrides run.workers)")->check(CLI::PositiveNumber);
    translate->add_flag("--no-retrieval", no_retrieval, "translate with an empty context (baseline)");

    std::vector<std::string> record_paths, systems;
    std::string report_path, parallel_override;
    bool x100 = false;
    auto* evaluate = app.add_subcommand("evaluate", "score records against the parallel corpus");
    add_common(evaluate, evaluate_opts);
    evaluate->add_option("--records", record_paths, "records JSONL, one per system (repeatable)")->required();
    evaluate->add_option("--system", systems, "display name per records file (repeatable)");
    evaluate->add_option("--parallel", parallel_override, "parallel corpus (overrides resources.parallel)");
    evaluate->add_option("--report", report_path, "write the report JSON here");
    evaluate->add_flag("--bleu-x100", x100, "show BLEU on a 0-100 scale in the table");

    auto* lora_demo = app.add_subcommand("lora-demo", "LoRA parameter count, planted-rank training, gradient check");
    add_common(lora_demo, lora_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            const auto cfg = resolve_config(ingest_opts);
            const auto res = run_ingest(cfg);
            std::cout << res.total() << " documents (lexicon " << res.lexicon << ", grammar " << res.grammar
                      << ", example " << res.examples << ") -> " << cfg.resolve(cfg.store_path) << "\n";
        } else if (*index) {
            const auto cfg = resolve_config(index_opts);
            const auto res = run_index(cfg);
            std::cout << "indexed " << res.documents << " documents, " << res.terms << " terms\n"
                      << "  keyword index " << cfg.resolve(cfg.keyword_index_path) << " [" << res.keyword_checksum
                      << "]\n"
                      << "  vector index  " << cfg.resolve(cfg.vector_index_path) << " [" << res.vector_checksum
                      << "]\n";
        } else if (*translate) {
            if (no_retrieval) translate_opts.overrides.push_back("retrieval.mode=none");
            if (workers > 0) translate_opts.overrides.push_back("run.workers=" + std::to_string(workers));
            const auto cfg = resolve_config(translate_opts);
            const auto res = run_translate(cfg, input_path, output_path);
            std::cout << res.records.size() << " records -> " << output_path << " (" << res.failed << " failed)\n"
                      << "manifest -> " << res.manifest_path << "\n";
            if (res.failed != 0) {
                for (const auto& r : res.records)
                    if (!r.ok) std::cerr << "failed [" << r.error_stage << "] " << r.error << "\n";
                return kExitData;
            }
        } else if (*evaluate) {
            if (!parallel_override.empty()) evaluate_opts.overrides.push_back("resources.parallel=" + parallel_override);
            if (x100) evaluate_opts.overrides.push_back("metrics.bleu_x100=true");
            auto cfg = resolve_config(evaluate_opts);
            // A --parallel path is relative to the working directory, not the config.
            if (!parallel_override.empty()) cfg.parallel_path = std::filesystem::absolute(parallel_override).string();
            const auto reports = run_evaluate(cfg, record_paths, systems, report_path);
            std::cout << metrics::render_table(reports, cfg.bleu_x100);
        } else if (*lora_demo) {
            const auto cfg = resolve_config(lora_opts);
            const auto res = run_lora_demo(cfg, std::cout);
            return res.ok ? kExitOk : kExitData;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const RemoteError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRemote;
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitOk;
}
