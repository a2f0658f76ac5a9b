#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include "lowres_rag/embedding.hpp"
#include "lowres_rag/errors.hpp"
#include "lowres_rag/llm_gateway.hpp"
#include "lowres_rag/lora_lab.hpp"
#include "lowres_rag/metrics.hpp"
#include "lowres_rag/prompt_builder.hpp"
#include "lowres_rag/resource_store.hpp"
#include "lowres_rag/retrieval.hpp"
#include "lowres_rag/text.hpp"

namespace py = pybind11;
using namespace lowres_rag;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

lora::Matrix to_matrix(const Array& a) {
    if (a.ndim() != 2) throw ShapeMismatch("expected a 2-D array");
    const auto r = static_cast<std::size_t>(a.shape(0));
    const auto c = static_cast<std::size_t>(a.shape(1));
    return lora::Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const lora::Matrix& m) {
    Array out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

RecordFormat parse_format(const std::string& f) {
    if (f == "tsv") return RecordFormat::tsv;
    if (f == "jsonl") return RecordFormat::jsonl;
    throw ConfigError("format must be 'tsv' or 'jsonl'");
}


py::tuple prf_tuple(const metrics::Prf& p) { return py::make_tuple(p.precision, p.recall, p.f1); }

// Owns a document store, both indexes and the mock backend.
class MockTranslator {
public:
    MockTranslator(const std::string& lexicon_tsv, const std::string& grammar_jsonl, const std::string& parallel_tsv,
                   std::size_t k, const std::string& mode, std::size_t dim)
        : embedder_(dim) {
        docs_ = to_documents(parse_lexicon(lexicon_tsv, RecordFormat::tsv),
                             parse_grammar(grammar_jsonl, RecordFormat::jsonl),
                             parse_parallel(parallel_tsv, RecordFormat::tsv));
        by_id_ = index_documents(docs_);
        kw_ = build_keyword_index(docs_);
        vec_ = build_vector_index(docs_, embedder_);
        pipeline_ = Pipeline{&by_id_, &kw_, &vec_, &embedder_, &backend_, PromptTemplate{},
                             retrieval_mode_from_string(mode), k};
    }

    py::dict translate(const std::string& source) const {
        const auto rec = translate_one(pipeline_, source);
        py::dict d;
        d["query"] = rec.query;
        d["retrieved_ids"] = rec.retrieved_ids;
        d["response"] = rec.response;
        d["prompt"] = render_user_message(rec.prompt);
        d["system"] = rec.prompt.system;
        return d;
    }

    std::vector<std::string> translate_batch(const std::vector<std::string>& sources, std::size_t workers) const {
        std::vector<std::string> out;
        for (const auto& r : lowres_rag::translate_batch(pipeline_, sources, workers)) out.push_back(r.response);
        return out;
    }

    std::vector<std::pair<std::string, std::string>> documents() const {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& d : docs_) out.emplace_back(d.doc_id, d.text);
        return out;
    }

private:
    std::vector<Document> docs_;
    DocumentMap by_id_;
    KeywordIndex kw_;
    VectorIndex vec_;
    OfflineEmbedder embedder_;
    MockBackend backend_;
    Pipeline pipeline_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Retrieval-augmented low-resource translation toolkit (C++ core)";

    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<RemoteError>(m, "RemoteError", PyExc_RuntimeError);

    m.def("normalize_term", &text::normalize_term, py::arg("term"));
    m.def("query_terms", &text::query_terms, py::arg("text"));
    m.def("metric_tokens", &text::metric_tokens, py::arg("text"));

    m.def(
        "parse_lexicon",
        [](const std::string& raw, const std::string& format) {
            py::list out;
            for (const auto& e : parse_lexicon(raw, parse_format(format))) {
                py::dict d;
                d["headword"] = e.headword;
                d["glosses"] = e.glosses;
                d["pos"] = e.pos;
                d["morphemes"] = e.morphemes;
                out.append(d);
            }
            return out;
        },
        py::arg("raw"), py::arg("format") = "tsv");

    py::class_<OfflineEmbedder>(m, "OfflineEmbedder")
        .def(py::init<std::size_t>(), py::arg("dim") = OfflineEmbedder::kDefaultDim)
        .def_property_readonly("dim", &OfflineEmbedder::dim)
        .def("embed", [](const OfflineEmbedder& e, const std::string& s) { return e.embed(s); })
        .def("embed_batch", [](const OfflineEmbedder& e, const std::vector<std::string>& s) { return e.embed_batch(s); });

    m.def("cosine_similarity", &cosine_similarity, py::arg("u"), py::arg("v"));

    py::class_<MockTranslator>(m, "MockTranslator")
        .def(py::init<const std::string&, const std::string&, const std::string&, std::size_t, const std::string&,
                      std::size_t>(),
             py::arg("lexicon_tsv"), py::arg("grammar_jsonl") = "", py::arg("parallel_tsv") = "",
             py::arg("k") = kDefaultTopK, py::arg("mode") = "hybrid", py::arg("dim") = OfflineEmbedder::kDefaultDim)
        .def("translate", &MockTranslator::translate, py::arg("source"))
        .def("translate_batch", &MockTranslator::translate_batch, py::arg("sources"), py::arg("workers") = 1,
             py::call_guard<py::gil_scoped_release>())
        .def("documents", &MockTranslator::documents);

    m.def(
        "bleu",
        [](const std::string& cand, const std::vector<std::string>& refs, std::size_t max_n, const std::string& sm) {
            std::vector<metrics::TokenSeq> r;
            for (const auto& s : refs) r.push_back(metrics::tokenize(s));
            return metrics::bleu(metrics::tokenize(cand), r, max_n, metrics::smoothing_from_string(sm));
        },
        py::arg("candidate"), py::arg("references"), py::arg("max_n") = 4, py::arg("smoothing") = "add_one");
    m.def(
        "rouge_n",
        [](const std::string& c, const std::string& r, std::size_t n) {
            return prf_tuple(metrics::rouge_n(metrics::tokenize(c), metrics::tokenize(r), n));
        },
        py::arg("candidate"), py::arg("reference"), py::arg("n") = 1);
    m.def(
        "rouge_l",
        [](const std::string& c, const std::string& r) {
            return prf_tuple(metrics::rouge_l(metrics::tokenize(c), metrics::tokenize(r)));
        },
        py::arg("candidate"), py::arg("reference"));
    m.def(
        "bertscore",
        [](const std::string& c, const std::string& r, std::size_t dim) {
            OfflineEmbedder e(dim);
            return prf_tuple(metrics::bertscore(metrics::tokenize(c), metrics::tokenize(r), e));
        },
        py::arg("candidate"), py::arg("reference"), py::arg("dim") = OfflineEmbedder::kDefaultDim);

    m.def(
        "delta_w", [](const Array& a, const Array& b) { return to_array(lora::delta_w({to_matrix(a), to_matrix(b)})); },
        py::arg("a"), py::arg("b"));
    m.def(
        "apply_adapter",
        [](const Array& w, const Array& a, const Array& b) {
            return to_array(lora::apply_adapter(to_matrix(w), {to_matrix(a), to_matrix(b)}));
        },
        py::arg("w"), py::arg("a"), py::arg("b"));
    m.def(
        "adapted_forward",
        [](const std::vector<double>& x, const Array& w, const Array& a, const Array& b) {
            return lora::adapted_forward(x, to_matrix(w), {to_matrix(a), to_matrix(b)});
        },
        py::arg("x"), py::arg("w"), py::arg("a"), py::arg("b"));
    m.def(
        "trainable_param_count",
        [](std::size_t d, std::size_t k, std::size_t r) {
            const auto pc = lora::trainable_param_count(d, k, r);
            return std::make_tuple(pc.lora_params, pc.full_params, pc.ratio);
        },
        py::arg("d"), py::arg("k"), py::arg("r"));
    m.def(
        "init_adapter",
        [](std::size_t d, std::size_t k, std::size_t r, std::uint64_t seed) {
            const auto ad = lora::init_adapter(d, k, r, seed);
            return py::make_tuple(to_array(ad.a), to_array(ad.b));
        },
        py::arg("d"), py::arg("k"), py::arg("r"), py::arg("seed") = 0);
    m.def(
        "planted_rank1_training",
        [](std::size_t d, std::size_t k, std::size_t r, std::size_t samples, std::size_t steps, double lr,
           std::uint64_t seed) {
            const auto p = lora::make_planted_rank1(d, k, samples, seed);
            lora::TrainOptions opts{steps, lr, seed, 16};
            const auto res = lora::train_adapter(p.w, p.data, lora::init_adapter(d, k, r, seed + 1), opts);
            py::dict out;
            out["loss_trace"] = res.loss_trace;
            out["final_loss"] = res.final_loss;
            out["grad_rel_error"] = res.grad_check.max_rel_error;
            return out;
        },
        py::arg("d") = 16, py::arg("k") = 16, py::arg("r") = 1, py::arg("samples") = 64, py::arg("steps") = 1000,
        py::arg("lr") = 2.0, py::arg("seed") = 0);
}
