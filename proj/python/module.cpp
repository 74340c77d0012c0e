#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "empathy/cli.hpp"
#include "empathy/error.hpp"
#include "empathy/judging.hpp"
#include "empathy/metrics.hpp"
#include "empathy/mock.hpp"
#include "empathy/retrieval.hpp"

namespace py = pybind11;
using namespace empathy;

namespace {

TokenSequence to_seq(const std::vector<std::string>& tokens) { return {tokens}; }

std::vector<TokenEmbedding> to_token_embeddings(const std::vector<std::vector<double>>& rows) {
    std::vector<TokenEmbedding> out;
    out.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out.push_back({std::to_string(i), Embedding{rows[i]}});
    return out;
}

py::dict score_dict(const BertScore& s) {
    py::dict d;
    d["precision"] = s.precision;
    d["recall"] = s.recall;
    d["f1"] = s.f1;
    return d;
}

}  // namespace

PYBIND11_MODULE(_empathy, m) {
    m.doc() = "Native core of the empathetic dialogue toolkit.";

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", base.ptr());
    py::register_exception<UndefinedCorrelationError>(m, "UndefinedCorrelationError", base.ptr());
    py::register_exception<ProviderError>(m, "ProviderError", base.ptr());

    m.def("tokenize", [](std::string_view text) { return tokenize(text).tokens; }, py::arg("text"));

    m.def(
        "distinct_n",
        [](const std::vector<std::vector<std::string>>& responses, std::size_t n) {
            std::vector<TokenSequence> seqs;
            for (const auto& r : responses) seqs.push_back(to_seq(r));
            return distinct_n(seqs, n);
        },
        py::arg("responses"), py::arg("n"));

    m.def(
        "corpus_bleu",
        [](const std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>& pairs, std::size_t max_n) {
            std::vector<BleuPair> bp;
            for (const auto& [cand, ref] : pairs) bp.push_back({to_seq(cand), to_seq(ref)});
            return corpus_bleu(bp, max_n);
        },
        py::arg("pairs"), py::arg("max_n"), "pairs are (candidate_tokens, reference_tokens)");

    m.def(
        "bert_score",
        [](const std::vector<std::vector<double>>& candidate, const std::vector<std::vector<double>>& reference) {
            return score_dict(bert_score(to_token_embeddings(candidate), to_token_embeddings(reference)));
        },
        py::arg("candidate"), py::arg("reference"), "rows are per-token vectors");

    m.def(
        "spearman", [](const std::vector<double>& x, const std::vector<double>& y) { return spearman(x, y); },
        py::arg("x"), py::arg("y"));
    m.def(
        "kendall_tau", [](const std::vector<double>& x, const std::vector<double>& y) { return kendall_tau(x, y); },
        py::arg("x"), py::arg("y"));

    m.def(
        "parse_judge_verdict",
        [](std::string_view reply) -> std::optional<std::string> {
            const auto v = parse_judge_verdict(reply);
            if (!v) return std::nullopt;
            switch (*v) {
                case ShownVerdict::First: return "A";
                case ShownVerdict::Second: return "B";
                case ShownVerdict::Tie: return "tie";
            }
            return std::nullopt;
        },
        py::arg("reply"));

    m.def(
        "aspect_definition", [](std::string_view name) { return std::string(aspect_definition(parse_aspect(name))); },
        py::arg("aspect"));

    m.def(
        "mock_embedding",
        [](std::string_view text, std::size_t dimension) {
            MockSentenceEmbedder e(dimension);
            return e.embed(text).values;
        },
        py::arg("text"), py::arg("dimension") = kDefaultEmbeddingDim);

    m.def(
        "cosine_similarity",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            return cosine_similarity(Embedding{a}, Embedding{b});
        },
        py::arg("a"), py::arg("b"));

    // Returns (exit_code, stdout, stderr). The GIL is released for long runs.
    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = cli::dispatch(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
