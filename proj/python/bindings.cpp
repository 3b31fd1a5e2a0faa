#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "taskforge/gateway.hpp"
#include "taskforge/matching.hpp"
#include "taskforge/referee.hpp"
#include "taskforge/sampler.hpp"
#include "taskforge/taxonomy.hpp"

namespace py = pybind11;
using namespace taskforge;

namespace {

EmbeddingVector to_vec(const std::vector<double>& values) {
    EmbeddingVector v;
    v.values = values;
    return v;
}

}  // namespace

PYBIND11_MODULE(_taskforge, m) {
    m.doc() = "Core routines for balanced multimodal Q&A dataset construction";

    py::register_exception<Error>(m, "TaskforgeError");

    m.def("parse_path",
          [](const std::string& text) { return TaskTypePath::parse(text).levels(); },
          py::arg("text"),
          "Parse a '~'-joined task path into its normalized levels.");
    m.def("render_path",
          [](const std::vector<std::string>& levels) {
              return TaskTypePath(levels).render();
          },
          py::arg("levels"));

    m.def("cosine",
          [](const std::vector<double>& u, const std::vector<double>& v) {
              return cosine(to_vec(u), to_vec(v));
          },
          py::arg("u"), py::arg("v"));

    m.def("top_k",
          [](const std::vector<double>& image_embedding,
             const std::vector<std::pair<std::string, std::vector<double>>>& tasks, int k) {
              std::vector<ScoredTask> scored;
              scored.reserve(tasks.size());
              for (const auto& [path, emb] : tasks)
                  scored.push_back({TaskTypePath::parse(path), to_vec(emb)});
              MatchConfig cfg;
              cfg.k = k;
              std::vector<std::tuple<std::string, double, int>> out;
              for (const auto& match : top_k_tasks("", to_vec(image_embedding), scored, cfg))
                  out.emplace_back(match.task_path.render(), match.score, match.rank);
              return out;
          },
          py::arg("image_embedding"), py::arg("tasks"), py::arg("k") = 10,
          "Top-k (path, score, rank) tuples sorted by score desc, path asc.");

    m.def("parse_filter_response",
          [](const std::string& text, const std::vector<std::string>& candidates) {
              std::vector<TaskTypePath> cands;
              for (const auto& c : candidates) cands.push_back(TaskTypePath::parse(c));
              std::vector<std::string> out;
              for (const auto& p : parse_filter_response(text, cands))
                  out.push_back(p.render());
              return out;
          },
          py::arg("text"), py::arg("candidates"));

    m.def("parse_vote", &parse_vote, py::arg("raw_text"));

    m.def("majority",
          [](const std::vector<int>& votes) {
              QACandidate cand{"", TaskTypePath::parse("x"), "q", "a", "", false, "strict"};
              std::vector<RefereeVerdict> panel;
              for (size_t i = 0; i < votes.size(); ++i)
                  panel.push_back({"r" + std::to_string(i), votes[i], "", false});
              auto res = aggregate(cand, panel);
              return std::make_pair(res.total, res.accepted);
          },
          py::arg("votes"), "Aggregate a 3-vote panel into (total, accepted).");

    m.def("ablate_by_task_count", &ablate_by_task_count, py::arg("dataset"),
          py::arg("n_tasks"), py::arg("total_samples"), py::arg("seed"));
    m.def("ablate_by_cap", &ablate_by_cap, py::arg("dataset"), py::arg("max_per_task"),
          py::arg("seed"));

    py::class_<SampleRef>(m, "SampleRef")
        .def(py::init([](std::string id, std::string task) {
                 return SampleRef{std::move(id), std::move(task)};
             }),
             py::arg("id"), py::arg("task"))
        .def_readwrite("id", &SampleRef::id)
        .def_readwrite("task", &SampleRef::task);

    m.def("distribution",
          [](const std::map<std::string, size_t>& per_task_counts) {
              auto stats = distribution(per_task_counts);
              py::dict out;
              py::list buckets;
              for (size_t i = 0; i < stats.bucket_edges.size(); ++i) {
                  py::dict b;
                  b["lo"] = stats.bucket_edges[i].lo;
                  b["hi"] = stats.bucket_edges[i].hi;
                  b["task_types"] = stats.bucket_counts[i];
                  buckets.append(b);
              }
              out["buckets"] = buckets;
              out["total_tasks"] = stats.total_tasks;
              out["total_samples"] = stats.total_samples;
              return out;
          },
          py::arg("per_task_counts"));

    m.def("estimate_tokens", &estimate_tokens, py::arg("text"));
}
