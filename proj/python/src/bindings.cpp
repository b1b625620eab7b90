#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "blockivf/baseline_index.hpp"
#include "blockivf/dataset.hpp"
#include "blockivf/executor.hpp"
#include "blockivf/ivf_index.hpp"
#include "blockivf/oracle.hpp"
#include "blockivf/workload.hpp"

namespace py = pybind11;
using namespace blockivf;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

std::pair<std::span<const float>, std::pair<std::size_t, std::size_t>> as_matrix(
    const FloatArray& arr) {
    if (arr.ndim() == 1) {
        return {{arr.data(), static_cast<std::size_t>(arr.size())},
                {1, static_cast<std::size_t>(arr.shape(0))}};
    }
    if (arr.ndim() != 2) throw std::invalid_argument("expected a 1-D or 2-D float array");
    return {{arr.data(), static_cast<std::size_t>(arr.size())},
            {static_cast<std::size_t>(arr.shape(0)), static_cast<std::size_t>(arr.shape(1))}};
}

IndexConfig build_config(std::size_t n, std::size_t dim, std::size_t clusters,
                         std::size_t block_capacity, std::size_t rearrange_threshold,
                         std::size_t num_blocks, std::size_t kmeans_iters, std::uint64_t seed) {
    IndexConfig cfg;
    cfg.num_clusters = clusters;
    cfg.dim = dim;
    cfg.kmeans_iters = kmeans_iters;
    cfg.kmeans_seed = seed;
    cfg.rearrange_threshold = rearrange_threshold;
    cfg.pool.dim = dim;
    cfg.pool.block_capacity = block_capacity;
    cfg.pool.num_blocks =
        num_blocks > 0 ? num_blocks
                       : (2 * n + block_capacity - 1) / block_capacity + 2 * clusters + 64;
    cfg.nprobe_default = std::min<std::size_t>(8, clusters);
    return cfg;
}

py::tuple result_to_tuple(const SearchResult& r) {
    py::array_t<std::int64_t> ids(static_cast<py::ssize_t>(r.ids.size()));
    py::array_t<float> dists(static_cast<py::ssize_t>(r.distances.size()));
    std::copy(r.ids.begin(), r.ids.end(), ids.mutable_data());
    std::copy(r.distances.begin(), r.distances.end(), dists.mutable_data());
    return py::make_tuple(ids, dists);
}

FloatArray dataset_to_array(const Dataset& ds) {
    FloatArray arr({static_cast<py::ssize_t>(ds.size()), static_cast<py::ssize_t>(ds.dim)});
    std::copy(ds.data.begin(), ds.data.end(), arr.mutable_data());
    return arr;
}

template <class Index>
std::vector<vector_id> do_insert(Index& index, const FloatArray& vectors,
                                 const std::optional<std::vector<vector_id>>& ids) {
    auto [span, shape] = as_matrix(vectors);
    if (shape.second != index.dim()) throw std::invalid_argument("dimension mismatch");
    std::span<const vector_id> id_span;
    if (ids) id_span = {ids->data(), ids->size()};
    py::gil_scoped_release release;
    return index.insert(span, shape.first, id_span);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "IVF-flat index with lock-free block-based real-time insertion";

    py::register_exception<PoolExhaustedError>(m, "PoolExhaustedError");

    py::class_<ClusterIndex>(m, "ClusterIndex")
        .def(py::init([](const FloatArray& vectors, std::size_t clusters,
                         std::size_t block_capacity, std::size_t rearrange_threshold,
                         std::size_t num_blocks, std::size_t kmeans_iters, std::uint64_t seed) {
                 auto [span, shape] = as_matrix(vectors);
                 auto cfg = build_config(shape.first, shape.second, clusters, block_capacity,
                                         rearrange_threshold, num_blocks, kmeans_iters, seed);
                 py::gil_scoped_release release;
                 return std::make_unique<ClusterIndex>(span, shape.first, cfg);
             }),
             py::arg("vectors"), py::arg("clusters") = 16, py::arg("block_capacity") = 64,
             py::arg("rearrange_threshold") = 256, py::arg("num_blocks") = 0,
             py::arg("kmeans_iters") = 25, py::arg("seed") = 42)
        .def("insert", &do_insert<ClusterIndex>, py::arg("vectors"),
             py::arg("ids") = std::nullopt)
        .def(
            "search",
            [](const ClusterIndex& index, const FloatArray& query, std::size_t k,
               std::size_t nprobe) {
                auto [span, shape] = as_matrix(query);
                if (shape.first != 1 || shape.second != index.dim())
                    throw std::invalid_argument("expected one query of the index dimension");
                SearchResult r;
                {
                    py::gil_scoped_release release;
                    r = index.search(span, k, nprobe);
                }
                return result_to_tuple(r);
            },
            py::arg("query"), py::arg("k"), py::arg("nprobe"))
        .def("assign",
             [](const ClusterIndex& index, const FloatArray& y) {
                 auto [span, shape] = as_matrix(y);
                 if (shape.first != 1) throw std::invalid_argument("expected one vector");
                 return index.assign(span);
             })
        .def("exceed", &ClusterIndex::exceed, py::arg("cluster"))
        .def("rearrange", &ClusterIndex::rearrange, py::arg("cluster"),
             py::call_guard<py::gil_scoped_release>())
        .def("rearrange_sweep", &ClusterIndex::rearrange_sweep,
             py::call_guard<py::gil_scoped_release>())
        .def("list_length", &ClusterIndex::list_length, py::arg("cluster"))
        .def("hop_count", &ClusterIndex::hop_count, py::arg("cluster"))
        .def("save", &ClusterIndex::save, py::arg("path"))
        .def_static("load", &ClusterIndex::load, py::arg("path"))
        .def_property_readonly("dim", &ClusterIndex::dim)
        .def_property_readonly("num_clusters", &ClusterIndex::num_clusters)
        .def_property_readonly("size", &ClusterIndex::size)
        .def_property_readonly("scalars_copied", &ClusterIndex::scalars_copied);

    py::class_<BaselineIndex>(m, "BaselineIndex")
        .def(py::init([](const FloatArray& vectors, std::size_t clusters,
                         std::size_t kmeans_iters, std::uint64_t seed) {
                 auto [span, shape] = as_matrix(vectors);
                 auto cfg = build_config(shape.first, shape.second, clusters, 64, 256, 0,
                                         kmeans_iters, seed);
                 py::gil_scoped_release release;
                 return std::make_unique<BaselineIndex>(span, shape.first, cfg);
             }),
             py::arg("vectors"), py::arg("clusters") = 16, py::arg("kmeans_iters") = 25,
             py::arg("seed") = 42)
        .def("insert", &do_insert<BaselineIndex>, py::arg("vectors"),
             py::arg("ids") = std::nullopt)
        .def(
            "search",
            [](const BaselineIndex& index, const FloatArray& query, std::size_t k,
               std::size_t nprobe) {
                auto [span, shape] = as_matrix(query);
                if (shape.first != 1 || shape.second != index.dim())
                    throw std::invalid_argument("expected one query of the index dimension");
                SearchResult r;
                {
                    py::gil_scoped_release release;
                    r = index.search(span, k, nprobe);
                }
                return result_to_tuple(r);
            },
            py::arg("query"), py::arg("k"), py::arg("nprobe"))
        .def_property_readonly("dim", &BaselineIndex::dim)
        .def_property_readonly("num_clusters", &BaselineIndex::num_clusters)
        .def_property_readonly("size", &BaselineIndex::size)
        .def_property_readonly("scalars_copied", &BaselineIndex::scalars_copied)
        .def_property_readonly("reallocations", &BaselineIndex::reallocations);

    m.def("exact_knn",
          [](const FloatArray& base, const FloatArray& query, std::size_t k) {
              auto [bspan, bshape] = as_matrix(base);
              auto [qspan, qshape] = as_matrix(query);
              if (qshape.first != 1 || qshape.second != bshape.second)
                  throw std::invalid_argument("expected one query matching the base dimension");
              return result_to_tuple(exact_knn(bspan, bshape.first, bshape.second, qspan, k));
          },
          py::arg("base"), py::arg("query"), py::arg("k"));

    m.def("synthetic_dataset",
          [](std::size_t n, std::size_t dim, std::size_t components, std::uint64_t seed) {
              return dataset_to_array(synthetic_dataset(n, dim, components, seed));
          },
          py::arg("n"), py::arg("dim"), py::arg("components") = 16, py::arg("seed") = 42);

    m.def("load_fvecs",
          [](const std::string& path) { return dataset_to_array(load_fvecs(path)); },
          py::arg("path"));

    m.def("save_fvecs",
          [](const std::string& path, const FloatArray& vectors) {
              auto [span, shape] = as_matrix(vectors);
              Dataset ds;
              ds.dim = shape.second;
              ds.data.assign(span.begin(), span.end());
              save_fvecs(path, ds);
          },
          py::arg("path"), py::arg("vectors"));

    m.def("load_ivecs", &load_ivecs, py::arg("path"));
    m.def("save_ivecs", &save_ivecs, py::arg("path"), py::arg("rows"));

    m.def(
        "replay_workload",
        [](ClusterIndex& index, const FloatArray& queries, const FloatArray& inserts,
           double qps_search, double qps_insert, double duration_s, std::size_t k,
           std::size_t nprobe, const std::string& mode, std::size_t lanes, std::uint64_t seed,
           bool zipf) {
            auto [qspan, qshape] = as_matrix(queries);
            auto [ispan, ishape] = as_matrix(inserts);
            Dataset qds{qshape.second, {qspan.begin(), qspan.end()}};
            Dataset ids{ishape.second, {ispan.begin(), ispan.end()}};
            WorkloadSpec spec;
            spec.qps_search = qps_search;
            spec.qps_insert = qps_insert;
            spec.duration_s = duration_s;
            spec.k = k;
            spec.nprobe = nprobe;
            spec.seed = seed;
            spec.zipf_insertions = zipf;
            ExecutorConfig ecfg;
            ecfg.num_lanes = lanes;
            ecfg.mode =
                mode == "serialized" ? ExecutionMode::Serialized : ExecutionMode::Parallel;
            WorkloadReport rep;
            {
                py::gil_scoped_release release;
                Executor exec(index, ecfg);
                rep = replay(spec, exec, index, qds, ids);
                exec.shutdown();
            }
            py::dict out;
            out["latency_search_ms"] = rep.search.mean_ms;
            out["latency_insert_ms"] = rep.insertion.mean_ms;
            out["latency_combined_ms"] = rep.combined_latency_ms;
            out["search_count"] = rep.search.count;
            out["insert_count"] = rep.insertion.count;
            out["rejected"] = rep.rejected;
            out["timeouts_search"] = rep.timeouts_search;
            out["timeouts_insert"] = rep.timeouts_insert;
            out["hop_mean"] = rep.hop_mean;
            out["scalars_copied"] = rep.scalars_copied;
            return out;
        },
        py::arg("index"), py::arg("queries"), py::arg("inserts"), py::arg("qps_search") = 50.0,
        py::arg("qps_insert") = 50.0, py::arg("duration_s") = 1.0, py::arg("k") = 10,
        py::arg("nprobe") = 8, py::arg("mode") = "parallel", py::arg("lanes") = 8,
        py::arg("seed") = 1, py::arg("zipf") = false);
}
