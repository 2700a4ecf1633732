#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "carvq/accounting.hpp"
#include "carvq/adaptor.hpp"
#include "carvq/artifact.hpp"
#include "carvq/error.hpp"
#include "carvq/grvq.hpp"
#include "carvq/pipeline.hpp"
#include "carvq/scalarq.hpp"
#include "carvq/tensor_io.hpp"

namespace py = pybind11;
using namespace carvq;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::object fraction(const Rational& r) { return py::module_::import("fractions").attr("Fraction")(r.num(), r.den()); }

py::array_t<float> to_numpy(std::span<const float> values, std::size_t rows, std::size_t cols) {
  py::array_t<float> out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(rows), static_cast<py::ssize_t>(cols)});
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

py::array_t<float> to_numpy(std::span<const float> values) {
  py::array_t<float> out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(values.size())});
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

EmbeddingMatrix from_numpy(const FloatArray& a, DType dtype) {
  if (a.ndim() != 2) throw Error(ErrorKind::ShapeMismatch, "expected a 2-D array");
  return EmbeddingMatrix(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                         std::vector<float>(a.data(), a.data() + a.size()), dtype);
}

py::dict report_dict(const TrainReport& r) {
  py::dict d;
  d["loss_curve"] = r.loss_curve;
  d["initial_loss"] = r.initial_loss;
  d["final_loss"] = r.final_loss;
  d["wall_time"] = r.wall_time;
  return d;
}

}  // namespace

PYBIND11_MODULE(_carvq, m) {
  m.doc() = "Group residual vector quantization with a corrective adaptor for embedding matrices";

  static const py::handle error_type = py::exception<Error>(m, "CarvqError", PyExc_RuntimeError).release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object inst = py::reinterpret_borrow<py::object>(error_type)(e.what());
      inst.attr("kind") = std::string(to_string(e.kind()));
      PyErr_SetObject(error_type.ptr(), inst.ptr());
    }
  });

  py::enum_<DType>(m, "DType").value("F16", DType::F16).value("F32", DType::F32);
  py::enum_<Precision>(m, "Precision").value("F16", Precision::F16).value("F32", Precision::F32);
  py::enum_<Granularity>(m, "Granularity")
      .value("PER_ROW", Granularity::PerRow)
      .value("PER_MATRIX", Granularity::PerMatrix);
  py::enum_<SchemeKind>(m, "SchemeKind").value("RVQ", SchemeKind::Rvq).value("SCALAR", SchemeKind::Scalar);

  py::class_<EmbeddingMatrix>(m, "EmbeddingMatrix")
      .def(py::init(&from_numpy), py::arg("values"), py::arg("dtype") = DType::F32)
      .def_property_readonly("rows", &EmbeddingMatrix::rows)
      .def_property_readonly("cols", &EmbeddingMatrix::cols)
      .def_property_readonly("dtype", &EmbeddingMatrix::dtype)
      .def("numpy", [](const EmbeddingMatrix& x) { return to_numpy(x.data(), x.rows(), x.cols()); })
      .def("row", [](const EmbeddingMatrix& x, std::size_t i) {
        if (i >= x.rows()) throw py::index_error("token out of range");
        return to_numpy(x.row(i));
      })
      .def("__eq__", [](const EmbeddingMatrix& a, const EmbeddingMatrix& b) { return a == b; })
      .def("__repr__", [](const EmbeddingMatrix& x) {
        return "EmbeddingMatrix(" + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) + ", " +
               std::string(to_string(x.dtype())) + ")";
      });

  m.def("load_matrix", &load_matrix, py::arg("path"));
  m.def("save_matrix", &save_matrix, py::arg("matrix"), py::arg("path"), py::arg("dtype") = DType::F32);
  m.def("gen_synthetic", &gen_synthetic, py::arg("rows"), py::arg("cols"), py::arg("clusters"),
        py::arg("noise_sigma"), py::arg("seed") = 0);

  py::class_<GrvqParams>(m, "GrvqParams")
      .def(py::init<>())
      .def_readwrite("levels", &GrvqParams::levels)
      .def_readwrite("kappa", &GrvqParams::kappa)
      .def_readwrite("subvector_dim", &GrvqParams::subvector_dim)
      .def_readwrite("group_size", &GrvqParams::group_size)
      .def_readwrite("seed", &GrvqParams::seed)
      .def_readwrite("kmeans_tol", &GrvqParams::kmeans_tol)
      .def_readwrite("kmeans_max_iter", &GrvqParams::kmeans_max_iter)
      .def_readwrite("codebook_precision", &GrvqParams::codebook_precision);

  py::class_<AdaptorConfig>(m, "AdaptorConfig")
      .def(py::init<>())
      .def_readwrite("vocab", &AdaptorConfig::vocab)
      .def_readwrite("out_dim", &AdaptorConfig::out_dim)
      .def_readwrite("width", &AdaptorConfig::width)
      .def_readwrite("hidden", &AdaptorConfig::hidden)
      .def_readwrite("seed", &AdaptorConfig::seed)
      .def_readwrite("lr", &AdaptorConfig::lr)
      .def_readwrite("iterations", &AdaptorConfig::iterations)
      .def_readwrite("batch_size", &AdaptorConfig::batch_size);

  py::class_<SqParams>(m, "SqParams")
      .def(py::init<>())
      .def(py::init([](int bits, Granularity g) { return SqParams{bits, g}; }), py::arg("bits"),
           py::arg("granularity") = Granularity::PerRow)
      .def_readwrite("bits", &SqParams::bits)
      .def_readwrite("granularity", &SqParams::granularity);

  py::class_<GrvqModel>(m, "GrvqModel")
      .def_property_readonly("rows", &GrvqModel::rows)
      .def_property_readonly("cols", &GrvqModel::cols)
      .def_property_readonly("params", &GrvqModel::params)
      .def_property_readonly("group_count", [](const GrvqModel& g) { return g.groups().size(); })
      .def("codebook_table", [](const GrvqModel& g) { return to_numpy(g.codebook_table()); })
      .def("__eq__", [](const GrvqModel& a, const GrvqModel& b) { return a == b; });

  py::class_<Adaptor>(m, "Adaptor")
      .def_property_readonly("config", &Adaptor::config)
      .def_property_readonly("parameter_count", &Adaptor::parameter_count)
      .def("parameters", [](const Adaptor& a) { return to_numpy(a.parameters()); })
      .def("forward", [](const Adaptor& a, std::size_t token) { return to_numpy(a.forward(token)); },
           py::arg("token"));

  m.def("grvq_compress", &grvq_compress, py::arg("matrix"), py::arg("params"), py::arg("threads") = 1,
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "grvq_reconstruct",
      [](const GrvqModel& g, const Adaptor* a) { return grvq_reconstruct(g, a); }, py::arg("model"),
      py::arg("adaptor") = nullptr);
  m.def(
      "embed_lookup",
      [](const GrvqModel& g, const Adaptor* a, std::size_t token) { return to_numpy(embed_lookup(g, a, token)); },
      py::arg("model"), py::arg("adaptor"), py::arg("token"));

  m.def("adaptor_parameter_count", &adaptor_parameter_count, py::arg("config"),
        py::arg("include_layer_norm") = true);
  m.def("init_adaptor", &init_adaptor, py::arg("config"));
  m.def(
      "train_adaptor",
      [](const EmbeddingMatrix& original, const EmbeddingMatrix& base, const AdaptorConfig& config) {
        TrainResult r = [&] {
          py::gil_scoped_release release;
          return train_adaptor(original, base.data(), config);
        }();
        return py::make_tuple(std::move(r.adaptor), report_dict(r.report));
      },
      py::arg("original"), py::arg("base"), py::arg("config"));

  py::class_<SqModel>(m, "SqModel")
      .def_property_readonly("rows", [](const SqModel& s) { return s.rows; })
      .def_property_readonly("cols", [](const SqModel& s) { return s.cols; })
      .def_property_readonly("block_count", &SqModel::block_count);
  m.def("sq_quantize", &sq_quantize, py::arg("matrix"), py::arg("bits"),
        py::arg("granularity") = Granularity::PerRow, py::arg("precision") = std::nullopt);
  m.def("sq_dequantize", &sq_dequantize, py::arg("model"));

  py::class_<SchemeSpec>(m, "SchemeSpec")
      .def(py::init<>())
      .def_readwrite("base", &SchemeSpec::base)
      .def_readwrite("grvq", &SchemeSpec::grvq)
      .def_readwrite("sq", &SchemeSpec::sq)
      .def_readwrite("adaptor", &SchemeSpec::adaptor);

  m.def(
      "bpp_rvq", [](const GrvqParams& g, int p) { return fraction(bpp_rvq(g, p)); }, py::arg("params"),
      py::arg("p") = 16);
  m.def(
      "bpp_ca",
      [](const AdaptorConfig& c, int p, bool ln) { return fraction(bpp_ca(c, p, ln)); }, py::arg("config"),
      py::arg("p") = 16, py::arg("include_layer_norm") = true);
  m.def(
      "bpp_total",
      [](const GrvqParams& g, const AdaptorConfig& c, int p, bool ln) { return fraction(bpp_total(g, c, p, ln)); },
      py::arg("params"), py::arg("config"), py::arg("p") = 16, py::arg("include_layer_norm") = true);
  m.def(
      "memory_report",
      [](std::size_t rows, std::size_t cols, const SchemeSpec& s, int p) {
        return to_python(to_json(memory_report(rows, cols, s, p)));
      },
      py::arg("rows"), py::arg("cols"), py::arg("scheme"), py::arg("p") = 16);
  m.def("embedding_ratio", &embedding_ratio, py::arg("emb_params"), py::arg("other_params"),
        py::arg("emb_bits") = 16.0, py::arg("other_bits") = 16.0);

  py::class_<CompressedArtifact>(m, "CompressedArtifact")
      .def_property_readonly("rows", [](const CompressedArtifact& a) { return a.rows; })
      .def_property_readonly("cols", [](const CompressedArtifact& a) { return a.cols; })
      .def_property_readonly("precision", [](const CompressedArtifact& a) { return a.precision; })
      .def_property_readonly("scheme", &CompressedArtifact::scheme)
      .def_property_readonly("scheme_label", &CompressedArtifact::scheme_label)
      .def_property_readonly("grvq", [](const CompressedArtifact& a) { return a.grvq; })
      .def_property_readonly("adaptor", [](const CompressedArtifact& a) { return a.adaptor; })
      .def("reconstruct", &CompressedArtifact::reconstruct)
      .def("lookup", [](const CompressedArtifact& a, std::size_t t) { return to_numpy(a.lookup(t)); },
           py::arg("token"))
      .def("encode",
           [](const CompressedArtifact& a) {
             const auto bytes = encode_container(a);
             return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
           })
      .def_static("decode",
                  [](const py::bytes& b) {
                    const std::string_view s = b;
                    return decode_container(
                        std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
                  })
      .def("write", &write_container, py::arg("path"))
      .def_static("read", &read_container, py::arg("path"))
      .def("__eq__", [](const CompressedArtifact& a, const CompressedArtifact& b) { return a == b; });

  py::class_<CompressOptions>(m, "CompressOptions")
      .def(py::init<>())
      .def_readwrite("base", &CompressOptions::base)
      .def_readwrite("grvq", &CompressOptions::grvq)
      .def_readwrite("sq", &CompressOptions::sq)
      .def_readwrite("adaptor", &CompressOptions::adaptor)
      .def_readwrite("precision", &CompressOptions::precision)
      .def_readwrite("seed", &CompressOptions::seed)
      .def_readwrite("threads", &CompressOptions::threads);

  m.def(
      "compress",
      [](const EmbeddingMatrix& x, const CompressOptions& o) {
        CompressOutcome out = [&] {
          py::gil_scoped_release release;
          return compress(x, o);
        }();
        py::object training = py::none();
        if (out.training) training = report_dict(*out.training);
        return py::make_tuple(std::move(out.artifact), training);
      },
      py::arg("matrix"), py::arg("options"));
  m.def(
      "evaluate",
      [](const EmbeddingMatrix& a, const EmbeddingMatrix& b, std::size_t worst) {
        return to_python(to_json(evaluate(a, b, worst)));
      },
      py::arg("original"), py::arg("reconstruction"), py::arg("worst") = 5);
  m.def(
      "compare_schemes",
      [](const EmbeddingMatrix& x, const std::vector<std::string>& names, const CompressOptions& o) {
        std::vector<CompareRow> rows;
        {
          py::gil_scoped_release release;
          rows = compare_schemes(x, names, o);
        }
        return to_python(to_json(rows));
      },
      py::arg("matrix"), py::arg("schemes"), py::arg("options") = CompressOptions{});
}
