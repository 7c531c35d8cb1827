#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "cade/imaging/preprocess.hpp"
#include "cade/imaging/volume_io.hpp"
#include "cade/metrics/metrics.hpp"
#include "cade/net/network_spec.hpp"
#include "cade/seg/growcut.hpp"

namespace py = pybind11;
using namespace cade;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

TensorF to_tensor(const FloatArray& a) {
  Dims d(a.shape(), a.shape() + a.ndim());
  TensorF t(d);
  std::memcpy(t.data(), a.data(), t.size() * sizeof(float));
  return t;
}

FloatArray to_array(const TensorF& t) {
  std::vector<py::ssize_t> shape(t.dims().begin(), t.dims().end());
  FloatArray a(shape);
  std::memcpy(a.mutable_data(), t.data(), t.size() * sizeof(float));
  return a;
}

TensorF image2d(const FloatArray& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D image");
  return to_tensor(a);
}

Mask to_mask(const ByteArray& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D mask");
  Mask m(std::size_t(a.shape(0)), std::size_t(a.shape(1)));
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = a.data()[i] != 0;
  return m;
}

ByteArray from_mask(const Mask& m) {
  ByteArray a({py::ssize_t(m.height), py::ssize_t(m.width)});
  std::memcpy(a.mutable_data(), m.data.data(), m.data.size());
  return a;
}

BoundingBox to_box(const std::array<int, 4>& b) { return {b[0], b[1], b[2], b[3]}; }

net::NetworkSpec build(const std::string& kind, double leaky_alpha, std::size_t kernel_size, bool extra_block) {
  net::ArchOptions o;
  o.leaky_alpha = leaky_alpha;
  o.kernel_size = kernel_size;
  o.extra_block = extra_block;
  return net::net_kind_from_string(kind) == net::NetKind::ccnn ? net::build_ccnn(o) : net::build_dcnn(o);
}

py::dict score(const metrics::Score& s) {
  py::dict d;
  d["value"] = s.value;
  d["degenerate"] = s.degenerate;
  return d;
}

}  // namespace

PYBIND11_MODULE(_cade, m) {
  m.doc() = "Brain-tumor CADe core: networks, imaging, GrowCut and metrics";

  auto base = py::register_exception<Error>(m, "Error", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", base);
  py::register_exception<IoError>(m, "IoError", base);
  py::register_exception<NumericError>(m, "NumericError", base);

  m.def(
      "param_count",
      [](const std::string& kind, double leaky_alpha, std::size_t kernel_size, bool extra_block) {
        return net::param_count(build(kind, leaky_alpha, kernel_size, extra_block));
      },
      py::arg("net"), py::arg("leaky_alpha") = 0.0, py::arg("kernel_size") = 3, py::arg("extra_block") = false);
  m.def(
      "shape_trace",
      [](const std::string& kind) {
        py::list out;
        for (const auto& l : net::shape_trace(build(kind, 0.0, 3, false))) {
          out.append(py::make_tuple(l.label, l.input, l.output));
        }
        return out;
      },
      py::arg("net"), "(label, input dims, output dims) per layer");

  m.def("load_volume", [](const std::filesystem::path& p) { return to_array(imaging::load_volume(p)); });
  m.def("save_volume", [](const FloatArray& a, const std::filesystem::path& p) { imaging::save_volume(to_tensor(a), p); });
  m.def("median_filter", [](const FloatArray& a) { return to_array(imaging::median_filter(image2d(a))); });
  m.def(
      "resize",
      [](const FloatArray& a, std::size_t h, std::size_t w) {
        return to_array(imaging::resize_bilinear(image2d(a), h, w));
      },
      py::arg("image"), py::arg("height"), py::arg("width"));

  m.def(
      "generate_seeds",
      [](const std::array<int, 4>& box) {
        const auto s = seg::generate_seeds(to_box(box));
        py::dict d;
        d["x_f"] = s.x_f;
        d["y_f"] = s.y_f;
        d["r_f"] = s.r_f;
        d["x_b"] = s.x_b;
        d["y_b"] = s.y_b;
        d["r_b"] = s.r_b;
        return d;
      },
      py::arg("box"), "box is (x_ul, y_ul, width, height)");
  m.def(
      "growcut",
      [](const FloatArray& image, const std::array<int, 4>& box, std::size_t max_iter, double roi_margin) {
        seg::GrowCutOptions o;
        o.max_iter = max_iter;
        o.roi_margin = roi_margin;
        const auto r = seg::growcut_run(image2d(image), seg::generate_seeds(to_box(box)), o);
        return py::make_tuple(from_mask(r.mask), r.iterations, r.converged);
      },
      py::arg("image"), py::arg("box"), py::arg("max_iter") = 500, py::arg("roi_margin") = 5.0,
      "returns (mask, iterations, converged)");

  m.def(
      "confusion",
      [](const std::vector<int>& predicted, const std::vector<int>& truth) {
        const auto c = metrics::ConfusionCounts::tally(predicted, truth);
        py::dict d;
        d["tp"] = c.tp;
        d["tn"] = c.tn;
        d["fp"] = c.fp;
        d["fn"] = c.fn;
        d["accuracy"] = score(metrics::accuracy(c));
        d["precision"] = score(metrics::precision(c));
        d["recall"] = score(metrics::recall(c));
        d["f1"] = score(metrics::f_beta(c));
        return d;
      },
      py::arg("predicted"), py::arg("truth"));
  m.def("auc", [](const std::vector<double>& s, const std::vector<int>& l) { return metrics::auc(s, l); },
        py::arg("scores"), py::arg("labels"));
  m.def("dsc", [](const ByteArray& a, const ByteArray& b) { return score(metrics::dsc(to_mask(a), to_mask(b))); });
  m.def(
      "box_dsc",
      [](const std::array<int, 4>& a, const std::array<int, 4>& b, std::size_t h, std::size_t w) {
        return score(metrics::box_dsc(to_box(a), to_box(b), h, w));
      },
      py::arg("a"), py::arg("b"), py::arg("height"), py::arg("width"));
  m.def(
      "paired_t_test",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const auto r = metrics::paired_t_test(a, b);
        py::dict d;
        d["t"] = r.t;
        d["df"] = r.df;
        d["p"] = r.p;
        d["mean_difference"] = r.mean_difference;
        d["n"] = r.n;
        d["degenerate"] = r.degenerate;
        return d;
      },
      py::arg("a"), py::arg("b"));
}
