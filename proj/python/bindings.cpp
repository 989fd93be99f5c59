#include "fpl/io.hpp"
#include "fpl/scenario.hpp"
#include "fpl/spectral.hpp"
#include "fpl/spline_kernel.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace fpl;

namespace {

std::string validate(const std::string& path) { return cli::load_config(path).resolved.dump(); }

std::string run(const std::string& path, const std::string& out, std::optional<std::uint64_t> seed, bool paper_scale) {
    auto cfg = cli::load_config(path);
    if (seed)
        cli::override_seed(cfg, *seed);
    if (paper_scale)
        cli::apply_paper_scale(cfg);
    return cli::run_scenario(cfg, out).to_json().dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Compiled core of the fpl package";
    m.attr("__version__") = FPL_VERSION;

    // translators run newest first, so the base class goes in before its subclasses
    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception<DegenerateGeometryError>(m, "DegenerateGeometryError", PyExc_ArithmeticError);

    m.def("validate_json", &validate, py::arg("config"));
    m.def("run_json", &run, py::arg("config"), py::arg("out"), py::arg("seed") = py::none(),
          py::arg("paper_scale") = false, py::call_guard<py::gil_scoped_release>());

    py::class_<spline::CpdKernelSpec>(m, "KernelSpec")
        .def(py::init([](int d, double cubic, double linear) { return spline::CpdKernelSpec::make(d, cubic, linear); }),
             py::arg("d"), py::arg("cubic"), py::arg("linear"))
        .def_readonly("d", &spline::CpdKernelSpec::d)
        .def_readonly("cubic", &spline::CpdKernelSpec::cubic)
        .def_readonly("linear", &spline::CpdKernelSpec::linear)
        .def("phi", &spline::CpdKernelSpec::phi);
    m.def("kernel_weights_from_stats", &spline::kernel_weights_from_stats, py::arg("A"), py::arg("B"), py::arg("d"));

    py::class_<spline::KernelInterpolant>(m, "Interpolant")
        .def("__call__", [](const spline::KernelInterpolant& h, const Matrix& xs) { return h.evaluate_rows(xs); })
        .def_property_readonly("alpha", &spline::KernelInterpolant::alpha)
        .def_property_readonly("poly", &spline::KernelInterpolant::poly);
    m.def(
        "steady_state",
        [](const Matrix& points, const Vector& values, const spline::CpdKernelSpec& k) {
            return spline::steady_state(Dataset(points, values), k);
        },
        py::arg("points"), py::arg("values"), py::arg("kernel"));

    m.def("riesz_constant", &fourier::riesz_constant, py::arg("d"), py::arg("power"));
    m.def(
        "nudft",
        [](const Matrix& points, const Vector& values, const Vector& direction, const std::vector<double>& k,
           bool rescale) {
            const auto p = spectral::nudft(points, values, direction, k,
                                           rescale ? spectral::Projection::Rescaled : spectral::Projection::Raw, "");
            return py::make_tuple(p.amplitudes, p.phases);
        },
        py::arg("points"), py::arg("values"), py::arg("direction"), py::arg("k"), py::arg("rescale") = true);
    m.def("first_principal_direction", &spectral::first_principal_direction, py::arg("points"));
    m.def(
        "generalization_bound",
        [](double energy, int n, double delta, double c_gamma) {
            return spectral::generalization_bound(energy, n, delta, c_gamma).bound;
        },
        py::arg("energy"), py::arg("n"), py::arg("delta"), py::arg("c_gamma") = 1.0);
}
