#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lithoroute/common.hpp"
#include "lithoroute/evidence.hpp"
#include "lithoroute/metrics.hpp"
#include "lithoroute/refinement.hpp"
#include "lithoroute/router.hpp"
#include "lithoroute/well_log.hpp"

namespace py = pybind11;
using namespace lithoroute;

PYBIND11_MODULE(_core, m) {
    m.doc() = "core routines of the coarse-to-fine lithology pipeline";

    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyErr_SetString(PyExc_ValueError,
                            (e.error_class() + ": " + std::string(e.what())).c_str());
        }
    });

    py::class_<WellLogSequence>(m, "WellLogSequence")
        .def(py::init<>())
        .def_readwrite("well_id", &WellLogSequence::well_id)
        .def_readwrite("depths", &WellLogSequence::depths)
        .def_readwrite("channel_names", &WellLogSequence::channel_names)
        .def_readwrite("channels", &WellLogSequence::channels)
        .def_readwrite("labels", &WellLogSequence::labels)
        .def_readwrite("sampling_interval", &WellLogSequence::sampling_interval)
        .def("length", &WellLogSequence::length)
        .def("num_channels", &WellLogSequence::num_channels);

    py::class_<DepthWindow>(m, "DepthWindow")
        .def_readonly("well_id", &DepthWindow::well_id)
        .def_readonly("start", &DepthWindow::start)
        .def_readonly("end", &DepthWindow::end)
        .def_readonly("channel_names", &DepthWindow::channel_names)
        .def_readonly("features", &DepthWindow::features)
        .def_readonly("labels", &DepthWindow::labels)
        .def("width", &DepthWindow::width);

    m.def("make_windows", &make_windows, py::arg("sequence"), py::arg("width"),
          py::arg("stride"), "Tile a sequence with stride-spaced inclusive windows.");

    py::class_<RoutingDecision>(m, "RoutingDecision")
        .def_property_readonly("verdict",
                               [](const RoutingDecision& d) { return to_string(d.verdict); })
        .def_readonly("confidence", &RoutingDecision::confidence)
        .def_readonly("threshold", &RoutingDecision::threshold);

    py::class_<CoveragePoint>(m, "CoveragePoint")
        .def_readonly("tau", &CoveragePoint::tau)
        .def_readonly("coverage", &CoveragePoint::coverage)
        .def_readonly("accuracy", &CoveragePoint::accuracy);

    py::class_<CoverageCurve>(m, "CoverageCurve")
        .def_readonly("points", &CoverageCurve::points)
        .def_readonly("sample_count", &CoverageCurve::sample_count);

    py::class_<ThresholdCalibration>(m, "ThresholdCalibration")
        .def_readonly("tau_star", &ThresholdCalibration::tau_star)
        .def_readonly("epsilon", &ThresholdCalibration::epsilon)
        .def_readonly("curve", &ThresholdCalibration::curve)
        .def_readonly("coverage_at_tau", &ThresholdCalibration::coverage_at_tau)
        .def_readonly("accuracy_at_tau", &ThresholdCalibration::accuracy_at_tau);

    m.def("default_threshold_grid", &default_threshold_grid, py::arg("points") = 101);
    m.def("decide", &decide, py::arg("confidence"), py::arg("tau"),
          "Accept when confidence >= tau, else route to reasoning.");
    m.def("coverage_curve", &coverage_curve, py::arg("confidences"), py::arg("correct_flags"),
          py::arg("grid"));
    m.def("calibrate_threshold", &calibrate_threshold, py::arg("curve"), py::arg("epsilon"),
          "Smallest grid tau whose accepted-set accuracy is within epsilon of the best.");

    py::class_<ConfusionStats>(m, "ConfusionStats")
        .def(py::init<std::size_t>(), py::arg("num_classes"))
        .def("accumulate", &ConfusionStats::accumulate, py::arg("true_label"),
             py::arg("predicted_label"))
        .def("count", &ConfusionStats::count)
        .def("support", &ConfusionStats::support)
        .def("total", &ConfusionStats::total)
        .def("num_classes", &ConfusionStats::num_classes);

    py::class_<ClassMetrics>(m, "ClassMetrics")
        .def_readonly("precision", &ClassMetrics::precision)
        .def_readonly("recall", &ClassMetrics::recall)
        .def_readonly("f1", &ClassMetrics::f1)
        .def_readonly("support", &ClassMetrics::support);

    py::class_<MetricsReport>(m, "MetricsReport")
        .def_readonly("weighted_precision", &MetricsReport::weighted_precision)
        .def_readonly("weighted_recall", &MetricsReport::weighted_recall)
        .def_readonly("weighted_f1", &MetricsReport::weighted_f1)
        .def_readonly("per_class", &MetricsReport::per_class)
        .def_readonly("flying_point_ratio", &MetricsReport::flying_point_ratio)
        .def_readonly("coverage", &MetricsReport::coverage);

    m.def("weighted_metrics", &weighted_metrics, py::arg("confusion"));

    py::class_<ReferenceSet>(m, "ReferenceSet")
        .def(py::init<>())
        .def("add", &ReferenceSet::add, py::arg("feature"), py::arg("label"), py::arg("well_id"),
             py::arg("depth_index"))
        .def("size", &ReferenceSet::size)
        .def_readonly("dims", &ReferenceSet::dims);

    py::class_<Neighbor>(m, "Neighbor")
        .def_readonly("reference_index", &Neighbor::reference_index)
        .def_readonly("distance", &Neighbor::distance)
        .def_readonly("label", &Neighbor::label)
        .def_readonly("well_id", &Neighbor::well_id)
        .def_readonly("depth_index", &Neighbor::depth_index);

    m.def(
        "retrieve_neighbors",
        [](const std::vector<double>& query, const ReferenceSet& reference, std::size_t k) {
            return retrieve_neighbors(query, reference, k).neighbors;
        },
        py::arg("query"), py::arg("reference"), py::arg("k"),
        "Exact k-nearest rows by Euclidean distance, ties by insertion order.");

    py::class_<ChannelTrend>(m, "ChannelTrend")
        .def_readonly("channel", &ChannelTrend::channel)
        .def_readonly("slope", &ChannelTrend::slope)
        .def_readonly("mean", &ChannelTrend::mean)
        .def_readonly("std_dev", &ChannelTrend::std_dev)
        .def_readonly("regime", &ChannelTrend::regime);

    py::class_<TrendSummary>(m, "TrendSummary")
        .def_readonly("segment_start", &TrendSummary::segment_start)
        .def_readonly("segment_end", &TrendSummary::segment_end)
        .def_readonly("delta", &TrendSummary::delta)
        .def_readonly("channels", &TrendSummary::channels);

    m.def("analyze_trend", &analyze_trend, py::arg("sequence"), py::arg("start"), py::arg("end"),
          py::arg("delta"),
          "Per-channel slope, mean, std and regime over the extended segment.");

    m.def("refine_deterministic", &refine_deterministic, py::arg("labels"), py::arg("min_run"),
          "Merge runs shorter than min_run into the longer adjacent run.");
    m.def("flying_point_ratio", &flying_point_ratio, py::arg("labels"),
          "Fraction of depths whose label differs from every neighbor.");
}
