#include "lithoroute/router.hpp"

#include <algorithm>
#include <sstream>

#include "lithoroute/common.hpp"

namespace lithoroute {

const char* to_string(Verdict v) { return v == Verdict::Base ? "Base" : "Reason"; }

std::vector<double> default_threshold_grid(std::size_t points) {
    std::vector<double> grid(points);
    for (size_t i = 0; i < points; ++i)
        grid[i] = static_cast<double>(i) / static_cast<double>(points - 1);
    return grid;
}

RoutingDecision decide(double confidence, double tau) {
    if (confidence < 0.0 || confidence > 1.0) throw DataError("decide: confidence outside [0,1]");
    if (tau < 0.0 || tau > 1.0) throw DataError("decide: threshold outside [0,1]");
    return {confidence >= tau ? Verdict::Base : Verdict::Reason, confidence, tau};
}

CoverageCurve coverage_curve(const std::vector<double>& confidences,
                             const std::vector<bool>& correct_flags,
                             const std::vector<double>& grid) {
    if (confidences.size() != correct_flags.size())
        throw DataError("coverage_curve: confidence/correct length mismatch");
    if (confidences.empty()) throw DataError("coverage_curve: empty sample set");

    CoverageCurve curve;
    curve.sample_count = confidences.size();
    const double n = static_cast<double>(confidences.size());
    for (double tau : grid) {
        size_t accepted = 0, correct = 0;
        for (size_t i = 0; i < confidences.size(); ++i) {
            if (confidences[i] >= tau) {
                ++accepted;
                if (correct_flags[i]) ++correct;
            }
        }
        double acc = accepted == 0 ? 1.0
                                   : static_cast<double>(correct) / static_cast<double>(accepted);
        curve.points.push_back({tau, static_cast<double>(accepted) / n, acc});
    }
    return curve;
}

ThresholdCalibration calibrate_threshold(const CoverageCurve& curve, double epsilon) {
    if (curve.points.empty()) throw DataError("calibrate_threshold: empty curve");
    if (epsilon < 0.0) throw DataError("calibrate_threshold: epsilon must be >= 0");

    double best_acc = curve.points.front().accuracy;
    for (const auto& p : curve.points) best_acc = std::max(best_acc, p.accuracy);

    const CoveragePoint* chosen = nullptr;
    for (const auto& p : curve.points) {
        if (p.accuracy >= best_acc - epsilon) {
            if (!chosen || p.tau < chosen->tau) chosen = &p;
        }
    }
    // best_acc is attained on the grid, so a point always qualifies.
    ThresholdCalibration cal;
    cal.tau_star = chosen->tau;
    cal.epsilon = epsilon;
    cal.curve = curve;
    cal.calibration_size = curve.sample_count;
    cal.coverage_at_tau = chosen->coverage;
    cal.accuracy_at_tau = chosen->accuracy;
    return cal;
}

std::string coverage_curve_to_csv(const CoverageCurve& curve) {
    std::ostringstream out;
    out << "tau,coverage,accuracy\n";
    for (const auto& p : curve.points)
        out << format_fixed(p.tau, 4) << "," << format_full(p.coverage) << ","
            << format_full(p.accuracy) << "\n";
    return out.str();
}

}  // namespace lithoroute
