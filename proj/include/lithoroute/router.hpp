#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace lithoroute {

enum class Verdict { Base, Reason };

const char* to_string(Verdict v);

struct RoutingDecision {
    Verdict verdict;
    double confidence;
    double threshold;
};

struct CoveragePoint {
    double tau;
    double coverage;
    double accuracy;  // accepted-set accuracy; 1.0 for an empty accepted set
};

struct CoverageCurve {
    std::vector<CoveragePoint> points;  // ordered by tau
    std::size_t sample_count = 0;
};

struct ThresholdCalibration {
    double tau_star;
    double epsilon;
    CoverageCurve curve;
    std::size_t calibration_size;
    double coverage_at_tau;
    double accuracy_at_tau;
};

// The 101-point grid {0.00, 0.01, ..., 1.00}.
std::vector<double> default_threshold_grid(std::size_t points = 101);

// Accept when confidence >= tau (boundary inclusive).
RoutingDecision decide(double confidence, double tau);

CoverageCurve coverage_curve(const std::vector<double>& confidences,
                             const std::vector<bool>& correct_flags,
                             const std::vector<double>& grid);

// Smallest grid tau whose accepted-set accuracy is within epsilon of the best
// accuracy seen anywhere on the grid.
ThresholdCalibration calibrate_threshold(const CoverageCurve& curve, double epsilon);

std::string coverage_curve_to_csv(const CoverageCurve& curve);

}  // namespace lithoroute
