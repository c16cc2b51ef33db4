#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace lithoroute {

// K x K count matrix of (true, predicted) pairs.
class ConfusionStats {
public:
    explicit ConfusionStats(std::size_t num_classes);

    void accumulate(int true_label, int predicted_label);
    std::size_t count(int true_label, int predicted_label) const;
    std::size_t support(int true_label) const;  // row sum
    std::size_t total() const;
    std::size_t num_classes() const { return k_; }

private:
    std::size_t k_;
    std::vector<std::size_t> counts_;  // row major [true][pred]
    std::size_t total_ = 0;
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct MetricsReport {
    double weighted_precision = 0.0;
    double weighted_recall = 0.0;
    double weighted_f1 = 0.0;
    std::vector<ClassMetrics> per_class;
    // Filled by the pipeline when available.
    double flying_point_ratio = -1.0;
    double coverage = -1.0;
    std::size_t accepted = 0;
    std::size_t routed = 0;
    std::map<std::string, double> per_well_flying_point;
};

// Per-class precision/recall/F1 with the zero-denominator convention of 0,
// weighted by class support.
MetricsReport weighted_metrics(const ConfusionStats& confusion);

// Aligned text table over named reports; the best value per column is flagged
// with '*' (lower is better for the flying-point column, higher elsewhere).
std::string compare_runs(const std::vector<std::pair<std::string, MetricsReport>>& reports);

std::string metrics_to_text(const MetricsReport& report, const std::vector<std::string>& class_names);

}  // namespace lithoroute
