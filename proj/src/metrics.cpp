#include "lithoroute/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "lithoroute/common.hpp"

namespace lithoroute {

ConfusionStats::ConfusionStats(std::size_t num_classes) : k_(num_classes) {
    if (num_classes < 2) throw DataError("confusion matrix needs at least 2 classes");
    counts_.assign(k_ * k_, 0);
}

void ConfusionStats::accumulate(int true_label, int predicted_label) {
    if (true_label < 0 || static_cast<size_t>(true_label) >= k_)
        throw LabelError("accumulate: true label out of range");
    if (predicted_label < 0 || static_cast<size_t>(predicted_label) >= k_)
        throw LabelError("accumulate: predicted label out of range");
    ++counts_[static_cast<size_t>(true_label) * k_ + static_cast<size_t>(predicted_label)];
    ++total_;
}

std::size_t ConfusionStats::count(int true_label, int predicted_label) const {
    return counts_[static_cast<size_t>(true_label) * k_ + static_cast<size_t>(predicted_label)];
}

std::size_t ConfusionStats::support(int true_label) const {
    std::size_t s = 0;
    for (size_t p = 0; p < k_; ++p) s += count(true_label, static_cast<int>(p));
    return s;
}

std::size_t ConfusionStats::total() const { return total_; }

MetricsReport weighted_metrics(const ConfusionStats& confusion) {
    if (confusion.total() == 0) throw DataError("weighted_metrics: empty confusion matrix");
    const size_t k = confusion.num_classes();
    MetricsReport report;
    report.per_class.resize(k);
    double total = static_cast<double>(confusion.total());
    for (size_t c = 0; c < k; ++c) {
        int ci = static_cast<int>(c);
        double tp = static_cast<double>(confusion.count(ci, ci));
        double fp = 0.0, fn = 0.0;
        for (size_t o = 0; o < k; ++o) {
            if (o == c) continue;
            fp += static_cast<double>(confusion.count(static_cast<int>(o), ci));
            fn += static_cast<double>(confusion.count(ci, static_cast<int>(o)));
        }
        ClassMetrics& m = report.per_class[c];
        m.support = confusion.support(ci);
        m.precision = (tp + fp > 0) ? tp / (tp + fp) : 0.0;
        m.recall = (tp + fn > 0) ? tp / (tp + fn) : 0.0;
        m.f1 = (m.precision + m.recall > 0)
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
        double w = static_cast<double>(m.support) / total;
        report.weighted_precision += w * m.precision;
        report.weighted_recall += w * m.recall;
        report.weighted_f1 += w * m.f1;
    }
    return report;
}

namespace {

struct Column {
    std::string name;
    bool lower_is_better;
    double (*get)(const MetricsReport&);
};

std::string cell(double v) { return v < 0 ? std::string("-") : format_fixed(v, 4); }

}  // namespace

std::string compare_runs(const std::vector<std::pair<std::string, MetricsReport>>& reports) {
    if (reports.empty()) throw DataError("compare_runs: no reports");
    static const Column columns[] = {
        {"precision", false, [](const MetricsReport& r) { return r.weighted_precision; }},
        {"recall", false, [](const MetricsReport& r) { return r.weighted_recall; }},
        {"f1", false, [](const MetricsReport& r) { return r.weighted_f1; }},
        {"coverage", false, [](const MetricsReport& r) { return r.coverage; }},
        {"flying_pt", true, [](const MetricsReport& r) { return r.flying_point_ratio; }},
    };

    size_t name_width = 4;
    for (const auto& [name, r] : reports) name_width = std::max(name_width, name.size());

    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(name_width) + 2) << "run";
    for (const auto& col : columns) out << std::setw(12) << col.name;
    out << "\n";
    for (const auto& [name, report] : reports) {
        out << std::setw(static_cast<int>(name_width) + 2) << name;
        for (const auto& col : columns) {
            double v = col.get(report);
            bool best = v >= 0;
            for (const auto& [other_name, other] : reports) {
                double ov = col.get(other);
                if (ov < 0) continue;
                if (col.lower_is_better ? ov < v : ov > v) best = false;
            }
            std::string text = cell(v);
            if (best && v >= 0) text += "*";
            out << std::setw(12) << text;
        }
        out << "\n";
    }
    return out.str();
}

std::string metrics_to_text(const MetricsReport& report,
                            const std::vector<std::string>& class_names) {
    std::ostringstream out;
    out << "weighted_precision " << format_fixed(report.weighted_precision, 6) << "\n";
    out << "weighted_recall    " << format_fixed(report.weighted_recall, 6) << "\n";
    out << "weighted_f1        " << format_fixed(report.weighted_f1, 6) << "\n";
    if (report.flying_point_ratio >= 0)
        out << "flying_point_ratio " << format_fixed(report.flying_point_ratio, 6) << "\n";
    if (report.coverage >= 0) {
        out << "coverage           " << format_fixed(report.coverage, 6) << "\n";
        out << "accepted           " << report.accepted << "\n";
        out << "routed             " << report.routed << "\n";
    }
    out << "\nclass                precision recall    f1        support\n";
    for (size_t c = 0; c < report.per_class.size(); ++c) {
        const ClassMetrics& m = report.per_class[c];
        std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
        out << std::left << std::setw(20) << name << " " << format_fixed(m.precision, 6) << "  "
            << format_fixed(m.recall, 6) << "  " << format_fixed(m.f1, 6) << "  " << m.support
            << "\n";
    }
    for (const auto& [well, fpr] : report.per_well_flying_point)
        out << "flying_point[" << well << "] " << format_fixed(fpr, 6) << "\n";
    return out.str();
}

}  // namespace lithoroute
