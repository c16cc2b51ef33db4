#include "lithoroute/classifier.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "lithoroute/common.hpp"
#include "lithoroute/metrics.hpp"

namespace lithoroute {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMajorMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

void softmax_columns(MatrixXd& logits) {
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        auto col = logits.col(j);
        col.array() -= col.maxCoeff();
        col = col.array().exp();
        col /= col.sum();
    }
}

MatrixXd feature_matrix(const DepthWindow& window, std::size_t model_width) {
    const std::size_t n = window.width();
    const std::size_t m = window.features.size();
    MatrixXd x(static_cast<Eigen::Index>(model_width * m), static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
        auto f = window_features(window, j, model_width);
        for (std::size_t d = 0; d < f.size(); ++d)
            x(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)) = f[d];
    }
    return x;
}

struct SampleSet {
    MatrixXd x;           // input_dim x n
    std::vector<int> y;   // n labels
};

SampleSet collect_samples(const std::vector<DepthWindow>& windows, const LabelSchema& schema,
                          const std::vector<std::string>& channel_names, std::size_t model_width,
                          const char* role) {
    std::size_t n = 0;
    for (const auto& w : windows) {
        if (w.features.size() != channel_names.size())
            throw DataError(std::string(role) + " window has " + std::to_string(w.features.size()) +
                            " channels, expected " + std::to_string(channel_names.size()));
        if (!w.labels)
            throw DataError(std::string(role) + " window for well " + w.well_id +
                            " carries no labels");
        n += w.width();
    }
    if (n == 0) throw DataError(std::string(role) + " set is empty");

    SampleSet s;
    s.x.resize(static_cast<Eigen::Index>(model_width * channel_names.size()),
               static_cast<Eigen::Index>(n));
    s.y.reserve(n);
    Eigen::Index col = 0;
    for (const auto& w : windows) {
        for (std::size_t j = 0; j < w.width(); ++j) {
            auto f = window_features(w, j, model_width);
            for (std::size_t d = 0; d < f.size(); ++d)
                s.x(static_cast<Eigen::Index>(d), col) = f[d];
            int y = (*w.labels)[j];
            if (y < 0 || static_cast<std::size_t>(y) >= schema.num_classes())
                throw LabelError("label index " + std::to_string(y) + " outside schema");
            s.y.push_back(y);
            ++col;
        }
    }
    return s;
}

int argmax_column(const MatrixXd& probs, Eigen::Index col) {
    Eigen::Index best = 0;
    probs.col(col).maxCoeff(&best);
    return static_cast<int>(best);
}

double eval_weighted_f1(const MatrixXd& probs, const std::vector<int>& y, std::size_t k) {
    ConfusionStats cm(k);
    for (std::size_t i = 0; i < y.size(); ++i)
        cm.accumulate(y[i], argmax_column(probs, static_cast<Eigen::Index>(i)));
    return weighted_metrics(cm).weighted_f1;
}

void write_param(std::ostream& os, const std::string& name, const std::vector<double>& values,
                 std::size_t rows, std::size_t cols) {
    os << "param " << name << " " << rows << " " << cols << "\n";
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (c) os << " ";
            os << format_full(values[r * cols + c]);
        }
        os << "\n";
    }
}

std::vector<double> read_param(std::istream& is, const std::string& name, std::size_t rows,
                               std::size_t cols, const std::string& path) {
    std::string line;
    if (!std::getline(is, line))
        throw ArtifactError("model file " + path + " truncated before param " + name);
    std::istringstream head(line);
    std::string tag, got;
    std::size_t r = 0, c = 0;
    head >> tag >> got >> r >> c;
    if (tag != "param" || got != name || r != rows || c != cols)
        throw ArtifactError("model file " + path + ": expected 'param " + name + " " +
                            std::to_string(rows) + " " + std::to_string(cols) + "', got '" + line +
                            "'");
    std::vector<double> values;
    values.reserve(rows * cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (!std::getline(is, line))
            throw ArtifactError("model file " + path + " truncated inside param " + name);
        const char* p = line.c_str();
        char* end = nullptr;
        for (std::size_t j = 0; j < cols; ++j) {
            double v = std::strtod(p, &end);
            if (end == p)
                throw ArtifactError("model file " + path + ": bad number in param " + name);
            values.push_back(v);
            p = end;
        }
    }
    return values;
}

std::string join_names(const std::vector<std::string>& names) {
    std::string out;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (i) out += ", ";
        out += names[i];
    }
    return out;
}

std::vector<std::string> split_names(const std::string& value) {
    std::vector<std::string> out;
    for (const auto& part : split(value, ',')) out.push_back(trim(part));
    return out;
}

}  // namespace

double confidence(const ProbabilityVector& probs) {
    if (probs.empty()) throw DataError("confidence of an empty probability vector");
    return *std::max_element(probs.begin(), probs.end());
}

bool is_probability_vector(const ProbabilityVector& probs, double tol) {
    if (probs.empty()) return false;
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) return false;
        sum += p;
    }
    return std::abs(sum - 1.0) <= tol;
}

void TrainConfig::validate() const {
    if (window == 0) throw ConfigError("base.window must be at least 1");
    if (hidden == 0) throw ConfigError("base.hidden must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("base.learning_rate must be positive");
    if (epochs == 0) throw ConfigError("base.epochs must be at least 1");
    if (batch_size == 0) throw ConfigError("base.batch_size must be at least 1");
}

void BaseClassifier::check_window(const DepthWindow& window) const {
    if (window.width() == 0) throw DataError("cannot classify an empty window");
    if (window.features.size() != channel_names_.size())
        throw DataError("window has " + std::to_string(window.features.size()) +
                        " channels, model expects " + std::to_string(channel_names_.size()));
    for (const auto& series : window.features)
        if (series.size() != window.width())
            throw DataError("window channel lengths are inconsistent");
}

std::vector<double> window_features(const DepthWindow& window, std::size_t depth_index,
                                    std::size_t model_width) {
    const std::size_t n = window.width();
    const std::size_t m = window.features.size();
    if (depth_index >= n) throw DataError("depth index outside window");
    const long center = static_cast<long>((model_width - 1) / 2);
    std::vector<double> out(model_width * m);
    for (std::size_t o = 0; o < model_width; ++o) {
        long idx = static_cast<long>(depth_index) + static_cast<long>(o) - center;
        idx = std::clamp(idx, 0l, static_cast<long>(n) - 1);
        for (std::size_t c = 0; c < m; ++c)
            out[o * m + c] = window.features[c][static_cast<std::size_t>(idx)];
    }
    return out;
}

MlpClassifier::MlpClassifier(std::vector<std::string> class_names,
                             std::vector<std::string> channel_names, std::size_t window_width,
                             std::size_t hidden)
    : hidden_(hidden) {
    class_names_ = std::move(class_names);
    channel_names_ = std::move(channel_names);
    window_width_ = window_width;
    const std::size_t d = input_dim();
    const std::size_t k = class_names_.size();
    w1.assign(hidden_ * d, 0.0);
    b1.assign(hidden_, 0.0);
    w2.assign(k * hidden_, 0.0);
    b2.assign(k, 0.0);
}

std::size_t MlpClassifier::input_dim() const { return window_width_ * channel_names_.size(); }

std::vector<ProbabilityVector> MlpClassifier::predict_proba(const DepthWindow& window) const {
    check_window(window);
    const auto d = static_cast<Eigen::Index>(input_dim());
    const auto h = static_cast<Eigen::Index>(hidden_);
    const auto k = static_cast<Eigen::Index>(class_names_.size());

    ConstRowMajorMap mw1(w1.data(), h, d);
    ConstRowMajorMap mw2(w2.data(), k, h);
    Eigen::Map<const VectorXd> mb1(b1.data(), h);
    Eigen::Map<const VectorXd> mb2(b2.data(), k);

    MatrixXd x = feature_matrix(window, window_width_);
    MatrixXd z1 = (mw1 * x).colwise() + mb1;
    MatrixXd a1 = z1.cwiseMax(0.0);
    MatrixXd z2 = (mw2 * a1).colwise() + mb2;
    softmax_columns(z2);

    std::vector<ProbabilityVector> out(window.width(), ProbabilityVector(class_names_.size()));
    for (std::size_t j = 0; j < window.width(); ++j)
        for (Eigen::Index c = 0; c < k; ++c)
            out[j][static_cast<std::size_t>(c)] = z2(c, static_cast<Eigen::Index>(j));
    return out;
}

void MlpClassifier::save(const std::string& path) const {
    std::ostringstream os;
    os << "lithoroute-model = 1\n";
    os << "kind = mlp\n";
    os << "classes = " << join_names(class_names_) << "\n";
    os << "channels = " << join_names(channel_names_) << "\n";
    os << "window = " << window_width_ << "\n";
    os << "hidden = " << hidden_ << "\n";
    const std::size_t d = input_dim();
    const std::size_t k = class_names_.size();
    write_param(os, "w1", w1, hidden_, d);
    write_param(os, "b1", b1, 1, hidden_);
    write_param(os, "w2", w2, k, hidden_);
    write_param(os, "b2", b2, 1, k);
    write_text_file(path, os.str());
}

CentroidClassifier::CentroidClassifier(std::vector<std::string> class_names,
                                       std::vector<std::string> channel_names,
                                       std::size_t window_width) {
    class_names_ = std::move(class_names);
    channel_names_ = std::move(channel_names);
    window_width_ = window_width;
    centroids.assign(class_names_.size() * input_dim(), 0.0);
}

std::size_t CentroidClassifier::input_dim() const { return window_width_ * channel_names_.size(); }

std::vector<ProbabilityVector> CentroidClassifier::predict_proba(const DepthWindow& window) const {
    check_window(window);
    const auto d = static_cast<Eigen::Index>(input_dim());
    const auto k = static_cast<Eigen::Index>(class_names_.size());
    ConstRowMajorMap mc(centroids.data(), k, d);
    MatrixXd x = feature_matrix(window, window_width_);

    MatrixXd logits(k, x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        for (Eigen::Index c = 0; c < k; ++c)
            logits(c, j) = -0.5 * (x.col(j) - mc.row(c).transpose()).squaredNorm();
    softmax_columns(logits);

    std::vector<ProbabilityVector> out(window.width(), ProbabilityVector(class_names_.size()));
    for (std::size_t j = 0; j < window.width(); ++j)
        for (Eigen::Index c = 0; c < k; ++c)
            out[j][static_cast<std::size_t>(c)] = logits(c, static_cast<Eigen::Index>(j));
    return out;
}

void CentroidClassifier::save(const std::string& path) const {
    std::ostringstream os;
    os << "lithoroute-model = 1\n";
    os << "kind = centroid\n";
    os << "classes = " << join_names(class_names_) << "\n";
    os << "channels = " << join_names(channel_names_) << "\n";
    os << "window = " << window_width_ << "\n";
    write_param(os, "centroids", centroids, class_names_.size(), input_dim());
    write_text_file(path, os.str());
}

namespace {

// One Adam-updated parameter block.
struct AdamParam {
    MatrixXd value, m, v;

    explicit AdamParam(MatrixXd init)
        : value(std::move(init)), m(MatrixXd::Zero(value.rows(), value.cols())),
          v(MatrixXd::Zero(value.rows(), value.cols())) {}

    void step(const MatrixXd& grad, double lr, long t) {
        constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        value.array() -=
            lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
    }
};

MatrixXd glorot_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    MatrixXd w(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = (2.0 * uniform01(rng) - 1.0) * a;
    return w;
}

MatrixXd forward_mlp(const MatrixXd& w1, const VectorXd& b1, const MatrixXd& w2,
                     const VectorXd& b2, const MatrixXd& x) {
    MatrixXd a1 = ((w1 * x).colwise() + b1).cwiseMax(0.0);
    MatrixXd z2 = (w2 * a1).colwise() + b2;
    softmax_columns(z2);
    return z2;
}

void copy_to_row_major(const MatrixXd& src, std::vector<double>& dst) {
    dst.resize(static_cast<std::size_t>(src.rows() * src.cols()));
    RowMajorMap(dst.data(), src.rows(), src.cols()) = src;
}

}  // namespace

TrainResult train_mlp(const std::vector<DepthWindow>& train_windows,
                      const std::vector<DepthWindow>& val_windows, const LabelSchema& schema,
                      const TrainConfig& cfg) {
    cfg.validate();
    if (train_windows.empty()) throw DataError("no training windows");
    const std::vector<std::string>& channels = train_windows.front().channel_names;

    auto model =
        std::make_unique<MlpClassifier>(schema.class_names, channels, cfg.window, cfg.hidden);
    const std::size_t model_width = model->window_width();

    SampleSet train = collect_samples(train_windows, schema, channels, model_width, "train");
    const bool has_val = !val_windows.empty();
    SampleSet eval = has_val ? collect_samples(val_windows, schema, channels, model_width, "val")
                             : collect_samples(train_windows, schema, channels, model_width, "train");

    const auto d = static_cast<Eigen::Index>(model->input_dim());
    const auto h = static_cast<Eigen::Index>(cfg.hidden);
    const auto k = static_cast<Eigen::Index>(schema.num_classes());
    const std::size_t n = train.y.size();

    std::mt19937_64 rng(cfg.seed);
    AdamParam w1(glorot_uniform(h, d, rng));
    AdamParam b1(MatrixXd::Zero(h, 1));
    AdamParam w2(glorot_uniform(k, h, rng));
    AdamParam b2(MatrixXd::Zero(k, 1));

    TrainResult result;
    result.best_val_f1 = -1.0;
    MatrixXd best_w1 = w1.value, best_b1 = b1.value, best_w2 = w2.value, best_b2 = b2.value;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    long t = 0;
    std::size_t since_improve = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(rng() % i);
            std::swap(order[i - 1], order[j]);
        }
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t bsz = std::min(cfg.batch_size, n - start);
            MatrixXd xb(d, static_cast<Eigen::Index>(bsz));
            MatrixXd yb = MatrixXd::Zero(k, static_cast<Eigen::Index>(bsz));
            for (std::size_t j = 0; j < bsz; ++j) {
                const std::size_t s = order[start + j];
                xb.col(static_cast<Eigen::Index>(j)) = train.x.col(static_cast<Eigen::Index>(s));
                yb(train.y[s], static_cast<Eigen::Index>(j)) = 1.0;
            }

            MatrixXd z1 = (w1.value * xb).colwise() + VectorXd(b1.value.col(0));
            MatrixXd a1 = z1.cwiseMax(0.0);
            MatrixXd p = (w2.value * a1).colwise() + VectorXd(b2.value.col(0));
            softmax_columns(p);

            MatrixXd dz2 = (p - yb) / static_cast<double>(bsz);
            MatrixXd gw2 = dz2 * a1.transpose();
            MatrixXd gb2 = dz2.rowwise().sum();
            MatrixXd dz1 = (w2.value.transpose() * dz2).cwiseProduct(
                (z1.array() > 0.0).cast<double>().matrix());
            MatrixXd gw1 = dz1 * xb.transpose();
            MatrixXd gb1 = dz1.rowwise().sum();

            ++t;
            w1.step(gw1, cfg.learning_rate, t);
            b1.step(gb1, cfg.learning_rate, t);
            w2.step(gw2, cfg.learning_rate, t);
            b2.step(gb2, cfg.learning_rate, t);
        }

        MatrixXd probs = forward_mlp(w1.value, b1.value.col(0), w2.value, b2.value.col(0), eval.x);
        const double f1 = eval_weighted_f1(probs, eval.y, schema.num_classes());
        result.val_f1_per_epoch.push_back(f1);
        if (f1 > result.best_val_f1) {
            result.best_val_f1 = f1;
            result.best_epoch = epoch;
            best_w1 = w1.value;
            best_b1 = b1.value;
            best_w2 = w2.value;
            best_b2 = b2.value;
            since_improve = 0;
        } else if (++since_improve >= cfg.patience) {
            break;
        }
    }

    copy_to_row_major(best_w1, model->w1);
    copy_to_row_major(best_b1.transpose(), model->b1);
    copy_to_row_major(best_w2, model->w2);
    copy_to_row_major(best_b2.transpose(), model->b2);
    result.model = std::move(model);
    return result;
}

TrainResult train_centroid(const std::vector<DepthWindow>& train_windows,
                           const std::vector<DepthWindow>& val_windows, const LabelSchema& schema,
                           const TrainConfig& cfg) {
    cfg.validate();
    if (train_windows.empty()) throw DataError("no training windows");
    const std::vector<std::string>& channels = train_windows.front().channel_names;

    auto model = std::make_unique<CentroidClassifier>(schema.class_names, channels, cfg.window);
    SampleSet train =
        collect_samples(train_windows, schema, channels, model->window_width(), "train");

    const auto d = static_cast<Eigen::Index>(model->input_dim());
    const auto k = static_cast<Eigen::Index>(schema.num_classes());
    MatrixXd sums = MatrixXd::Zero(k, d);
    std::vector<std::size_t> counts(schema.num_classes(), 0);
    for (std::size_t i = 0; i < train.y.size(); ++i) {
        sums.row(train.y[i]) += train.x.col(static_cast<Eigen::Index>(i)).transpose();
        ++counts[static_cast<std::size_t>(train.y[i])];
    }
    const Eigen::RowVectorXd overall =
        train.x.rowwise().mean().transpose();
    for (Eigen::Index c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0)
            sums.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
        else
            sums.row(c) = overall;
    }
    copy_to_row_major(sums, model->centroids);

    TrainResult result;
    const auto& eval_windows = val_windows.empty() ? train_windows : val_windows;
    ConfusionStats cm(schema.num_classes());
    for (const auto& w : eval_windows) {
        auto probs = model->predict_proba(w);
        for (std::size_t j = 0; j < w.width(); ++j) {
            auto it = std::max_element(probs[j].begin(), probs[j].end());
            cm.accumulate((*w.labels)[j], static_cast<int>(it - probs[j].begin()));
        }
    }
    result.best_val_f1 = weighted_metrics(cm).weighted_f1;
    result.val_f1_per_epoch = {result.best_val_f1};
    result.best_epoch = 0;
    result.model = std::move(model);
    return result;
}

std::unique_ptr<BaseClassifier> load_model(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ArtifactError("model file not found: " + path);

    auto read_header = [&](const std::string& key) {
        std::string line;
        if (!std::getline(is, line))
            throw ArtifactError("model file " + path + " truncated in header");
        auto eq = line.find('=');
        if (eq == std::string::npos || trim(line.substr(0, eq)) != key)
            throw ArtifactError("model file " + path + ": expected '" + key + " = ...', got '" +
                                line + "'");
        return trim(line.substr(eq + 1));
    };

    if (read_header("lithoroute-model") != "1")
        throw ArtifactError("model file " + path + " has an unsupported format version");
    const std::string kind = read_header("kind");
    const auto classes = split_names(read_header("classes"));
    const auto channels = split_names(read_header("channels"));
    const std::size_t window =
        static_cast<std::size_t>(std::stoul(read_header("window")));
    if (classes.size() < 2) throw ArtifactError("model file " + path + " lists under two classes");
    if (channels.empty()) throw ArtifactError("model file " + path + " lists no channels");
    if (window == 0) throw ArtifactError("model file " + path + " has window 0");

    if (kind == "mlp") {
        const std::size_t hidden =
            static_cast<std::size_t>(std::stoul(read_header("hidden")));
        if (hidden == 0) throw ArtifactError("model file " + path + " has hidden 0");
        auto model = std::make_unique<MlpClassifier>(classes, channels, window, hidden);
        const std::size_t d = model->input_dim();
        model->w1 = read_param(is, "w1", hidden, d, path);
        model->b1 = read_param(is, "b1", 1, hidden, path);
        model->w2 = read_param(is, "w2", classes.size(), hidden, path);
        model->b2 = read_param(is, "b2", 1, classes.size(), path);
        return model;
    }
    if (kind == "centroid") {
        auto model = std::make_unique<CentroidClassifier>(classes, channels, window);
        model->centroids = read_param(is, "centroids", classes.size(), model->input_dim(), path);
        return model;
    }
    throw ArtifactError("model file " + path + " has unknown kind '" + kind + "'");
}

}  // namespace lithoroute
