#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lithoroute/well_log.hpp"

namespace lithoroute {

using ProbabilityVector = std::vector<double>;

// Maximum class probability (the routing confidence score).
double confidence(const ProbabilityVector& probs);

bool is_probability_vector(const ProbabilityVector& probs, double tol = 1e-6);

struct TrainConfig {
    std::size_t window = 16;  // context width each depth is classified from
    std::size_t hidden = 128;
    double learning_rate = 1e-3;
    std::size_t epochs = 60;
    std::size_t batch_size = 64;
    std::uint64_t seed = 7;
    std::size_t patience = 10;

    void validate() const;
};

// Point-wise classifier over depth windows. Each depth in a window is
// classified from the window-local context centered on it (edge clamped), so
// a window is a self-contained input block.
class BaseClassifier {
public:
    virtual ~BaseClassifier() = default;

    // One probability vector per depth in the window.
    virtual std::vector<ProbabilityVector> predict_proba(const DepthWindow& window) const = 0;
    virtual void save(const std::string& path) const = 0;
    virtual std::string kind() const = 0;

    std::size_t num_classes() const { return class_names_.size(); }
    std::size_t window_width() const { return window_width_; }
    const std::vector<std::string>& class_names() const { return class_names_; }
    const std::vector<std::string>& channel_names() const { return channel_names_; }

protected:
    std::vector<std::string> class_names_;
    std::vector<std::string> channel_names_;
    std::size_t window_width_ = 16;

    void check_window(const DepthWindow& window) const;
};

// flatten(window context) -> hidden ReLU layer -> softmax over K.
class MlpClassifier : public BaseClassifier {
public:
    MlpClassifier(std::vector<std::string> class_names, std::vector<std::string> channel_names,
                  std::size_t window_width, std::size_t hidden);

    std::vector<ProbabilityVector> predict_proba(const DepthWindow& window) const override;
    void save(const std::string& path) const override;
    std::string kind() const override { return "mlp"; }

    std::size_t hidden() const { return hidden_; }
    std::size_t input_dim() const;

    // Row-major parameter blocks, exposed for persistence and tests.
    std::vector<double> w1, b1, w2, b2;

private:
    std::size_t hidden_;
};

// Nearest-centroid alternative base model; probabilities are a softmax over
// negative half squared distances to the class centroids.
class CentroidClassifier : public BaseClassifier {
public:
    CentroidClassifier(std::vector<std::string> class_names, std::vector<std::string> channel_names,
                       std::size_t window_width);

    std::vector<ProbabilityVector> predict_proba(const DepthWindow& window) const override;
    void save(const std::string& path) const override;
    std::string kind() const override { return "centroid"; }

    std::size_t input_dim() const;

    std::vector<double> centroids;  // row major [K][input_dim]

};

struct TrainResult {
    std::unique_ptr<BaseClassifier> model;
    std::vector<double> val_f1_per_epoch;
    std::size_t best_epoch = 0;
    double best_val_f1 = 0.0;
};

// Adam-trained cross-entropy over per-depth labels; returns the checkpoint
// with the best validation weighted F1.
TrainResult train_mlp(const std::vector<DepthWindow>& train_windows,
                      const std::vector<DepthWindow>& val_windows, const LabelSchema& schema,
                      const TrainConfig& cfg);

TrainResult train_centroid(const std::vector<DepthWindow>& train_windows,
                           const std::vector<DepthWindow>& val_windows, const LabelSchema& schema,
                           const TrainConfig& cfg);

std::unique_ptr<BaseClassifier> load_model(const std::string& path);

// Window-local context vector for one depth: window_width slots of all
// channels, indices clamped to the window block.
std::vector<double> window_features(const DepthWindow& window, std::size_t depth_index,
                                    std::size_t model_width);

}  // namespace lithoroute
