#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "supernotes/corpus.hpp"
#include "supernotes/mf.hpp"
#include "supernotes/mlp.hpp"

namespace supernotes {

// Probability vectors are ordered (helpful, somewhat helpful, not helpful).
inline constexpr int kClassHelpful = 0;
inline constexpr int kClassSomewhat = 1;
inline constexpr int kClassNotHelpful = 2;
inline constexpr int kNumClasses = 3;

inline int class_of(HelpfulnessLabel label) {
    switch (label) {
        case HelpfulnessLabel::Helpful: return kClassHelpful;
        case HelpfulnessLabel::SomewhatHelpful: return kClassSomewhat;
        case HelpfulnessLabel::NotHelpful: return kClassNotHelpful;
    }
    return kClassNotHelpful;
}

inline HelpfulnessLabel label_of(int cls) {
    switch (cls) {
        case kClassHelpful: return HelpfulnessLabel::Helpful;
        case kClassSomewhat: return HelpfulnessLabel::SomewhatHelpful;
        default: return HelpfulnessLabel::NotHelpful;
    }
}

struct PhmConfig {
    int post_dim = 512;
    int note_dim = 512;
    // Hidden widths between the input and the 3-logit head.
    std::vector<int> hidden_widths = {768, 512, 384, 256, 192, 128, 64, 32, 16};
    double learning_rate = 1e-5;
    int epochs = 20;
    int batch_size = 32;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::array<double, 3> class_weights = {1.0, 1.0, 1.0};

    int input_dim() const { return post_dim + note_dim + 2; }
    std::vector<int> widths() const;

    bool operator==(const PhmConfig&) const = default;
};

void to_json(nlohmann::json& j, const PhmConfig& c);
void from_json(const nlohmann::json& j, PhmConfig& c);

// (post embedding | note embedding | rater factor | rater intercept)
Eigen::VectorXd assemble_features(const Eigen::Ref<const Eigen::VectorXd>& post_emb,
                                  const Eigen::Ref<const Eigen::VectorXd>& note_emb,
                                  const RaterParams& rater, const PhmConfig& config);

struct TrainingMeta {
    int epochs = 0;
    double learning_rate = 0.0;
    int batch_size = 0;
    std::uint64_t seed = 0;
    std::vector<double> train_loss;  // per epoch, full-dataset
    std::vector<double> val_loss;

    bool operator==(const TrainingMeta&) const = default;
};

// Anything that maps a feature vector to 3-class probabilities. The trained
// network implements this; evaluation code also plugs in analytic oracles.
class RatingPredictor {
public:
    virtual ~RatingPredictor() = default;
    virtual Eigen::Vector3d predict_proba(const Eigen::Ref<const Eigen::VectorXd>& x) const = 0;
    virtual Eigen::Index input_dim() const = 0;
};

class PhmModel : public RatingPredictor {
public:
    PhmModel() = default;
    PhmModel(Mlp<double> net, PhmConfig config, TrainingMeta meta)
        : net_(std::move(net)), config_(std::move(config)), meta_(std::move(meta)) {}

    Eigen::Vector3d predict_proba(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
    Eigen::Index input_dim() const override { return net_.input_dim(); }

    const Mlp<double>& net() const { return net_; }
    Mlp<double>& net() { return net_; }
    const PhmConfig& config() const { return config_; }
    const TrainingMeta& meta() const { return meta_; }

    nlohmann::json to_json() const;
    static PhmModel from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static PhmModel load(const std::string& path);

private:
    Mlp<double> net_;
    PhmConfig config_;
    TrainingMeta meta_;
};

struct PhmDataset {
    Eigen::MatrixXd features;  // input_dim x n, one sample per column
    std::vector<HelpfulnessLabel> labels;

    Eigen::Index size() const { return features.cols(); }
};

PhmModel train_phm(const PhmDataset& train, const PhmDataset& val, const PhmConfig& config,
                   std::uint64_t seed);

enum class SamplingKind { Greedy, Probabilistic };

struct SamplingStrategy {
    SamplingKind kind = SamplingKind::Greedy;
    std::uint64_t seed = 0;  // required for Probabilistic

    static SamplingStrategy greedy() { return {SamplingKind::Greedy, 0}; }
    static SamplingStrategy probabilistic(std::uint64_t seed) {
        return {SamplingKind::Probabilistic, seed};
    }
};

// Argmax with ties broken toward the less helpful label.
HelpfulnessLabel sample_label_greedy(const Eigen::Vector3d& probs);

// Draw proportionally to the probabilities using the caller's RNG.
HelpfulnessLabel sample_label_probabilistic(const Eigen::Vector3d& probs, std::mt19937_64& rng);

// rng may be null for Greedy; Probabilistic requires it.
HelpfulnessLabel sample_label(const Eigen::Vector3d& probs, const SamplingStrategy& strategy,
                              std::mt19937_64* rng);

struct ReliabilityBin {
    double mean_predicted = 0.0;
    double empirical = 0.0;  // meaningful only when count > 0
    int count = 0;
};

// Equal-width probability bins per class. Always returns n_bins entries per
// class; empty bins have count 0.
std::array<std::vector<ReliabilityBin>, 3> reliability_curve(const RatingPredictor& model,
                                                             const PhmDataset& data,
                                                             int n_bins = 10);

// Feature cache rows for the training-data file.
struct FeatureRow {
    std::string note_id;
    std::string rater_id;
    Eigen::VectorXd features;
    HelpfulnessLabel label = HelpfulnessLabel::NotHelpful;
};

void write_feature_cache(const std::string& path, const std::vector<FeatureRow>& rows);
std::vector<FeatureRow> read_feature_cache(const std::string& path);

}  // namespace supernotes
