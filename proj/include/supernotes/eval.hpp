#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "supernotes/jury.hpp"
#include "supernotes/mf.hpp"
#include "supernotes/phm.hpp"

namespace supernotes {

// Synthetic oracle world ---------------------------------------------------

// Defaults keep raw values mostly inside [0,1]: heavy clamping or the
// quantizer's flat regions would erase the very signal the oracle exists to
// provide.
struct SynthWorldConfig {
    int n_raters = 50;
    int n_notes = 20;
    double polarization = 0.5;  // centers of the two-component factor mixture
    double noise_sigma = 0.05;
    std::uint64_t seed = 0;

    double mu = 0.5;
    double factor_jitter = 0.1;
    double rater_intercept_sd = 0.1;
    double note_intercept_sd = 0.3;
    double density = 1.0;  // probability a (rater, note) pair is rated
};

struct SynthWorld {
    GlobalParams true_global;
    std::map<std::string, RaterParams> true_raters;
    std::map<std::string, NoteParams> true_notes;
    std::vector<RatingTriple> ratings;                // values in {0, 0.5, 1}
    std::vector<Eigen::Vector3d> generative_probs;    // aligned with ratings
    std::vector<double> raw_values;                   // pre-clamp, pre-quantize
    std::uint64_t seed = 0;
};

SynthWorld synth_world(const SynthWorldConfig& config);

// Probability mass of each label when a raw value m + N(0, sigma) is clamped
// to [0,1] and quantized to the nearest of {0, 0.5, 1}.
Eigen::Vector3d generative_label_probs(double raw_mean, double sigma);

double quantize_rating(double clamped);

// The world's true parameters wrapped as a trained model.
MfModel world_model(const SynthWorld& world, const MfHyper& hyper);

// Synthetic embeddings: the note's latent parameters occupy the two leading
// note-embedding slots; everything else is zero.
Eigen::VectorXd synth_note_embedding(const NoteParams& note, int note_dim);

// Analytic predictor matching the synthetic generator; calibrated by
// construction.
class GenerativeOraclePredictor : public RatingPredictor {
public:
    GenerativeOraclePredictor(double mu, double sigma, PhmConfig dims)
        : mu_(mu), sigma_(sigma), dims_(std::move(dims)) {}

    Eigen::Vector3d predict_proba(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
    Eigen::Index input_dim() const override { return dims_.input_dim(); }

private:
    double mu_;
    double sigma_;
    PhmConfig dims_;
};

class ConstantPredictor : public RatingPredictor {
public:
    ConstantPredictor(Eigen::Vector3d probs, Eigen::Index dim) : probs_(probs), dim_(dim) {}

    Eigen::Vector3d predict_proba(const Eigen::Ref<const Eigen::VectorXd>&) const override {
        return probs_;
    }
    Eigen::Index input_dim() const override { return dim_; }

private:
    Eigen::Vector3d probs_;
    Eigen::Index dim_;
};

inline ConstantPredictor uniform_predictor(Eigen::Index dim) {
    return ConstantPredictor(Eigen::Vector3d(1.0 / 3, 1.0 / 3, 1.0 / 3), dim);
}

// Feature matrix + labels for every rating in the world, using synthetic
// embeddings and true rater parameters.
PhmDataset features_from_world(const SynthWorld& world, const PhmConfig& dims);

// Classifier metrics --------------------------------------------------------

struct ClassifierMetrics {
    double precision = 0.0;  // macro
    double recall = 0.0;
    double f1 = 0.0;
    std::optional<double> auc_helpful_vs_rest;
    std::optional<double> auc_macro_ovr;
    std::array<std::optional<double>, 3> auc_per_class;

    bool operator==(const ClassifierMetrics&) const = default;
};

ClassifierMetrics classifier_metrics(const std::vector<Eigen::Vector3d>& preds,
                                     const std::vector<HelpfulnessLabel>& labels);

// Mann-Whitney AUC with midrank ties; nullopt when a class is degenerate.
std::optional<double> rank_auc(const std::vector<double>& scores,
                               const std::vector<bool>& positive);

// Jury precision-at-1 --------------------------------------------------------

struct EvalNote {
    std::string note_id;
    Eigen::VectorXd note_emb;
    double truth_score = 0.0;
};

struct EvalPost {
    std::string post_id;
    Eigen::VectorXd post_emb;
    std::vector<EvalNote> notes;
};

struct PrecisionAt1 {
    double overall = 0.0;
    std::map<std::string, double> by_note_count;  // keys "2", "3", "4+"
    std::map<std::string, int> posts_by_count;
    double random_baseline = 0.0;
    int n_posts = 0;

    bool operator==(const PrecisionAt1&) const = default;
};

PrecisionAt1 jury_precision_at_1(const RatingPredictor& phm, const MfModel& mf_model,
                                 const std::vector<EvalPost>& posts, int jury_size,
                                 SamplingKind sampling, std::uint64_t seed);

// Groups the world's notes into posts of the given sizes (cycled); truth
// scores come from fitting each note on all of its observed ratings.
std::vector<EvalPost> group_world_into_posts(const SynthWorld& world, const PhmConfig& dims,
                                             const MfHyper& hyper,
                                             const std::vector<int>& sizes_cycle = {2, 3, 4});

// Sampling-strategy comparison ------------------------------------------------

struct SamplingPoint {
    double observed = 0.0;
    double predicted = 0.0;

    bool operator==(const SamplingPoint&) const = default;
};

struct SamplingMae {
    double mae_greedy = 0.0;
    double mae_probabilistic = 0.0;
    std::vector<SamplingPoint> scatter_greedy;
    std::vector<SamplingPoint> scatter_probabilistic;

    bool operator==(const SamplingMae&) const = default;
};

SamplingMae sampling_mae(const RatingPredictor& phm, const MfModel& mf_model,
                         const std::vector<EvalPost>& posts, int jury_size, std::uint64_t seed);

// Mean-of-values comparator (never used by the pipeline).
double mean_aggregate(const std::vector<HelpfulnessLabel>& labels);

// Report -----------------------------------------------------------------------

struct MetricsReport {
    std::map<std::string, ClassifierMetrics> models;
    std::optional<PrecisionAt1> jury;
    std::optional<SamplingMae> sampling;
    std::optional<std::array<std::vector<ReliabilityBin>, 3>> calibration;

    nlohmann::json to_json() const;
    static MetricsReport from_json(const nlohmann::json& j);
    bool operator==(const MetricsReport& other) const;
};

// metrics.json plus per-figure CSVs (classifier bars, jury bars, sampling
// scatters, reliability bins).
void emit_report(const MetricsReport& metrics, const std::string& out_dir);

// Utilities ---------------------------------------------------------------------

double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace supernotes
