#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "supernotes/corpus.hpp"

namespace supernotes {

struct GlobalParams {
    double mu = 0.0;  // global intercept

    bool operator==(const GlobalParams&) const = default;
};

struct RaterParams {
    double factor = 0.0;     // viewpoint axis, one-dimensional
    double intercept = 0.0;  // leniency

    bool operator==(const RaterParams&) const = default;
};

struct NoteParams {
    double factor = 0.0;
    double intercept = 0.0;  // the helpfulness score

    bool operator==(const NoteParams&) const = default;
};

struct MfHyper {
    double lambda_intercept = 0.15;
    double lambda_factor = 0.03;
    // Fraction of the curvature-scaled descent step; halved on loss increase.
    double learning_rate = 1.0;
    int max_epochs = 2000;
    double convergence_tol = 1e-7;
    double helpful_threshold = 0.4;
    double not_helpful_threshold = -0.05;
    int min_ratings_for_status = 5;

    void validate() const;

    bool operator==(const MfHyper&) const = default;
};

void to_json(nlohmann::json& j, const MfHyper& h);
void from_json(const nlohmann::json& j, MfHyper& h);

struct MfModel {
    GlobalParams global;
    std::map<std::string, RaterParams> raters;
    std::map<std::string, NoteParams> notes;
    MfHyper hyper;

    nlohmann::json to_json() const;
    static MfModel from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static MfModel load(const std::string& path);
};

inline double predict_rating(const GlobalParams& global, const RaterParams& rater,
                             const NoteParams& note) {
    return global.mu + rater.intercept + note.intercept + rater.factor * note.factor;
}

struct RatingTriple {
    std::string rater_id;
    std::string note_id;
    double value = 0.0;  // in [0,1]
};

std::vector<RatingTriple> to_triples(const std::vector<Rating>& ratings);

struct MfTrainTrace {
    std::vector<double> loss_per_epoch;
    double final_loss = 0.0;
    int epochs_run = 0;
};

// Full-batch gradient descent with step halving on loss increase; the loss
// trace is non-increasing. Deterministic given the seed.
MfModel train_mf(const std::vector<RatingTriple>& ratings, const MfHyper& hyper,
                 std::uint64_t seed, MfTrainTrace* trace = nullptr);

// argmin_{f,i} sum_k (y_k - i - f a_k)^2 + lambda_i i^2 + lambda_f f^2,
// via the closed-form 2x2 normal equations. Returns (f, i).
Eigen::Vector2d ridge_2x2(const Eigen::Ref<const Eigen::VectorXd>& a,
                          const Eigen::Ref<const Eigen::VectorXd>& y, double lambda_f,
                          double lambda_i);

// Projects a set of ratings by known raters onto the latent space: solves for
// the note parameters with everything else frozen.
NoteParams fit_note(const std::vector<RaterParams>& jurors, const std::vector<double>& values,
                    const GlobalParams& global, const MfHyper& hyper);

// The symmetric anchored fit: learns parameters of unseen raters against a
// frozen model. Each rater needs at least min_ratings_for_status ratings on
// notes the model knows.
std::map<std::string, RaterParams> fit_raters_anchored(const MfModel& model,
                                                       const std::vector<RatingTriple>& new_ratings,
                                                       const MfHyper& hyper);

NoteStatus helpful_status(double note_intercept, int n_ratings, const MfHyper& hyper);

// Status recomputation at a historical cutoff: fit the note against the
// ratings visible at the cutoff using the model's rater parameters. Raters
// absent from the model carry no information and are skipped. The returned
// oracle plugs into corpus::eligible_notes.
NoteStatusOracle make_status_oracle(const MfModel& model);

}  // namespace supernotes
