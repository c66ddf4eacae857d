#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "supernotes/mf.hpp"
#include "supernotes/phm.hpp"

namespace supernotes {

struct Jury {
    // Sorted by rater_id; membership is a set and per-juror randomness is
    // keyed by identity, so order carries no meaning.
    std::vector<std::pair<std::string, RaterParams>> members;
    std::uint64_t seed = 0;
};

struct JuryVerdict {
    std::vector<HelpfulnessLabel> labels;  // aligned with jury members
    std::vector<double> values;
    NoteParams fitted;
    double score = 0.0;  // = fitted.intercept

    nlohmann::json to_json(const Jury& jury) const;
};

// Uniform sample without replacement from the model's rater population.
Jury sample_jury(const MfModel& model, int size, std::uint64_t seed);

// Swappable sampling policy; uniform is the only shipped implementation.
using JurySampler = std::function<Jury(const MfModel&, int, std::uint64_t)>;
inline JurySampler uniform_jury_sampler() {
    return [](const MfModel& model, int size, std::uint64_t seed) {
        return sample_jury(model, size, seed);
    };
}

// One predicted label per juror. Probabilistic draws use an RNG derived from
// (jury.seed, strategy.seed, rater_id), never from member position.
std::vector<HelpfulnessLabel> simulate_jury_ratings(const RatingPredictor& phm, const Jury& jury,
                                                    const Eigen::Ref<const Eigen::VectorXd>& post_emb,
                                                    const Eigen::Ref<const Eigen::VectorXd>& note_emb,
                                                    const SamplingStrategy& strategy);

// Projects the jury's labels onto the latent space; the fitted intercept is
// the helpfulness score. Invariant under permutations of (member, label) pairs.
JuryVerdict aggregate_score(const Jury& jury, const std::vector<HelpfulnessLabel>& labels,
                            const GlobalParams& global, const MfHyper& hyper);

}  // namespace supernotes
