#include "supernotes/jury.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "supernotes/seeding.hpp"

namespace supernotes {

nlohmann::json JuryVerdict::to_json(const Jury& jury) const {
    nlohmann::json j;
    j["jury_seed"] = jury.seed;
    j["raters"] = nlohmann::json::array();
    for (const auto& [id, params] : jury.members) j["raters"].push_back(id);
    j["labels"] = nlohmann::json::array();
    for (HelpfulnessLabel l : labels) j["labels"].push_back(std::string(to_string(l)));
    j["values"] = values;
    j["fitted"] = {{"factor", fitted.factor}, {"intercept", fitted.intercept}};
    j["score"] = score;
    return j;
}

Jury sample_jury(const MfModel& model, int size, std::uint64_t seed) {
    if (size < 2) throw std::invalid_argument("sample_jury: size must be >= 2");
    if (static_cast<std::size_t>(size) > model.raters.size()) {
        throw std::invalid_argument("sample_jury: size exceeds rater population");
    }

    std::vector<std::string> ids;
    ids.reserve(model.raters.size());
    for (const auto& [id, params] : model.raters) ids.push_back(id);

    // Partial Fisher-Yates over the sorted population.
    std::mt19937_64 rng(seed);
    const auto n = ids.size();
    for (std::size_t i = 0; i < static_cast<std::size_t>(size); ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(ids[i], ids[pick(rng)]);
    }
    ids.resize(static_cast<std::size_t>(size));
    std::sort(ids.begin(), ids.end());

    Jury jury;
    jury.seed = seed;
    for (const std::string& id : ids) jury.members.emplace_back(id, model.raters.at(id));
    return jury;
}

std::vector<HelpfulnessLabel> simulate_jury_ratings(const RatingPredictor& phm, const Jury& jury,
                                                    const Eigen::Ref<const Eigen::VectorXd>& post_emb,
                                                    const Eigen::Ref<const Eigen::VectorXd>& note_emb,
                                                    const SamplingStrategy& strategy) {
    if (jury.members.empty()) throw std::invalid_argument("simulate_jury_ratings: empty jury");
    if (post_emb.size() + note_emb.size() + 2 != phm.input_dim()) {
        throw std::invalid_argument("simulate_jury_ratings: embedding dimensions do not match "
                                    "the predictor input");
    }

    const std::uint64_t base = derive_seed(jury.seed, strategy.seed);
    Eigen::VectorXd x(phm.input_dim());
    x.head(post_emb.size()) = post_emb;
    x.segment(post_emb.size(), note_emb.size()) = note_emb;

    std::vector<HelpfulnessLabel> labels;
    labels.reserve(jury.members.size());
    for (const auto& [rater_id, params] : jury.members) {
        x[post_emb.size() + note_emb.size()] = params.factor;
        x[post_emb.size() + note_emb.size() + 1] = params.intercept;
        const Eigen::Vector3d probs = phm.predict_proba(x);
        if (strategy.kind == SamplingKind::Greedy) {
            labels.push_back(sample_label_greedy(probs));
        } else {
            std::mt19937_64 rng(derive_seed(base, rater_id));
            labels.push_back(sample_label_probabilistic(probs, rng));
        }
    }
    return labels;
}

JuryVerdict aggregate_score(const Jury& jury, const std::vector<HelpfulnessLabel>& labels,
                            const GlobalParams& global, const MfHyper& hyper) {
    if (labels.size() != jury.members.size()) {
        throw std::invalid_argument("aggregate_score: labels must align with jury members");
    }

    // Accumulate the fit in rater_id order so the score is bit-identical
    // under any permutation of the inputs.
    std::vector<std::size_t> order(jury.members.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&jury](std::size_t a, std::size_t b) {
        return jury.members[a].first < jury.members[b].first;
    });

    std::vector<RaterParams> jurors;
    std::vector<double> sorted_values;
    jurors.reserve(order.size());
    sorted_values.reserve(order.size());
    for (std::size_t i : order) {
        jurors.push_back(jury.members[i].second);
        sorted_values.push_back(label_value(labels[i]));
    }

    JuryVerdict verdict;
    verdict.labels = labels;
    verdict.values.reserve(labels.size());
    for (HelpfulnessLabel l : labels) verdict.values.push_back(label_value(l));
    verdict.fitted = fit_note(jurors, sorted_values, global, hyper);
    verdict.score = verdict.fitted.intercept;
    return verdict;
}

}  // namespace supernotes
