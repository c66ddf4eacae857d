#include "supernotes/mf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace supernotes {

void MfHyper::validate() const {
    if (!(lambda_intercept >= lambda_factor && lambda_factor >= 0.0)) {
        throw std::invalid_argument("require lambda_intercept >= lambda_factor >= 0");
    }
    if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be positive");
    if (max_epochs <= 0) throw std::invalid_argument("max_epochs must be positive");
    if (convergence_tol <= 0.0) throw std::invalid_argument("convergence_tol must be positive");
    if (min_ratings_for_status <= 0) {
        throw std::invalid_argument("min_ratings_for_status must be positive");
    }
}

void to_json(nlohmann::json& j, const MfHyper& h) {
    j = nlohmann::json{{"lambda_intercept", h.lambda_intercept},
                       {"lambda_factor", h.lambda_factor},
                       {"learning_rate", h.learning_rate},
                       {"max_epochs", h.max_epochs},
                       {"convergence_tol", h.convergence_tol},
                       {"helpful_threshold", h.helpful_threshold},
                       {"not_helpful_threshold", h.not_helpful_threshold},
                       {"min_ratings_for_status", h.min_ratings_for_status}};
}

void from_json(const nlohmann::json& j, MfHyper& h) {
    j.at("lambda_intercept").get_to(h.lambda_intercept);
    j.at("lambda_factor").get_to(h.lambda_factor);
    j.at("learning_rate").get_to(h.learning_rate);
    j.at("max_epochs").get_to(h.max_epochs);
    j.at("convergence_tol").get_to(h.convergence_tol);
    j.at("helpful_threshold").get_to(h.helpful_threshold);
    j.at("not_helpful_threshold").get_to(h.not_helpful_threshold);
    j.at("min_ratings_for_status").get_to(h.min_ratings_for_status);
}

nlohmann::json MfModel::to_json() const {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["hyper"] = hyper;
    j["mu"] = global.mu;
    j["raters"] = nlohmann::json::object();
    for (const auto& [id, p] : raters) j["raters"][id] = {p.factor, p.intercept};
    j["notes"] = nlohmann::json::object();
    for (const auto& [id, p] : notes) j["notes"][id] = {p.factor, p.intercept};
    return j;
}

MfModel MfModel::from_json(const nlohmann::json& j) {
    if (j.at("schema_version").get<int>() != 1) {
        throw std::runtime_error("unsupported model schema_version");
    }
    MfModel model;
    model.hyper = j.at("hyper").get<MfHyper>();
    model.global.mu = j.at("mu").get<double>();
    for (const auto& [id, p] : j.at("raters").items()) {
        model.raters[id] = RaterParams{p.at(0).get<double>(), p.at(1).get<double>()};
    }
    for (const auto& [id, p] : j.at("notes").items()) {
        model.notes[id] = NoteParams{p.at(0).get<double>(), p.at(1).get<double>()};
    }
    return model;
}

void MfModel::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file: " + path);
    out << to_json().dump(2) << '\n';
}

MfModel MfModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read model file: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

std::vector<RatingTriple> to_triples(const std::vector<Rating>& ratings) {
    std::vector<RatingTriple> out;
    out.reserve(ratings.size());
    for (const Rating& r : ratings) {
        out.push_back({r.rater_id, r.note_id, label_value(r.label)});
    }
    return out;
}

namespace {

struct Indexed {
    std::vector<std::string> rater_ids;  // sorted
    std::vector<std::string> note_ids;   // sorted
    Eigen::VectorXi rater_of;            // per rating
    Eigen::VectorXi note_of;
    Eigen::VectorXd value;
};

Indexed index_ratings(const std::vector<RatingTriple>& ratings) {
    Indexed idx;
    for (const RatingTriple& r : ratings) {
        idx.rater_ids.push_back(r.rater_id);
        idx.note_ids.push_back(r.note_id);
    }
    auto uniq = [](std::vector<std::string>& v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    };
    uniq(idx.rater_ids);
    uniq(idx.note_ids);

    auto index_of = [](const std::vector<std::string>& v, const std::string& s) {
        return static_cast<int>(std::lower_bound(v.begin(), v.end(), s) - v.begin());
    };
    const auto n = static_cast<Eigen::Index>(ratings.size());
    idx.rater_of.resize(n);
    idx.note_of.resize(n);
    idx.value.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        idx.rater_of[k] = index_of(idx.rater_ids, ratings[k].rater_id);
        idx.note_of[k] = index_of(idx.note_ids, ratings[k].note_id);
        idx.value[k] = ratings[k].value;
    }
    return idx;
}

struct MfState {
    double mu = 0.0;
    Eigen::VectorXd fu, iu, fn, in;
};

double mf_objective(const MfState& s, const Indexed& idx, const MfHyper& h) {
    double sq = 0.0;
    for (Eigen::Index k = 0; k < idx.value.size(); ++k) {
        const int u = idx.rater_of[k];
        const int n = idx.note_of[k];
        const double err = s.mu + s.iu[u] + s.in[n] + s.fu[u] * s.fn[n] - idx.value[k];
        sq += err * err;
    }
    const double reg_i = s.mu * s.mu + s.iu.squaredNorm() + s.in.squaredNorm();
    const double reg_f = s.fu.squaredNorm() + s.fn.squaredNorm();
    return sq + h.lambda_intercept * reg_i + h.lambda_factor * reg_f;
}

// Gradient scaled by the exact diagonal curvature. Parameters touch wildly
// different numbers of ratings (mu sees all of them), so a single uniform
// step length cannot work; the Jacobi scaling keeps this plain full-batch
// descent while making the step size meaningful for every coordinate.
MfState mf_scaled_gradient(const MfState& s, const Indexed& idx, const MfHyper& h) {
    MfState g;
    g.mu = 0.0;
    g.fu = Eigen::VectorXd::Zero(s.fu.size());
    g.iu = Eigen::VectorXd::Zero(s.iu.size());
    g.fn = Eigen::VectorXd::Zero(s.fn.size());
    g.in = Eigen::VectorXd::Zero(s.in.size());

    double d_mu = 2.0 * h.lambda_intercept;
    Eigen::VectorXd d_fu = Eigen::VectorXd::Constant(s.fu.size(), 2.0 * h.lambda_factor);
    Eigen::VectorXd d_iu = Eigen::VectorXd::Constant(s.iu.size(), 2.0 * h.lambda_intercept);
    Eigen::VectorXd d_fn = Eigen::VectorXd::Constant(s.fn.size(), 2.0 * h.lambda_factor);
    Eigen::VectorXd d_in = Eigen::VectorXd::Constant(s.in.size(), 2.0 * h.lambda_intercept);

    for (Eigen::Index k = 0; k < idx.value.size(); ++k) {
        const int u = idx.rater_of[k];
        const int n = idx.note_of[k];
        const double err = s.mu + s.iu[u] + s.in[n] + s.fu[u] * s.fn[n] - idx.value[k];
        g.mu += 2.0 * err;
        g.iu[u] += 2.0 * err;
        g.in[n] += 2.0 * err;
        g.fu[u] += 2.0 * err * s.fn[n];
        g.fn[n] += 2.0 * err * s.fu[u];
        d_mu += 2.0;
        d_iu[u] += 2.0;
        d_in[n] += 2.0;
        d_fu[u] += 2.0 * s.fn[n] * s.fn[n];
        d_fn[n] += 2.0 * s.fu[u] * s.fu[u];
    }
    g.mu += 2.0 * h.lambda_intercept * s.mu;
    g.iu += 2.0 * h.lambda_intercept * s.iu;
    g.in += 2.0 * h.lambda_intercept * s.in;
    g.fu += 2.0 * h.lambda_factor * s.fu;
    g.fn += 2.0 * h.lambda_factor * s.fn;

    const double floor = 1e-12;
    g.mu /= std::max(d_mu, floor);
    g.iu.array() /= d_iu.array().max(floor);
    g.in.array() /= d_in.array().max(floor);
    g.fu.array() /= d_fu.array().max(floor);
    g.fn.array() /= d_fn.array().max(floor);
    return g;
}

[[noreturn]] void divergence_error(const MfHyper& h) {
    std::ostringstream msg;
    msg << "training loss is non-finite (diverged); offending hyperparameters:"
        << " learning_rate=" << h.learning_rate
        << " lambda_intercept=" << h.lambda_intercept
        << " lambda_factor=" << h.lambda_factor;
    throw std::runtime_error(msg.str());
}

}  // namespace

MfModel train_mf(const std::vector<RatingTriple>& ratings, const MfHyper& hyper,
                 std::uint64_t seed, MfTrainTrace* trace) {
    hyper.validate();
    if (ratings.empty()) throw std::invalid_argument("train_mf needs at least one rating");
    for (const RatingTriple& r : ratings) {
        if (!(r.value >= 0.0 && r.value <= 1.0)) {
            throw std::invalid_argument("rating values must lie in [0,1]");
        }
    }

    const Indexed idx = index_ratings(ratings);
    const auto n_raters = static_cast<Eigen::Index>(idx.rater_ids.size());
    const auto n_notes = static_cast<Eigen::Index>(idx.note_ids.size());

    MfState state;
    state.iu = Eigen::VectorXd::Zero(n_raters);
    state.in = Eigen::VectorXd::Zero(n_notes);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> init(-0.1, 0.1);
    state.fu.resize(n_raters);
    state.fn.resize(n_notes);
    for (Eigen::Index i = 0; i < n_raters; ++i) state.fu[i] = init(rng);
    for (Eigen::Index i = 0; i < n_notes; ++i) state.fn[i] = init(rng);

    double loss = mf_objective(state, idx, hyper);
    if (!std::isfinite(loss)) divergence_error(hyper);
    double lr = hyper.learning_rate;
    int epochs = 0;

    for (int epoch = 0; epoch < hyper.max_epochs; ++epoch) {
        const MfState grad = mf_scaled_gradient(state, idx, hyper);

        MfState trial;
        double trial_loss = 0.0;
        bool accepted = false;
        while (lr >= 1e-15) {
            trial.mu = state.mu - lr * grad.mu;
            trial.fu = state.fu - lr * grad.fu;
            trial.iu = state.iu - lr * grad.iu;
            trial.fn = state.fn - lr * grad.fn;
            trial.in = state.in - lr * grad.in;
            trial_loss = mf_objective(trial, idx, hyper);
            if (!std::isfinite(trial_loss)) divergence_error(hyper);
            if (trial_loss <= loss) {
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        if (!accepted) break;  // no descent step left at any feasible length

        state = std::move(trial);
        ++epochs;
        if (trace) trace->loss_per_epoch.push_back(trial_loss);
        const double improvement = (loss - trial_loss) / std::max(std::abs(loss), 1e-12);
        loss = trial_loss;
        lr = std::min(lr * 1.1, hyper.learning_rate);
        if (improvement < hyper.convergence_tol) break;
    }

    if (trace) {
        trace->final_loss = loss;
        trace->epochs_run = epochs;
    }

    MfModel model;
    model.hyper = hyper;
    model.global.mu = state.mu;
    for (Eigen::Index i = 0; i < n_raters; ++i) {
        model.raters[idx.rater_ids[i]] = RaterParams{state.fu[i], state.iu[i]};
    }
    for (Eigen::Index i = 0; i < n_notes; ++i) {
        model.notes[idx.note_ids[i]] = NoteParams{state.fn[i], state.in[i]};
    }
    return model;
}

Eigen::Vector2d ridge_2x2(const Eigen::Ref<const Eigen::VectorXd>& a,
                          const Eigen::Ref<const Eigen::VectorXd>& y, double lambda_f,
                          double lambda_i) {
    const auto n = static_cast<double>(a.size());
    Eigen::Matrix2d m;
    m << a.squaredNorm() + lambda_f, a.sum(),
         a.sum(), n + lambda_i;
    Eigen::Vector2d rhs;
    rhs << a.dot(y), y.sum();
    return m.ldlt().solve(rhs);
}

NoteParams fit_note(const std::vector<RaterParams>& jurors, const std::vector<double>& values,
                    const GlobalParams& global, const MfHyper& hyper) {
    if (jurors.size() != values.size()) {
        throw std::invalid_argument("fit_note: jurors and values must align");
    }
    if (jurors.size() < 2 ||
        jurors.size() < static_cast<std::size_t>(hyper.min_ratings_for_status)) {
        throw std::invalid_argument("fit_note: too few jurors for a stable fit");
    }
    if (!(hyper.lambda_factor > 0.0)) {
        throw std::invalid_argument("fit_note requires lambda_factor > 0");
    }

    const auto n = static_cast<Eigen::Index>(jurors.size());
    Eigen::VectorXd a(n), y(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        a[k] = jurors[k].factor;
        y[k] = values[k] - global.mu - jurors[k].intercept;
    }
    const Eigen::Vector2d sol = ridge_2x2(a, y, hyper.lambda_factor, hyper.lambda_intercept);
    return NoteParams{sol[0], sol[1]};
}

std::map<std::string, RaterParams> fit_raters_anchored(const MfModel& model,
                                                       const std::vector<RatingTriple>& new_ratings,
                                                       const MfHyper& hyper) {
    if (!(hyper.lambda_factor > 0.0)) {
        throw std::invalid_argument("fit_raters_anchored requires lambda_factor > 0");
    }
    std::map<std::string, std::vector<const RatingTriple*>> by_rater;
    for (const RatingTriple& r : new_ratings) {
        if (model.notes.find(r.note_id) == model.notes.end()) {
            throw std::invalid_argument("fit_raters_anchored: unseen note_id: " + r.note_id);
        }
        by_rater[r.rater_id].push_back(&r);
    }

    std::map<std::string, RaterParams> fitted;
    for (const auto& [rater_id, rows] : by_rater) {
        if (rows.size() < static_cast<std::size_t>(hyper.min_ratings_for_status)) {
            throw std::invalid_argument("fit_raters_anchored: rater " + rater_id +
                                        " has too few ratings for a stable fit");
        }
        const auto n = static_cast<Eigen::Index>(rows.size());
        Eigen::VectorXd a(n), y(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            const NoteParams& note = model.notes.at(rows[k]->note_id);
            a[k] = note.factor;
            y[k] = rows[k]->value - model.global.mu - note.intercept;
        }
        const Eigen::Vector2d sol = ridge_2x2(a, y, hyper.lambda_factor, hyper.lambda_intercept);
        fitted[rater_id] = RaterParams{sol[0], sol[1]};
    }
    return fitted;
}

NoteStatus helpful_status(double note_intercept, int n_ratings, const MfHyper& hyper) {
    if (n_ratings < hyper.min_ratings_for_status) return NoteStatus::NeedsMoreRatings;
    if (note_intercept >= hyper.helpful_threshold) return NoteStatus::CurrentlyRatedHelpful;
    if (note_intercept <= hyper.not_helpful_threshold) {
        return NoteStatus::CurrentlyRatedNotHelpful;
    }
    return NoteStatus::NeedsMoreRatings;
}

NoteStatusOracle make_status_oracle(const MfModel& model) {
    return [&model](const Note&, const std::vector<const Rating*>& ratings) {
        std::vector<RaterParams> jurors;
        std::vector<double> values;
        for (const Rating* r : ratings) {
            auto it = model.raters.find(r->rater_id);
            if (it == model.raters.end()) continue;  // cold-start rater, no signal
            jurors.push_back(it->second);
            values.push_back(label_value(r->label));
        }
        if (jurors.size() < static_cast<std::size_t>(model.hyper.min_ratings_for_status)) {
            return NoteStatus::NeedsMoreRatings;
        }
        const NoteParams fitted = fit_note(jurors, values, model.global, model.hyper);
        return helpful_status(fitted.intercept, static_cast<int>(jurors.size()), model.hyper);
    };
}

}  // namespace supernotes
