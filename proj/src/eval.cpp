#include "supernotes/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "supernotes/seeding.hpp"

namespace supernotes {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::string padded_id(const char* prefix, int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%s%04d", prefix, i);
    return buf;
}

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double normal_sample(std::mt19937_64& rng) {
    // Box-Muller; fully determined by the engine's output sequence.
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

nlohmann::json optional_to_json(const std::optional<double>& v) {
    if (v) return *v;
    return nullptr;
}

std::optional<double> optional_from_json(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

}  // namespace

double quantize_rating(double clamped) {
    if (clamped < 0.25) return 0.0;
    if (clamped < 0.75) return 0.5;
    return 1.0;
}

Eigen::Vector3d generative_label_probs(double raw_mean, double sigma) {
    Eigen::Vector3d probs;  // (helpful, somewhat, not)
    if (sigma <= 0.0) {
        const double v = quantize_rating(std::clamp(raw_mean, 0.0, 1.0));
        probs[kClassHelpful] = v == 1.0 ? 1.0 : 0.0;
        probs[kClassSomewhat] = v == 0.5 ? 1.0 : 0.0;
        probs[kClassNotHelpful] = v == 0.0 ? 1.0 : 0.0;
        return probs;
    }
    const double p_not = normal_cdf((0.25 - raw_mean) / sigma);
    const double p_helpful = 1.0 - normal_cdf((0.75 - raw_mean) / sigma);
    probs[kClassHelpful] = p_helpful;
    probs[kClassNotHelpful] = p_not;
    probs[kClassSomewhat] = std::max(0.0, 1.0 - p_not - p_helpful);
    return probs;
}

SynthWorld synth_world(const SynthWorldConfig& config) {
    if (config.n_raters < 2 || config.n_notes < 2) {
        throw std::invalid_argument("synth_world: need at least 2 raters and 2 notes");
    }

    SynthWorld world;
    world.seed = config.seed;
    world.true_global.mu = config.mu;

    std::mt19937_64 rng(derive_seed(config.seed, "params"));
    for (int i = 0; i < config.n_raters; ++i) {
        RaterParams p;
        const double sign = (rng() & 1u) ? 1.0 : -1.0;
        p.factor = sign * config.polarization + config.factor_jitter * normal_sample(rng);
        p.intercept = config.rater_intercept_sd * normal_sample(rng);
        world.true_raters[padded_id("r", i)] = p;
    }
    for (int i = 0; i < config.n_notes; ++i) {
        NoteParams p;
        const double sign = (rng() & 1u) ? 1.0 : -1.0;
        p.factor = sign * config.polarization + config.factor_jitter * normal_sample(rng);
        p.intercept = config.note_intercept_sd * normal_sample(rng);
        world.true_notes[padded_id("n", i)] = p;
    }

    std::mt19937_64 rating_rng(derive_seed(config.seed, "ratings"));
    for (const auto& [rater_id, rater] : world.true_raters) {
        for (const auto& [note_id, note] : world.true_notes) {
            if (config.density < 1.0 && uniform01(rating_rng) >= config.density) continue;
            const double mean = config.mu + rater.intercept + note.intercept +
                                rater.factor * note.factor;
            const double raw =
                mean + (config.noise_sigma > 0.0
                            ? config.noise_sigma * normal_sample(rating_rng)
                            : 0.0);
            RatingTriple triple;
            triple.rater_id = rater_id;
            triple.note_id = note_id;
            triple.value = quantize_rating(std::clamp(raw, 0.0, 1.0));
            world.ratings.push_back(std::move(triple));
            world.generative_probs.push_back(generative_label_probs(mean, config.noise_sigma));
            world.raw_values.push_back(raw);
        }
    }
    return world;
}

MfModel world_model(const SynthWorld& world, const MfHyper& hyper) {
    MfModel model;
    model.global = world.true_global;
    model.raters = world.true_raters;
    model.notes = world.true_notes;
    model.hyper = hyper;
    return model;
}

Eigen::VectorXd synth_note_embedding(const NoteParams& note, int note_dim) {
    if (note_dim < 2) throw std::invalid_argument("synthetic note embeddings need dim >= 2");
    Eigen::VectorXd v = Eigen::VectorXd::Zero(note_dim);
    v[0] = note.factor;
    v[1] = note.intercept;
    return v;
}

Eigen::Vector3d GenerativeOraclePredictor::predict_proba(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (x.size() != dims_.input_dim()) {
        throw std::invalid_argument("oracle predictor: feature dimension mismatch");
    }
    const double note_factor = x[dims_.post_dim];
    const double note_intercept = x[dims_.post_dim + 1];
    const double rater_factor = x[dims_.post_dim + dims_.note_dim];
    const double rater_intercept = x[dims_.post_dim + dims_.note_dim + 1];
    const double mean =
        mu_ + rater_intercept + note_intercept + rater_factor * note_factor;
    return generative_label_probs(mean, sigma_);
}

PhmDataset features_from_world(const SynthWorld& world, const PhmConfig& dims) {
    PhmDataset data;
    data.features.resize(dims.input_dim(), static_cast<Eigen::Index>(world.ratings.size()));
    data.labels.reserve(world.ratings.size());

    const Eigen::VectorXd post_emb = Eigen::VectorXd::Zero(dims.post_dim);
    for (std::size_t k = 0; k < world.ratings.size(); ++k) {
        const RatingTriple& r = world.ratings[k];
        const Eigen::VectorXd note_emb =
            synth_note_embedding(world.true_notes.at(r.note_id), dims.note_dim);
        data.features.col(static_cast<Eigen::Index>(k)) =
            assemble_features(post_emb, note_emb, world.true_raters.at(r.rater_id), dims);
        if (r.value == 1.0) data.labels.push_back(HelpfulnessLabel::Helpful);
        else if (r.value == 0.5) data.labels.push_back(HelpfulnessLabel::SomewhatHelpful);
        else data.labels.push_back(HelpfulnessLabel::NotHelpful);
    }
    return data;
}

std::optional<double> rank_auc(const std::vector<double>& scores,
                               const std::vector<bool>& positive) {
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (bool p : positive) n_pos += p ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Midranks over tied score groups.
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }

    double rank_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (positive[k]) rank_sum += rank[k];
    }
    const double n_pos_d = static_cast<double>(n_pos);
    const double n_neg_d = static_cast<double>(n_neg);
    return (rank_sum - n_pos_d * (n_pos_d + 1.0) / 2.0) / (n_pos_d * n_neg_d);
}

ClassifierMetrics classifier_metrics(const std::vector<Eigen::Vector3d>& preds,
                                     const std::vector<HelpfulnessLabel>& labels) {
    if (preds.empty() || preds.size() != labels.size()) {
        throw std::invalid_argument("classifier_metrics: preds and labels must align");
    }

    long confusion[3][3] = {};  // [truth][predicted]
    for (std::size_t k = 0; k < preds.size(); ++k) {
        const int truth = class_of(labels[k]);
        const int predicted = class_of(sample_label_greedy(preds[k]));
        ++confusion[truth][predicted];
    }

    ClassifierMetrics m;
    double precision_sum = 0.0, recall_sum = 0.0, f1_sum = 0.0;
    for (int c = 0; c < kNumClasses; ++c) {
        long tp = confusion[c][c];
        long fp = 0, fn = 0;
        for (int o = 0; o < kNumClasses; ++o) {
            if (o == c) continue;
            fp += confusion[o][c];
            fn += confusion[c][o];
        }
        const double precision = (tp + fp) > 0 ? double(tp) / double(tp + fp) : 0.0;
        const double recall = (tp + fn) > 0 ? double(tp) / double(tp + fn) : 0.0;
        const double f1 =
            (precision + recall) > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        precision_sum += precision;
        recall_sum += recall;
        f1_sum += f1;
    }
    m.precision = precision_sum / kNumClasses;
    m.recall = recall_sum / kNumClasses;
    m.f1 = f1_sum / kNumClasses;

    for (int c = 0; c < kNumClasses; ++c) {
        std::vector<double> scores(preds.size());
        std::vector<bool> positive(preds.size());
        for (std::size_t k = 0; k < preds.size(); ++k) {
            scores[k] = preds[k][c];
            positive[k] = class_of(labels[k]) == c;
        }
        m.auc_per_class[c] = rank_auc(scores, positive);
    }
    m.auc_helpful_vs_rest = m.auc_per_class[kClassHelpful];

    double auc_sum = 0.0;
    int auc_n = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        if (m.auc_per_class[c]) {
            auc_sum += *m.auc_per_class[c];
            ++auc_n;
        }
    }
    if (auc_n > 0) m.auc_macro_ovr = auc_sum / auc_n;
    return m;
}

namespace {

std::vector<double> jury_scores_for_post(const RatingPredictor& phm, const MfModel& mf_model,
                                         const EvalPost& post, int jury_size, SamplingKind kind,
                                         std::uint64_t seed) {
    const std::uint64_t post_seed = derive_seed(seed, post.post_id);
    const Jury jury = sample_jury(mf_model, jury_size, post_seed);
    const SamplingStrategy strategy{kind, post_seed};

    std::vector<double> scores;
    scores.reserve(post.notes.size());
    for (const EvalNote& note : post.notes) {
        const auto labels =
            simulate_jury_ratings(phm, jury, post.post_emb, note.note_emb, strategy);
        scores.push_back(aggregate_score(jury, labels, mf_model.global, mf_model.hyper).score);
    }
    return scores;
}

std::size_t argmax_index(const std::vector<double>& values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

std::string count_stratum(std::size_t n_notes) {
    if (n_notes == 2) return "2";
    if (n_notes == 3) return "3";
    return "4+";
}

}  // namespace

PrecisionAt1 jury_precision_at_1(const RatingPredictor& phm, const MfModel& mf_model,
                                 const std::vector<EvalPost>& posts, int jury_size,
                                 SamplingKind sampling, std::uint64_t seed) {
    if (posts.empty()) throw std::invalid_argument("jury_precision_at_1: no posts");
    for (const EvalPost& post : posts) {
        if (post.notes.size() < 2) {
            throw std::invalid_argument("jury_precision_at_1: every post needs >= 2 notes");
        }
    }

    PrecisionAt1 out;
    std::map<std::string, int> hits_by_count;
    double baseline_sum = 0.0;
    int hits = 0;

    for (const EvalPost& post : posts) {
        const std::vector<double> predicted =
            jury_scores_for_post(phm, mf_model, post, jury_size, sampling, seed);
        std::vector<double> truth;
        truth.reserve(post.notes.size());
        for (const EvalNote& note : post.notes) truth.push_back(note.truth_score);

        const bool hit = argmax_index(predicted) == argmax_index(truth);
        const std::string stratum = count_stratum(post.notes.size());
        ++out.posts_by_count[stratum];
        if (hit) {
            ++hits;
            ++hits_by_count[stratum];
        }
        baseline_sum += 1.0 / static_cast<double>(post.notes.size());
    }

    out.n_posts = static_cast<int>(posts.size());
    out.overall = static_cast<double>(hits) / out.n_posts;
    out.random_baseline = baseline_sum / out.n_posts;
    for (const auto& [stratum, n] : out.posts_by_count) {
        out.by_note_count[stratum] = static_cast<double>(hits_by_count[stratum]) / n;
    }
    return out;
}

std::vector<EvalPost> group_world_into_posts(const SynthWorld& world, const PhmConfig& dims,
                                             const MfHyper& hyper,
                                             const std::vector<int>& sizes_cycle) {
    if (sizes_cycle.empty()) throw std::invalid_argument("sizes_cycle must be non-empty");

    // Truth scores: fit each note against all of its observed ratings using
    // the true rater parameters.
    std::map<std::string, std::pair<std::vector<RaterParams>, std::vector<double>>> by_note;
    for (const RatingTriple& r : world.ratings) {
        auto& [jurors, values] = by_note[r.note_id];
        jurors.push_back(world.true_raters.at(r.rater_id));
        values.push_back(r.value);
    }

    std::vector<EvalPost> posts;
    EvalPost current;
    std::size_t cycle = 0;
    int post_index = 0;
    for (const auto& [note_id, note] : world.true_notes) {
        auto it = by_note.find(note_id);
        if (it == by_note.end() ||
            it->second.first.size() < static_cast<std::size_t>(hyper.min_ratings_for_status)) {
            continue;
        }
        if (current.notes.empty()) {
            current.post_id = padded_id("p", post_index);
            current.post_emb = Eigen::VectorXd::Zero(dims.post_dim);
        }
        EvalNote eval_note;
        eval_note.note_id = note_id;
        eval_note.note_emb = synth_note_embedding(note, dims.note_dim);
        eval_note.truth_score =
            fit_note(it->second.first, it->second.second, world.true_global, hyper).intercept;
        current.notes.push_back(std::move(eval_note));

        if (current.notes.size() ==
            static_cast<std::size_t>(sizes_cycle[cycle % sizes_cycle.size()])) {
            posts.push_back(std::move(current));
            current = EvalPost{};
            ++cycle;
            ++post_index;
        }
    }
    if (current.notes.size() >= 2) posts.push_back(std::move(current));
    return posts;
}

SamplingMae sampling_mae(const RatingPredictor& phm, const MfModel& mf_model,
                         const std::vector<EvalPost>& posts, int jury_size, std::uint64_t seed) {
    if (posts.empty()) throw std::invalid_argument("sampling_mae: no posts");

    SamplingMae out;
    double abs_greedy = 0.0, abs_prob = 0.0;
    std::size_t n = 0;
    for (const EvalPost& post : posts) {
        const std::vector<double> greedy =
            jury_scores_for_post(phm, mf_model, post, jury_size, SamplingKind::Greedy, seed);
        const std::vector<double> prob = jury_scores_for_post(
            phm, mf_model, post, jury_size, SamplingKind::Probabilistic, seed);
        for (std::size_t i = 0; i < post.notes.size(); ++i) {
            const double observed = post.notes[i].truth_score;
            out.scatter_greedy.push_back({observed, greedy[i]});
            out.scatter_probabilistic.push_back({observed, prob[i]});
            abs_greedy += std::abs(greedy[i] - observed);
            abs_prob += std::abs(prob[i] - observed);
            ++n;
        }
    }
    out.mae_greedy = abs_greedy / static_cast<double>(n);
    out.mae_probabilistic = abs_prob / static_cast<double>(n);
    return out;
}

double mean_aggregate(const std::vector<HelpfulnessLabel>& labels) {
    if (labels.empty()) throw std::invalid_argument("mean_aggregate: empty labels");
    double sum = 0.0;
    for (HelpfulnessLabel l : labels) sum += label_value(l);
    return sum / static_cast<double>(labels.size());
}

// Report ------------------------------------------------------------------

namespace {

nlohmann::json metrics_to_json(const ClassifierMetrics& m) {
    nlohmann::json j;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["f1"] = m.f1;
    j["auc_helpful_vs_rest"] = optional_to_json(m.auc_helpful_vs_rest);
    j["auc_macro_ovr"] = optional_to_json(m.auc_macro_ovr);
    j["auc_per_class"] = nlohmann::json::array();
    for (const auto& auc : m.auc_per_class) j["auc_per_class"].push_back(optional_to_json(auc));
    return j;
}

ClassifierMetrics metrics_from_json(const nlohmann::json& j) {
    ClassifierMetrics m;
    j.at("precision").get_to(m.precision);
    j.at("recall").get_to(m.recall);
    j.at("f1").get_to(m.f1);
    m.auc_helpful_vs_rest = optional_from_json(j.at("auc_helpful_vs_rest"));
    m.auc_macro_ovr = optional_from_json(j.at("auc_macro_ovr"));
    for (int c = 0; c < kNumClasses; ++c) {
        m.auc_per_class[c] = optional_from_json(j.at("auc_per_class").at(c));
    }
    return m;
}

}  // namespace

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j;
    if (!models.empty()) {
        j["models"] = nlohmann::json::object();
        for (const auto& [name, m] : models) j["models"][name] = metrics_to_json(m);
    }
    if (jury) {
        nlohmann::json jj;
        jj["p_at_1_overall"] = jury->overall;
        jj["p_at_1_by_note_count"] = jury->by_note_count;
        jj["posts_by_count"] = jury->posts_by_count;
        jj["random_baseline"] = jury->random_baseline;
        jj["n_posts"] = jury->n_posts;
        j["jury"] = std::move(jj);
    }
    if (sampling) {
        nlohmann::json sj;
        sj["mae_greedy"] = sampling->mae_greedy;
        sj["mae_probabilistic"] = sampling->mae_probabilistic;
        auto scatter = [](const std::vector<SamplingPoint>& pts) {
            nlohmann::json arr = nlohmann::json::array();
            for (const SamplingPoint& p : pts) arr.push_back({p.observed, p.predicted});
            return arr;
        };
        sj["scatter_greedy"] = scatter(sampling->scatter_greedy);
        sj["scatter_probabilistic"] = scatter(sampling->scatter_probabilistic);
        j["sampling"] = std::move(sj);
    }
    if (calibration) {
        nlohmann::json cj = nlohmann::json::array();
        for (int c = 0; c < kNumClasses; ++c) {
            nlohmann::json bins = nlohmann::json::array();
            for (const ReliabilityBin& b : (*calibration)[c]) {
                bins.push_back({{"mean_predicted", b.mean_predicted},
                                {"empirical", b.empirical},
                                {"count", b.count}});
            }
            cj.push_back(std::move(bins));
        }
        j["calibration"] = std::move(cj);
    }
    if (j.is_null()) j = nlohmann::json::object();
    return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
    MetricsReport r;
    if (j.contains("models")) {
        for (const auto& [name, m] : j.at("models").items()) {
            r.models[name] = metrics_from_json(m);
        }
    }
    if (j.contains("jury")) {
        PrecisionAt1 p;
        const auto& jj = j.at("jury");
        jj.at("p_at_1_overall").get_to(p.overall);
        jj.at("p_at_1_by_note_count").get_to(p.by_note_count);
        jj.at("posts_by_count").get_to(p.posts_by_count);
        jj.at("random_baseline").get_to(p.random_baseline);
        jj.at("n_posts").get_to(p.n_posts);
        r.jury = std::move(p);
    }
    if (j.contains("sampling")) {
        SamplingMae s;
        const auto& sj = j.at("sampling");
        sj.at("mae_greedy").get_to(s.mae_greedy);
        sj.at("mae_probabilistic").get_to(s.mae_probabilistic);
        auto scatter = [](const nlohmann::json& arr) {
            std::vector<SamplingPoint> pts;
            for (const auto& p : arr) {
                pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
            }
            return pts;
        };
        s.scatter_greedy = scatter(sj.at("scatter_greedy"));
        s.scatter_probabilistic = scatter(sj.at("scatter_probabilistic"));
        r.sampling = std::move(s);
    }
    if (j.contains("calibration")) {
        std::array<std::vector<ReliabilityBin>, 3> cal;
        for (int c = 0; c < kNumClasses; ++c) {
            for (const auto& b : j.at("calibration").at(c)) {
                ReliabilityBin bin;
                b.at("mean_predicted").get_to(bin.mean_predicted);
                b.at("empirical").get_to(bin.empirical);
                b.at("count").get_to(bin.count);
                cal[c].push_back(bin);
            }
        }
        r.calibration = std::move(cal);
    }
    return r;
}

bool MetricsReport::operator==(const MetricsReport& other) const {
    auto bins_equal = [](const std::array<std::vector<ReliabilityBin>, 3>& a,
                         const std::array<std::vector<ReliabilityBin>, 3>& b) {
        for (int c = 0; c < kNumClasses; ++c) {
            if (a[c].size() != b[c].size()) return false;
            for (std::size_t i = 0; i < a[c].size(); ++i) {
                if (a[c][i].mean_predicted != b[c][i].mean_predicted ||
                    a[c][i].empirical != b[c][i].empirical || a[c][i].count != b[c][i].count) {
                    return false;
                }
            }
        }
        return true;
    };
    if (models != other.models || jury != other.jury || sampling != other.sampling) return false;
    if (calibration.has_value() != other.calibration.has_value()) return false;
    if (calibration && !bins_equal(*calibration, *other.calibration)) return false;
    return true;
}

void emit_report(const MetricsReport& metrics, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir)) {
        throw std::runtime_error("cannot create report directory: " + out_dir);
    }

    {
        std::ofstream out(fs::path(out_dir) / "metrics.json");
        if (!out) throw std::runtime_error("cannot write metrics.json in " + out_dir);
        out << metrics.to_json().dump(2) << '\n';
    }
    {
        std::ofstream out(fs::path(out_dir) / "fig3a.csv");
        out << "model,precision,recall,f1,auc_helpful_vs_rest,auc_macro_ovr\n";
        out.precision(17);
        for (const auto& [name, m] : metrics.models) {
            out << name << ',' << m.precision << ',' << m.recall << ',' << m.f1 << ',';
            if (m.auc_helpful_vs_rest) out << *m.auc_helpful_vs_rest;
            out << ',';
            if (m.auc_macro_ovr) out << *m.auc_macro_ovr;
            out << '\n';
        }
    }
    {
        std::ofstream out(fs::path(out_dir) / "fig3b.csv");
        out << "stratum,p_at_1,n_posts,random_baseline\n";
        out.precision(17);
        if (metrics.jury) {
            out << "all," << metrics.jury->overall << ',' << metrics.jury->n_posts << ','
                << metrics.jury->random_baseline << '\n';
            for (const auto& [stratum, p] : metrics.jury->by_note_count) {
                out << stratum << ',' << p << ',' << metrics.jury->posts_by_count.at(stratum)
                    << ",\n";
            }
        }
    }
    auto write_scatter = [&](const char* file, const std::vector<SamplingPoint>& pts) {
        std::ofstream out(fs::path(out_dir) / file);
        out << "observed,predicted\n";
        out.precision(17);
        for (const SamplingPoint& p : pts) out << p.observed << ',' << p.predicted << '\n';
    };
    write_scatter("fig7_greedy.csv",
                  metrics.sampling ? metrics.sampling->scatter_greedy
                                   : std::vector<SamplingPoint>{});
    write_scatter("fig7_prob.csv",
                  metrics.sampling ? metrics.sampling->scatter_probabilistic
                                   : std::vector<SamplingPoint>{});
    {
        std::ofstream out(fs::path(out_dir) / "fig8_reliability.csv");
        out << "class,bin,mean_predicted,empirical,count\n";
        out.precision(17);
        if (metrics.calibration) {
            const char* class_names[3] = {"helpful", "somewhat_helpful", "not_helpful"};
            for (int c = 0; c < kNumClasses; ++c) {
                const auto& bins = (*metrics.calibration)[c];
                for (std::size_t b = 0; b < bins.size(); ++b) {
                    out << class_names[c] << ',' << b << ',';
                    if (bins[b].count > 0) {
                        out << bins[b].mean_predicted << ',' << bins[b].empirical;
                    } else {
                        out << ',';
                    }
                    out << ',' << bins[b].count << '\n';
                }
            }
        }
    }
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw std::invalid_argument("spearman: need two aligned series of length >= 2");
    }
    auto midranks = [](const std::vector<double>& v) {
        const std::size_t n = v.size();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&v](std::size_t x, std::size_t y) { return v[x] < v[y]; });
        std::vector<double> rank(n);
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
            const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
            i = j + 1;
        }
        return rank;
    };

    const std::vector<double> ra = midranks(a);
    const std::vector<double> rb = midranks(b);
    const double n = static_cast<double>(a.size());
    double mean = (n + 1.0) / 2.0;
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (ra[i] - mean) * (rb[i] - mean);
        var_a += (ra[i] - mean) * (ra[i] - mean);
        var_b += (rb[i] - mean) * (rb[i] - mean);
    }
    if (var_a == 0.0 || var_b == 0.0) return 0.0;
    return cov / std::sqrt(var_a * var_b);
}

}  // namespace supernotes
