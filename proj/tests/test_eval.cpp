#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "supernotes/eval.hpp"
#include "supernotes/seeding.hpp"
#include "test_util.hpp"

using namespace supernotes;

namespace {

MfHyper loose_hyper() {
    MfHyper h;
    h.min_ratings_for_status = 2;
    return h;
}

PhmConfig small_dims() {
    PhmConfig c;
    c.post_dim = 4;
    c.note_dim = 4;
    return c;
}

}  // namespace

TEST_CASE("synth_world is deterministic and honors its configuration") {
    SynthWorldConfig cfg;
    cfg.n_raters = 10;
    cfg.n_notes = 6;
    cfg.seed = 42;
    const SynthWorld a = synth_world(cfg);
    const SynthWorld b = synth_world(cfg);
    CHECK(a.true_raters == b.true_raters);
    CHECK(a.true_notes == b.true_notes);
    REQUIRE(a.ratings.size() == b.ratings.size());
    for (std::size_t i = 0; i < a.ratings.size(); ++i) {
        CHECK(a.ratings[i].value == b.ratings[i].value);
    }
    CHECK(a.ratings.size() == 60);
    CHECK(a.generative_probs.size() == a.ratings.size());

    SynthWorldConfig sparse = cfg;
    sparse.density = 0.5;
    const SynthWorld c = synth_world(sparse);
    CHECK(c.ratings.size() < a.ratings.size());
    CHECK_THROWS_AS(synth_world({1, 5}), std::invalid_argument);
}

TEST_CASE("a noiseless flat world quantizes to the global baseline everywhere") {
    SynthWorldConfig cfg;
    cfg.n_raters = 5;
    cfg.n_notes = 5;
    cfg.polarization = 0.0;
    cfg.factor_jitter = 0.0;
    cfg.noise_sigma = 0.0;
    cfg.rater_intercept_sd = 0.0;
    cfg.note_intercept_sd = 0.0;
    cfg.mu = 0.6;
    const SynthWorld world = synth_world(cfg);
    for (const RatingTriple& r : world.ratings) CHECK(r.value == 0.5);  // quantize(0.6)
    for (const auto& p : world.generative_probs) {
        CHECK(p[kClassSomewhat] == 1.0);
    }
}

TEST_CASE("raw rating means respect the law of large numbers") {
    SynthWorldConfig cfg;
    cfg.n_raters = 100;
    cfg.n_notes = 100;
    cfg.polarization = 1.0;
    cfg.factor_jitter = 0.0;
    cfg.rater_intercept_sd = 0.0;
    cfg.note_intercept_sd = 0.0;
    cfg.noise_sigma = 0.1;
    cfg.mu = 0.4;
    cfg.seed = 5;
    const SynthWorld world = synth_world(cfg);
    double mean = 0.0;
    for (double raw : world.raw_values) mean += raw;
    mean /= static_cast<double>(world.raw_values.size());
    // factors contribute +-1 with equal probability; sigma_total ~ 1.
    CHECK(std::abs(mean - 0.4) <= 3.0 / std::sqrt(static_cast<double>(world.raw_values.size())));
}

TEST_CASE("generative label probabilities integrate the quantization regions") {
    const Eigen::Vector3d sharp = generative_label_probs(0.9, 1e-9);
    CHECK(sharp[kClassHelpful] == doctest::Approx(1.0));
    const Eigen::Vector3d low = generative_label_probs(0.05, 1e-9);
    CHECK(low[kClassNotHelpful] == doctest::Approx(1.0));
    const Eigen::Vector3d mid = generative_label_probs(0.5, 0.25);
    CHECK(mid.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(mid[kClassHelpful] == doctest::Approx(mid[kClassNotHelpful]).epsilon(1e-9));
    CHECK(mid[kClassSomewhat] > mid[kClassHelpful]);
}

TEST_CASE("perfect predictions score 1.0 on every classifier metric") {
    std::vector<Eigen::Vector3d> preds;
    std::vector<HelpfulnessLabel> labels;
    for (int i = 0; i < 30; ++i) {
        const int cls = i % 3;
        Eigen::Vector3d p = Eigen::Vector3d::Constant(0.05);
        p[cls] = 0.9;
        preds.push_back(p);
        labels.push_back(label_of(cls));
    }
    const ClassifierMetrics m = classifier_metrics(preds, labels);
    CHECK(m.precision == doctest::Approx(1.0));
    CHECK(m.recall == doctest::Approx(1.0));
    CHECK(m.f1 == doctest::Approx(1.0));
    CHECK(*m.auc_helpful_vs_rest == doctest::Approx(1.0));
    CHECK(*m.auc_macro_ovr == doctest::Approx(1.0));
}

TEST_CASE("the uninformative predictor has AUC one half") {
    std::vector<Eigen::Vector3d> preds(60, Eigen::Vector3d(1.0 / 3, 1.0 / 3, 1.0 / 3));
    std::vector<HelpfulnessLabel> labels;
    for (int i = 0; i < 60; ++i) labels.push_back(label_of(i % 3));
    const ClassifierMetrics m = classifier_metrics(preds, labels);
    for (int c = 0; c < 3; ++c) CHECK(*m.auc_per_class[c] == doctest::Approx(0.5));
    CHECK(*m.auc_macro_ovr == doctest::Approx(0.5));
}

TEST_CASE("an eight-example hand-computed AUC matches the pairwise oracle exactly") {
    // Helpful-vs-rest scores: positives {0.9, 0.8, 0.6, 0.4}, negatives
    // {0.7, 0.5, 0.4, 0.2}. Pairwise wins: 0.9 and 0.8 beat all four (8),
    // 0.6 beats 0.5/0.4/0.2 (3), 0.4 beats 0.2 (1) and ties 0.4 (0.5).
    // AUC = (8 + 3 + 1 + 0.5) / 16 = 0.78125.
    const std::vector<double> scores = {0.9, 0.8, 0.6, 0.4, 0.7, 0.5, 0.4, 0.2};
    const std::vector<bool> positive = {true, true, true, true, false, false, false, false};
    const double expected = 0.78125;
    CHECK(*rank_auc(scores, positive) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(testutil::pairwise_auc(scores, positive) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("midrank AUC equals the brute-force pairwise statistic on random instances") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 5 + rng() % 196;
        std::vector<double> scores(n);
        std::vector<bool> positive(n);
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = static_cast<double>(rng() % 10) / 10.0;  // coarse grid forces ties
            positive[i] = rng() % 2 == 0;
            has_pos |= positive[i];
            has_neg |= !positive[i];
        }
        if (!has_pos || !has_neg) continue;
        CHECK(*rank_auc(scores, positive) ==
              doctest::Approx(testutil::pairwise_auc(scores, positive)).epsilon(1e-12));
    }
}

TEST_CASE("single-class labels leave AUC absent") {
    std::vector<Eigen::Vector3d> preds(10, Eigen::Vector3d(0.8, 0.1, 0.1));
    std::vector<HelpfulnessLabel> labels(10, HelpfulnessLabel::Helpful);
    const ClassifierMetrics m = classifier_metrics(preds, labels);
    CHECK(!m.auc_helpful_vs_rest.has_value());
    CHECK(!m.auc_per_class[kClassSomewhat].has_value());
    CHECK(!m.auc_macro_ovr.has_value());
}

TEST_CASE("the oracle predictor reads the latent slots out of the features") {
    const PhmConfig dims = small_dims();
    const GenerativeOraclePredictor oracle(0.1, 0.0, dims);
    Eigen::VectorXd post = Eigen::VectorXd::Zero(dims.post_dim);
    const NoteParams note{0.5, 0.6};
    const RaterParams rater{1.0, 0.1};
    const Eigen::VectorXd x =
        assemble_features(post, synth_note_embedding(note, dims.note_dim), rater, dims);
    // mean = 0.1 + 0.1 + 0.6 + 1.0*0.5 = 1.3 -> clamps into Helpful.
    const Eigen::Vector3d probs = oracle.predict_proba(x);
    CHECK(probs[kClassHelpful] == 1.0);
}

TEST_CASE("oracle jury precision at 1 is exactly 1 on a noiseless world") {
    SynthWorldConfig cfg;
    cfg.n_raters = 30;
    cfg.n_notes = 30;
    cfg.noise_sigma = 0.0;
    cfg.seed = 19;
    const SynthWorld world = synth_world(cfg);
    const MfHyper hyper = loose_hyper();
    const MfModel model = world_model(world, hyper);
    const PhmConfig dims = small_dims();
    const GenerativeOraclePredictor oracle(world.true_global.mu, 0.0, dims);

    const auto posts = group_world_into_posts(world, dims, hyper);
    REQUIRE(!posts.empty());
    const PrecisionAt1 result = jury_precision_at_1(oracle, model, posts, cfg.n_raters,
                                                    SamplingKind::Probabilistic, 7);
    CHECK(result.overall == 1.0);
    CHECK(result.n_posts == static_cast<int>(posts.size()));
    for (const auto& [stratum, p] : result.by_note_count) CHECK(p == 1.0);
}

TEST_CASE("a uniform predictor matches the random baseline on two-note posts") {
    SynthWorldConfig cfg;
    cfg.n_raters = 10;
    cfg.n_notes = 1000;
    cfg.noise_sigma = 0.0;
    cfg.seed = 23;
    cfg.note_intercept_sd = 0.4;
    const SynthWorld world = synth_world(cfg);
    const MfHyper hyper = loose_hyper();
    const MfModel model = world_model(world, hyper);
    const PhmConfig dims = small_dims();

    const auto posts = group_world_into_posts(world, dims, hyper, {2});
    REQUIRE(posts.size() >= 450);
    const ConstantPredictor uniform = uniform_predictor(dims.input_dim());
    const PrecisionAt1 result =
        jury_precision_at_1(uniform, model, posts, cfg.n_raters, SamplingKind::Probabilistic, 3);
    CHECK(result.random_baseline == doctest::Approx(0.5));
    CHECK(std::abs(result.overall - 0.5) <= 0.05);
}

TEST_CASE("strata are keyed by note count") {
    SynthWorldConfig cfg;
    cfg.n_raters = 8;
    cfg.n_notes = 18;
    cfg.noise_sigma = 0.0;
    cfg.seed = 2;
    const SynthWorld world = synth_world(cfg);
    const MfHyper hyper = loose_hyper();
    const auto posts = group_world_into_posts(world, small_dims(), hyper, {2, 3, 4});
    std::map<std::string, int> counts;
    for (const EvalPost& p : posts) ++counts[p.notes.size() == 2 ? "2"
                                             : p.notes.size() == 3 ? "3"
                                                                   : "4+"];
    const GenerativeOraclePredictor oracle(world.true_global.mu, 0.0, small_dims());
    const PrecisionAt1 result = jury_precision_at_1(oracle, world_model(world, hyper), posts,
                                                    8, SamplingKind::Probabilistic, 1);
    CHECK(result.posts_by_count == counts);
}

TEST_CASE("oracle sampling error vanishes on a noiseless world") {
    SynthWorldConfig cfg;
    cfg.n_raters = 20;
    cfg.n_notes = 12;
    cfg.noise_sigma = 0.0;
    cfg.seed = 29;
    const SynthWorld world = synth_world(cfg);
    const MfHyper hyper = loose_hyper();
    const MfModel model = world_model(world, hyper);
    const PhmConfig dims = small_dims();
    const GenerativeOraclePredictor oracle(world.true_global.mu, 0.0, dims);

    const auto posts = group_world_into_posts(world, dims, hyper);
    const SamplingMae result = sampling_mae(oracle, model, posts, cfg.n_raters, 5);
    CHECK(result.mae_probabilistic <= 0.02);
    CHECK(result.scatter_probabilistic.size() == result.scatter_greedy.size());
}

TEST_CASE("greedy saturation flattens scores under an always-helpful-leaning predictor") {
    SynthWorldConfig cfg;
    cfg.n_raters = 24;
    cfg.n_notes = 12;
    cfg.noise_sigma = 0.2;
    cfg.mu = 0.5;
    cfg.seed = 41;
    const SynthWorld world = synth_world(cfg);
    const MfHyper hyper = loose_hyper();
    const MfModel model = world_model(world, hyper);
    const PhmConfig dims = small_dims();

    // Helpful is always the argmax but carries only 40% of the mass.
    const ConstantPredictor skewed(Eigen::Vector3d(0.4, 0.3, 0.3), dims.input_dim());
    const auto posts = group_world_into_posts(world, dims, hyper);
    const SamplingMae result = sampling_mae(skewed, model, posts, cfg.n_raters, 9);

    double lo = 1e18, hi = -1e18;
    for (const SamplingPoint& p : result.scatter_greedy) {
        lo = std::min(lo, p.predicted);
        hi = std::max(hi, p.predicted);
    }
    CHECK(hi - lo <= 1e-9);  // the flat greedy ceiling band
    CHECK(result.mae_probabilistic < result.mae_greedy);
}

TEST_CASE("mean aggregation is available as a comparator only") {
    CHECK(mean_aggregate({HelpfulnessLabel::Helpful, HelpfulnessLabel::NotHelpful}) ==
          doctest::Approx(0.5));
    CHECK_THROWS_AS(mean_aggregate({}), std::invalid_argument);
}

TEST_CASE("noiseless refits recover the exact ranking of well-separated intercepts") {
    SynthWorldConfig cfg;
    cfg.n_raters = 40;
    cfg.n_notes = 16;
    cfg.noise_sigma = 0.0;
    cfg.note_intercept_sd = 0.3;
    cfg.seed = 37;
    const SynthWorld world = synth_world(cfg);
    const MfModel model = train_mf(world.ratings, loose_hyper(), 3);

    // Quantization cannot distinguish intercepts closer than its granularity,
    // so the exactness claim applies to notes with pairwise-separated truth.
    std::vector<std::pair<double, std::string>> by_truth;
    for (const auto& [id, params] : world.true_notes) by_truth.emplace_back(params.intercept, id);
    std::sort(by_truth.begin(), by_truth.end());
    std::vector<std::string> separated;
    double last = -1e18;
    for (const auto& [intercept, id] : by_truth) {
        if (intercept - last >= 0.12) {
            separated.push_back(id);
            last = intercept;
        }
    }
    REQUIRE(separated.size() >= 5);

    std::vector<double> fitted, truth;
    for (const std::string& id : separated) {
        truth.push_back(world.true_notes.at(id).intercept);
        fitted.push_back(model.notes.at(id).intercept);
    }
    CHECK(spearman(fitted, truth) == doctest::Approx(1.0));
}

TEST_CASE("spearman handles perfect, reversed and tied series") {
    CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
    CHECK(spearman({1, 2, 3, 4}, {40, 30, 20, 10}) == doctest::Approx(-1.0));
    CHECK(spearman({1, 1, 1, 1}, {1, 2, 3, 4}) == doctest::Approx(0.0));
}

TEST_CASE("emit_report writes a parseable empty report") {
    testutil::TempDir dir;
    MetricsReport empty;
    emit_report(empty, dir.path().string());
    const nlohmann::json j = nlohmann::json::parse(testutil::read_file(dir.file("metrics.json")));
    CHECK(j.is_object());
    CHECK(!j.contains("jury"));
    CHECK(!j.contains("sampling"));
    CHECK(testutil::read_file(dir.file("fig3a.csv")).rfind("model,", 0) == 0);
}

TEST_CASE("metrics report round-trips through JSON") {
    MetricsReport report;
    ClassifierMetrics m;
    m.precision = 0.8;
    m.recall = 0.7;
    m.f1 = 0.74;
    m.auc_helpful_vs_rest = 0.85;
    m.auc_macro_ovr = 0.81;
    m.auc_per_class = {std::optional<double>(0.85), std::optional<double>(0.77), std::nullopt};
    report.models["phm"] = m;

    PrecisionAt1 jury;
    jury.overall = 0.7;
    jury.by_note_count = {{"2", 0.76}, {"3", 0.73}, {"4+", 0.49}};
    jury.posts_by_count = {{"2", 100}, {"3", 60}, {"4+", 40}};
    jury.random_baseline = 0.36;
    jury.n_posts = 200;
    report.jury = jury;

    SamplingMae sampling;
    sampling.mae_greedy = 0.16;
    sampling.mae_probabilistic = 0.09;
    sampling.scatter_greedy = {{0.1, 0.6}, {0.5, 0.6}};
    sampling.scatter_probabilistic = {{0.1, 0.12}, {0.5, 0.47}};
    report.sampling = sampling;

    std::array<std::vector<ReliabilityBin>, 3> calibration;
    for (int c = 0; c < 3; ++c) {
        calibration[c].resize(10);
        calibration[c][4] = {0.45, 0.44, 120};
    }
    report.calibration = calibration;

    const MetricsReport parsed = MetricsReport::from_json(report.to_json());
    CHECK(parsed == report);

    testutil::TempDir dir;
    emit_report(report, dir.path().string());
    const MetricsReport reloaded = MetricsReport::from_json(
        nlohmann::json::parse(testutil::read_file(dir.file("metrics.json"))));
    CHECK(reloaded == report);
}

TEST_CASE("emit_report fails loudly on unwritable paths") {
    MetricsReport empty;
    CHECK_THROWS_AS(emit_report(empty, "/proc/definitely/not/writable"), std::runtime_error);
}

TEST_CASE("reliability CSV has exactly n_bins rows per class") {
    MetricsReport report;
    std::array<std::vector<ReliabilityBin>, 3> calibration;
    for (int c = 0; c < 3; ++c) calibration[c].resize(10);
    report.calibration = calibration;
    testutil::TempDir dir;
    emit_report(report, dir.path().string());

    const std::string csv = testutil::read_file(dir.file("fig8_reliability.csv"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 10);
}

TEST_CASE("features_from_world aligns labels with quantized values") {
    SynthWorldConfig cfg;
    cfg.n_raters = 6;
    cfg.n_notes = 4;
    cfg.seed = 3;
    const SynthWorld world = synth_world(cfg);
    const PhmConfig dims = small_dims();
    const PhmDataset data = features_from_world(world, dims);
    REQUIRE(data.size() == static_cast<Eigen::Index>(world.ratings.size()));
    for (std::size_t k = 0; k < world.ratings.size(); ++k) {
        CHECK(label_value(data.labels[k]) == world.ratings[k].value);
        const auto& note = world.true_notes.at(world.ratings[k].note_id);
        CHECK(data.features(dims.post_dim, static_cast<Eigen::Index>(k)) == note.factor);
        CHECK(data.features(dims.post_dim + 1, static_cast<Eigen::Index>(k)) == note.intercept);
    }
}
