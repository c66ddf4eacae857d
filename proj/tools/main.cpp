#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "supernotes/config.hpp"
#include "supernotes/corpus.hpp"
#include "supernotes/eval.hpp"
#include "supernotes/gateway.hpp"
#include "supernotes/jury.hpp"
#include "supernotes/mf.hpp"
#include "supernotes/phm.hpp"
#include "supernotes/pipeline.hpp"
#include "supernotes/seeding.hpp"
#include "supernotes/tsv.hpp"

namespace fs = std::filesystem;
using namespace supernotes;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir = "out";
    std::int64_t seed = -1;
};

RunConfig resolve_config(const CommonArgs& args) {
    RunConfig config = parse_config(args.config_path, args.overrides);
    if (args.seed >= 0) config.seed = static_cast<std::uint64_t>(args.seed);
    return config;
}

void write_snapshot(const RunConfig& config, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "config_snapshot.json");
    out << config.to_json().dump(2) << '\n';
}

Corpus load_from_config(const RunConfig& config, IngestReport* report = nullptr) {
    if (config.data.notes_path.empty() || config.data.ratings_path.empty() ||
        config.data.status_path.empty()) {
        throw ConfigError("data.notes_path, data.ratings_path and data.status_path are required");
    }
    return load_corpus(config.data.notes_path, config.data.ratings_path, config.data.status_path,
                       config.ingest_config(), report);
}

std::unique_ptr<Gateway> make_gateway(const RunConfig& config) {
    std::unique_ptr<Provider> provider;
    if (config.gateway.stub) {
        provider = std::make_unique<StubProvider>(config.gateway.embedding_dim);
    } else {
        HttpProviderConfig http;
        http.base_url = config.gateway.base_url;
        http.api_key_env = config.gateway.api_key_env;
        provider = make_http_provider(http);
    }
    return std::make_unique<Gateway>(std::move(provider), config.gateway_config());
}

void write_ratings_tsv(const std::vector<Rating>& ratings, const std::string& path,
                       const IngestConfig& cfg) {
    std::vector<std::string> cols = {cfg.rating_note_col, cfg.rating_rater_col,
                                     cfg.rating_created_col, cfg.rating_label_col};
    for (const std::string& tag : cfg.rating_tag_columns) cols.push_back(tag);
    TsvWriter w(path, cols);
    for (const Rating& r : ratings) {
        const char* label = "NOT_HELPFUL";
        if (r.label == HelpfulnessLabel::Helpful) label = "HELPFUL";
        if (r.label == HelpfulnessLabel::SomewhatHelpful) label = "SOMEWHAT_HELPFUL";
        std::vector<std::string> row = {r.note_id, r.rater_id, std::to_string(r.created_at),
                                        label};
        for (const std::string& tag : cfg.rating_tag_columns) {
            row.push_back(std::binary_search(r.tags.begin(), r.tags.end(), tag) ? "1" : "0");
        }
        w.write_row(row);
    }
}

void write_loss_csv(const std::string& path, const std::vector<double>& train,
                    const std::vector<double>& val) {
    std::ofstream out(path);
    out.precision(17);
    out << "epoch,train_loss,val_loss\n";
    for (std::size_t i = 0; i < train.size(); ++i) {
        out << i << ',' << train[i] << ',';
        if (i < val.size()) out << val[i];
        out << '\n';
    }
}

// Embedding-backed feature assembly for corpus ratings; raters unknown to the
// model are skipped (they carry no factor information).
PhmDataset build_dataset(const std::vector<Rating>& ratings, const Corpus& corpus,
                         const MfModel& mf_model, Gateway& gateway, const PhmConfig& dims,
                         std::vector<FeatureRow>* cache_rows = nullptr) {
    std::vector<Eigen::VectorXd> columns;
    std::vector<HelpfulnessLabel> labels;
    const Eigen::VectorXd zero_post = Eigen::VectorXd::Zero(dims.post_dim);

    for (const Rating& r : ratings) {
        auto rater = mf_model.raters.find(r.rater_id);
        if (rater == mf_model.raters.end()) continue;
        const Note& note = corpus.note(r.note_id);
        const Post& post = corpus.post(note.post_id);
        const Eigen::VectorXd note_emb =
            note.text.empty() ? Eigen::VectorXd::Zero(dims.note_dim).eval()
                              : gateway.embed_text(note.text);
        const Eigen::VectorXd post_emb =
            post.text.empty() ? zero_post : gateway.embed_text(post.text);
        columns.push_back(assemble_features(post_emb, note_emb, rater->second, dims));
        labels.push_back(r.label);
        if (cache_rows) {
            cache_rows->push_back({r.note_id, r.rater_id, columns.back(), r.label});
        }
    }

    PhmDataset data;
    data.features.resize(dims.input_dim(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t i = 0; i < columns.size(); ++i) {
        data.features.col(static_cast<Eigen::Index>(i)) = columns[i];
    }
    data.labels = std::move(labels);
    return data;
}

int cmd_synth(const RunConfig& config, const std::string& out_dir) {
    const SynthWorld world = synth_world(config.synth_config());
    const std::string corpus_dir = (fs::path(out_dir) / "corpus").string();
    fs::create_directories(corpus_dir);

    const IngestConfig icfg;
    // Note/post assignment follows the same 2-3-4 grouping the evaluation uses.
    std::map<std::string, std::string> post_of;
    {
        const std::vector<int> cycle = {2, 3, 4};
        std::size_t k = 0, cyc = 0;
        int post_index = 0;
        for (const auto& [note_id, params] : world.true_notes) {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "p%04d", post_index);
            post_of[note_id] = buf;
            if (++k == static_cast<std::size_t>(cycle[cyc % cycle.size()])) {
                k = 0;
                ++cyc;
                ++post_index;
            }
        }
    }

    const std::int64_t base_ts = config.ingest.timestamp_floor_ms;
    std::map<std::string, std::int64_t> note_ts;
    {
        TsvWriter notes((fs::path(corpus_dir) / "notes.tsv").string(),
                        {icfg.note_id_col, icfg.note_post_col, icfg.note_created_col,
                         icfg.note_class_col, icfg.note_text_col});
        int i = 0;
        for (const auto& [note_id, params] : world.true_notes) {
            const std::int64_t ts = base_ts + 1000LL * i++;
            note_ts[note_id] = ts;
            notes.write_row({note_id, post_of[note_id], std::to_string(ts),
                             "MISINFORMED_OR_POTENTIALLY_MISLEADING",
                             "synthetic note " + note_id});
        }
    }
    {
        TsvWriter statuses((fs::path(corpus_dir) / "noteStatusHistory.tsv").string(),
                           {icfg.status_note_col, icfg.status_current_col});
        for (const auto& [note_id, params] : world.true_notes) {
            statuses.write_row({note_id, "NEEDS_MORE_RATINGS"});
        }
    }
    {
        std::vector<std::string> cols = {icfg.rating_note_col, icfg.rating_rater_col,
                                         icfg.rating_created_col, icfg.rating_label_col};
        for (const std::string& tag : icfg.rating_tag_columns) cols.push_back(tag);
        TsvWriter ratings((fs::path(corpus_dir) / "ratings.tsv").string(), cols);

        // Note-major emission so each note's ratings occupy a contiguous time
        // block; a chronological split then cuts between notes instead of
        // discarding everything as boundary spillover.
        std::map<std::string, std::vector<const RatingTriple*>> by_note;
        for (const RatingTriple& r : world.ratings) by_note[r.note_id].push_back(&r);
        std::int64_t ts = base_ts + 1000LL * static_cast<std::int64_t>(world.true_notes.size());
        for (const auto& [note_id, rows] : by_note) {
            for (const RatingTriple* r : rows) {
                ts += 60000;
                const char* label = r->value == 1.0 ? "HELPFUL"
                                    : r->value == 0.5 ? "SOMEWHAT_HELPFUL"
                                                      : "NOT_HELPFUL";
                std::vector<std::string> row = {r->note_id, r->rater_id, std::to_string(ts),
                                                label};
                row.insert(row.end(), icfg.rating_tag_columns.size(), "0");
                ratings.write_row(row);
            }
        }
    }
    {
        TsvWriter posts((fs::path(corpus_dir) / "posts.tsv").string(),
                        {icfg.post_id_col, icfg.post_created_col, icfg.post_text_col});
        std::set<std::string> written;
        for (const auto& [note_id, post_id] : post_of) {
            if (!written.insert(post_id).second) continue;
            posts.write_row({post_id, std::to_string(base_ts), "synthetic post " + post_id});
        }
    }

    world_model(world, config.mf.hyper).save((fs::path(out_dir) / "truth.json").string());
    std::cout << "synth world: " << world.true_raters.size() << " raters, "
              << world.true_notes.size() << " notes, " << world.ratings.size() << " ratings -> "
              << corpus_dir << "\n";
    return 0;
}

int cmd_ingest(const RunConfig& config, const std::string& out_dir) {
    IngestReport report;
    const Corpus corpus = load_from_config(config, &report);
    write_corpus(corpus, (fs::path(out_dir) / "corpus").string());
    std::ofstream out(fs::path(out_dir) / "ingest_report.json");
    out << report.to_json().dump(2) << '\n';
    std::cout << "ingested " << report.notes_loaded << " notes, " << report.ratings_loaded
              << " ratings (" << report.total_dropped() << " rows dropped)\n";
    return 0;
}

int cmd_split(const RunConfig& config, const std::string& out_dir) {
    const Corpus corpus = load_from_config(config);
    const DatasetSplit split = chronological_split(corpus, config.split_fractions);
    const IngestConfig icfg = config.ingest_config();
    write_ratings_tsv(split.train, (fs::path(out_dir) / "train_ratings.tsv").string(), icfg);
    write_ratings_tsv(split.validation, (fs::path(out_dir) / "validation_ratings.tsv").string(),
                      icfg);
    write_ratings_tsv(split.test, (fs::path(out_dir) / "test_ratings.tsv").string(), icfg);
    nlohmann::json j;
    j["boundary_times"] = split.boundary_times;
    j["counts"] = {{"train", split.train.size()},
                   {"validation", split.validation.size()},
                   {"test", split.test.size()}};
    std::ofstream out(fs::path(out_dir) / "boundaries.json");
    out << j.dump(2) << '\n';
    std::cout << "split " << corpus.ratings.size() << " ratings into " << split.train.size()
              << "/" << split.validation.size() << "/" << split.test.size() << "\n";
    return 0;
}

int cmd_train_mf(const RunConfig& config, const std::string& out_dir) {
    const Corpus corpus = load_from_config(config);
    std::vector<RatingTriple> triples;
    if (config.mf.train_on == "train_split") {
        triples = to_triples(chronological_split(corpus, config.split_fractions).train);
    } else if (config.mf.train_on == "all") {
        triples = to_triples(corpus.ratings);
    } else {
        throw ConfigError("mf.train_on must be \"all\" or \"train_split\"");
    }

    MfTrainTrace trace;
    const MfModel model = train_mf(triples, config.mf.hyper, derive_seed(config.seed, "mf"),
                                   &trace);
    model.save((fs::path(out_dir) / "mf_model.json").string());
    write_loss_csv((fs::path(out_dir) / "mf_loss.csv").string(), trace.loss_per_epoch, {});
    std::cout << "trained consensus model on " << triples.size() << " ratings ("
              << trace.epochs_run << " epochs, final loss " << trace.final_loss << ")\n";
    return 0;
}

int cmd_train_phm(const RunConfig& config, const std::string& out_dir) {
    if (config.data.mf_model_path.empty()) {
        throw ConfigError("data.mf_model_path is required for train-phm");
    }
    const Corpus corpus = load_from_config(config);
    const MfModel mf_model = MfModel::load(config.data.mf_model_path);
    auto gateway = make_gateway(config);

    const DatasetSplit split = chronological_split(corpus, config.split_fractions);
    std::vector<FeatureRow> cache_rows;
    PhmDataset train = build_dataset(split.train, corpus, mf_model, *gateway, config.phm,
                                     config.data.feature_cache_path.empty() ? nullptr
                                                                            : &cache_rows);
    PhmDataset val = build_dataset(split.validation, corpus, mf_model, *gateway, config.phm);
    if (!config.data.feature_cache_path.empty()) {
        write_feature_cache(config.data.feature_cache_path, cache_rows);
    }

    const PhmModel model = train_phm(train, val, config.phm, derive_seed(config.seed, "phm"));
    model.save((fs::path(out_dir) / "phm_model.json").string());
    write_loss_csv((fs::path(out_dir) / "phm_loss.csv").string(), model.meta().train_loss,
                   model.meta().val_loss);
    std::cout << "trained rating classifier on " << train.size() << " examples ("
              << config.phm.epochs << " epochs)\n";
    return 0;
}

int cmd_calibrate(const RunConfig& config, const std::string& out_dir) {
    if (config.data.mf_model_path.empty() || config.data.phm_model_path.empty()) {
        throw ConfigError("data.mf_model_path and data.phm_model_path are required for calibrate");
    }
    const Corpus corpus = load_from_config(config);
    const MfModel mf_model = MfModel::load(config.data.mf_model_path);
    const PhmModel phm = PhmModel::load(config.data.phm_model_path);
    auto gateway = make_gateway(config);

    const DatasetSplit split = chronological_split(corpus, config.split_fractions);
    const PhmDataset val =
        build_dataset(split.validation, corpus, mf_model, *gateway, phm.config());
    if (val.size() == 0) throw std::runtime_error("no validation examples to calibrate on");

    MetricsReport metrics;
    metrics.calibration = reliability_curve(phm, val, config.eval.calibration_bins);
    emit_report(metrics, out_dir);
    std::cout << "calibration over " << val.size() << " validation examples -> " << out_dir
              << "\n";
    return 0;
}

int cmd_generate(const RunConfig& config, const std::string& out_dir) {
    if (config.pipeline.post_ids.empty()) {
        throw ConfigError("pipeline.post_ids must list at least one post");
    }
    if (config.data.mf_model_path.empty() || config.data.phm_model_path.empty()) {
        throw ConfigError("data.mf_model_path and data.phm_model_path are required for generate");
    }
    const Corpus corpus = load_from_config(config);
    const MfModel mf_model = MfModel::load(config.data.mf_model_path);
    const PhmModel phm = PhmModel::load(config.data.phm_model_path);
    auto gateway = make_gateway(config);

    run_batch(config.pipeline.post_ids, corpus, mf_model, phm, *gateway,
              config.pipeline_config(), out_dir);
    std::cout << "pipeline reports for " << config.pipeline.post_ids.size() << " post(s) -> "
              << out_dir << "\n";
    return 0;
}

int cmd_evaluate(const RunConfig& config, const std::string& out_dir) {
    MetricsReport metrics;

    if (config.data.notes_path.empty()) {
        // Offline synthetic evaluation against the generative oracle.
        const SynthWorld world = synth_world(config.synth_config());
        const PhmConfig dims = config.phm;
        const GenerativeOraclePredictor oracle(world.true_global.mu, config.synth.noise_sigma,
                                               dims);
        const PhmDataset data = features_from_world(world, dims);

        // 80/20 shuffled split for the learned baselines.
        std::vector<Eigen::Index> order(data.size());
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(derive_seed(config.seed, "eval-split"));
        std::shuffle(order.begin(), order.end(), rng);
        const Eigen::Index n_train = data.size() * 8 / 10;
        PhmDataset train, test;
        train.features.resize(dims.input_dim(), n_train);
        test.features.resize(dims.input_dim(), data.size() - n_train);
        for (Eigen::Index i = 0; i < data.size(); ++i) {
            if (i < n_train) {
                train.features.col(i) = data.features.col(order[i]);
                train.labels.push_back(data.labels[order[i]]);
            } else {
                test.features.col(i - n_train) = data.features.col(order[i]);
                test.labels.push_back(data.labels[order[i]]);
            }
        }

        auto predictions = [&test](const RatingPredictor& p) {
            std::vector<Eigen::Vector3d> preds;
            preds.reserve(test.size());
            for (Eigen::Index i = 0; i < test.size(); ++i) {
                preds.push_back(p.predict_proba(test.features.col(i)));
            }
            return preds;
        };

        metrics.models["oracle"] = classifier_metrics(predictions(oracle), test.labels);

        std::array<long, 3> counts = {0, 0, 0};
        for (HelpfulnessLabel l : train.labels) ++counts[class_of(l)];
        Eigen::Vector3d majority = Eigen::Vector3d::Zero();
        majority[static_cast<int>(std::max_element(counts.begin(), counts.end()) -
                                  counts.begin())] = 1.0;
        const ConstantPredictor dummy(majority, dims.input_dim());
        metrics.models["dummy_most_frequent"] = classifier_metrics(predictions(dummy), test.labels);

        PhmConfig logistic_cfg = dims;
        logistic_cfg.hidden_widths.clear();
        logistic_cfg.learning_rate = 1e-2;
        const PhmModel logistic =
            train_phm(train, {}, logistic_cfg, derive_seed(config.seed, "logistic"));
        metrics.models["logistic"] = classifier_metrics(predictions(logistic), test.labels);

        const MfModel model = world_model(world, config.mf.hyper);
        const std::vector<EvalPost> posts = group_world_into_posts(world, dims, config.mf.hyper);
        if (!posts.empty()) {
            metrics.jury = jury_precision_at_1(oracle, model, posts, config.eval.jury_size,
                                               SamplingKind::Probabilistic,
                                               derive_seed(config.seed, "p@1"));
            metrics.sampling = sampling_mae(oracle, model, posts, config.eval.jury_size,
                                            derive_seed(config.seed, "mae"));
        }
        metrics.calibration = reliability_curve(oracle, data, config.eval.calibration_bins);
    } else {
        if (config.data.mf_model_path.empty() || config.data.phm_model_path.empty()) {
            throw ConfigError(
                "data.mf_model_path and data.phm_model_path are required for evaluate");
        }
        const Corpus corpus = load_from_config(config);
        const MfModel mf_model = MfModel::load(config.data.mf_model_path);
        const PhmModel phm = PhmModel::load(config.data.phm_model_path);
        auto gateway = make_gateway(config);

        const DatasetSplit split = chronological_split(corpus, config.split_fractions);
        const PhmDataset test =
            build_dataset(split.test, corpus, mf_model, *gateway, phm.config());
        if (test.size() == 0) throw std::runtime_error("no test examples to evaluate");

        std::vector<Eigen::Vector3d> preds;
        preds.reserve(test.size());
        for (Eigen::Index i = 0; i < test.size(); ++i) {
            preds.push_back(phm.predict_proba(test.features.col(i)));
        }
        metrics.models["phm"] = classifier_metrics(preds, test.labels);
        metrics.calibration = reliability_curve(phm, test, config.eval.calibration_bins);

        // P@1 over test posts whose notes each have enough observed ratings.
        std::map<std::string, std::map<std::string, std::pair<std::vector<RaterParams>,
                                                              std::vector<double>>>>
            by_post;
        for (const Rating& r : split.test) {
            auto rater = mf_model.raters.find(r.rater_id);
            if (rater == mf_model.raters.end()) continue;
            const Note& note = corpus.note(r.note_id);
            auto& [jurors, values] = by_post[note.post_id][r.note_id];
            jurors.push_back(rater->second);
            values.push_back(label_value(r.label));
        }
        std::vector<EvalPost> posts;
        for (const auto& [post_id, notes] : by_post) {
            EvalPost ep;
            ep.post_id = post_id;
            const Post& post = corpus.post(post_id);
            ep.post_emb = post.text.empty()
                              ? Eigen::VectorXd::Zero(phm.config().post_dim).eval()
                              : gateway->embed_text(post.text);
            for (const auto& [note_id, obs] : notes) {
                if (obs.first.size() <
                    static_cast<std::size_t>(mf_model.hyper.min_ratings_for_status)) {
                    continue;
                }
                EvalNote en;
                en.note_id = note_id;
                const Note& note = corpus.note(note_id);
                en.note_emb = note.text.empty()
                                  ? Eigen::VectorXd::Zero(phm.config().note_dim).eval()
                                  : gateway->embed_text(note.text);
                en.truth_score =
                    fit_note(obs.first, obs.second, mf_model.global, mf_model.hyper).intercept;
                ep.notes.push_back(std::move(en));
            }
            if (ep.notes.size() >= 2) posts.push_back(std::move(ep));
        }
        if (!posts.empty()) {
            metrics.jury = jury_precision_at_1(phm, mf_model, posts, config.jury.size,
                                               SamplingKind::Probabilistic,
                                               derive_seed(config.seed, "p@1"));
            metrics.sampling = sampling_mae(phm, mf_model, posts, config.jury.size,
                                            derive_seed(config.seed, "mae"));
        }
    }

    emit_report(metrics, out_dir);
    std::cout << "evaluation report -> " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Consensus-note synthesis pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    const std::vector<std::pair<std::string, int (*)(const RunConfig&, const std::string&)>>
        commands = {{"ingest", cmd_ingest},       {"split", cmd_split},
                    {"train-mf", cmd_train_mf},   {"train-phm", cmd_train_phm},
                    {"calibrate", cmd_calibrate}, {"generate", cmd_generate},
                    {"evaluate", cmd_evaluate},   {"synth", cmd_synth}};

    for (const auto& [name, fn] : commands) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", args.config_path, "JSON config file");
        sub->add_option("--set", args.overrides, "override key=value (repeatable)");
        sub->add_option("--out", args.out_dir, "output directory");
        sub->add_option("--seed", args.seed, "override the run seed");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        const RunConfig config = resolve_config(args);
        for (const auto& [name, fn] : commands) {
            if (app.got_subcommand(name)) {
                write_snapshot(config, args.out_dir);
                return fn(config, args.out_dir);
            }
        }
        std::cerr << "usage_error: no subcommand\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config_error: " << e.what() << "\n";
        return 2;
    } catch (const GatewayError& e) {
        std::cerr << "gateway_error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime_error: " << e.what() << "\n";
        return 1;
    }
}
