#include "supernotes/phm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "supernotes/seeding.hpp"

namespace supernotes {

std::vector<int> PhmConfig::widths() const {
    std::vector<int> w;
    w.push_back(input_dim());
    w.insert(w.end(), hidden_widths.begin(), hidden_widths.end());
    w.push_back(kNumClasses);
    return w;
}

void to_json(nlohmann::json& j, const PhmConfig& c) {
    j = nlohmann::json{{"post_dim", c.post_dim},
                       {"note_dim", c.note_dim},
                       {"hidden_widths", c.hidden_widths},
                       {"learning_rate", c.learning_rate},
                       {"epochs", c.epochs},
                       {"batch_size", c.batch_size},
                       {"adam_beta1", c.adam_beta1},
                       {"adam_beta2", c.adam_beta2},
                       {"adam_eps", c.adam_eps},
                       {"class_weights", c.class_weights}};
}

void from_json(const nlohmann::json& j, PhmConfig& c) {
    j.at("post_dim").get_to(c.post_dim);
    j.at("note_dim").get_to(c.note_dim);
    j.at("hidden_widths").get_to(c.hidden_widths);
    j.at("learning_rate").get_to(c.learning_rate);
    j.at("epochs").get_to(c.epochs);
    j.at("batch_size").get_to(c.batch_size);
    j.at("adam_beta1").get_to(c.adam_beta1);
    j.at("adam_beta2").get_to(c.adam_beta2);
    j.at("adam_eps").get_to(c.adam_eps);
    j.at("class_weights").get_to(c.class_weights);
}

Eigen::VectorXd assemble_features(const Eigen::Ref<const Eigen::VectorXd>& post_emb,
                                  const Eigen::Ref<const Eigen::VectorXd>& note_emb,
                                  const RaterParams& rater, const PhmConfig& config) {
    if (post_emb.size() != config.post_dim) {
        throw std::invalid_argument("post embedding dimension mismatch: got " +
                                    std::to_string(post_emb.size()) + ", expected " +
                                    std::to_string(config.post_dim));
    }
    if (note_emb.size() != config.note_dim) {
        throw std::invalid_argument("note embedding dimension mismatch: got " +
                                    std::to_string(note_emb.size()) + ", expected " +
                                    std::to_string(config.note_dim));
    }
    Eigen::VectorXd x(config.input_dim());
    x.head(config.post_dim) = post_emb;
    x.segment(config.post_dim, config.note_dim) = note_emb;
    x[config.post_dim + config.note_dim] = rater.factor;
    x[config.post_dim + config.note_dim + 1] = rater.intercept;
    return x;
}

Eigen::Vector3d PhmModel::predict_proba(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (x.size() != net_.input_dim()) {
        throw std::invalid_argument("feature vector dimension mismatch: got " +
                                    std::to_string(x.size()) + ", expected " +
                                    std::to_string(net_.input_dim()));
    }
    const Eigen::VectorXd logits = net_.forward(x);
    return softmax(logits);
}

nlohmann::json PhmModel::to_json() const {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["config"] = config_;
    j["layers"] = nlohmann::json::array();
    for (const auto& layer : net_.layers()) {
        nlohmann::json l;
        l["rows"] = layer.w.rows();
        l["cols"] = layer.w.cols();
        std::vector<double> w(layer.w.size());
        Eigen::Map<Eigen::MatrixXd>(w.data(), layer.w.rows(), layer.w.cols()) = layer.w;
        l["w"] = w;
        l["b"] = std::vector<double>(layer.b.data(), layer.b.data() + layer.b.size());
        j["layers"].push_back(std::move(l));
    }
    j["training_meta"] = {{"epochs", meta_.epochs},
                          {"learning_rate", meta_.learning_rate},
                          {"batch_size", meta_.batch_size},
                          {"seed", meta_.seed},
                          {"train_loss", meta_.train_loss},
                          {"val_loss", meta_.val_loss}};
    return j;
}

PhmModel PhmModel::from_json(const nlohmann::json& j) {
    if (j.at("schema_version").get<int>() != 1) {
        throw std::runtime_error("unsupported model schema_version");
    }
    PhmConfig config = j.at("config").get<PhmConfig>();

    std::vector<int> widths;
    for (const auto& l : j.at("layers")) widths.push_back(l.at("cols").get<int>());
    widths.push_back(j.at("layers").back().at("rows").get<int>());
    Mlp<double> net(widths);
    std::size_t li = 0;
    for (const auto& l : j.at("layers")) {
        auto& layer = net.layers()[li++];
        const auto rows = l.at("rows").get<Eigen::Index>();
        const auto cols = l.at("cols").get<Eigen::Index>();
        std::vector<double> w = l.at("w").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(w.size()) != rows * cols) {
            throw std::runtime_error("layer weight size mismatch in model file");
        }
        layer.w = Eigen::Map<Eigen::MatrixXd>(w.data(), rows, cols);
        std::vector<double> b = l.at("b").get<std::vector<double>>();
        layer.b = Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    }

    TrainingMeta meta;
    const auto& m = j.at("training_meta");
    m.at("epochs").get_to(meta.epochs);
    m.at("learning_rate").get_to(meta.learning_rate);
    m.at("batch_size").get_to(meta.batch_size);
    m.at("seed").get_to(meta.seed);
    m.at("train_loss").get_to(meta.train_loss);
    m.at("val_loss").get_to(meta.val_loss);
    return PhmModel(std::move(net), std::move(config), std::move(meta));
}

void PhmModel::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file: " + path);
    out << to_json().dump() << '\n';
}

PhmModel PhmModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read model file: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

namespace {

std::vector<int> class_indices(const std::vector<HelpfulnessLabel>& labels) {
    std::vector<int> y(labels.size());
    std::transform(labels.begin(), labels.end(), y.begin(), class_of);
    return y;
}

struct AdamState {
    std::vector<Mlp<double>::Layer> m;
    std::vector<Mlp<double>::Layer> v;
    long step = 0;

    explicit AdamState(const Mlp<double>& net) {
        for (const auto& layer : net.layers()) {
            m.push_back({Eigen::MatrixXd::Zero(layer.w.rows(), layer.w.cols()),
                         Eigen::VectorXd::Zero(layer.b.size())});
            v.push_back({Eigen::MatrixXd::Zero(layer.w.rows(), layer.w.cols()),
                         Eigen::VectorXd::Zero(layer.b.size())});
        }
    }

    void apply(Mlp<double>& net, const std::vector<Mlp<double>::Layer>& grads,
               const PhmConfig& c) {
        ++step;
        const double b1 = c.adam_beta1;
        const double b2 = c.adam_beta2;
        const double corr1 = 1.0 - std::pow(b1, step);
        const double corr2 = 1.0 - std::pow(b2, step);
        for (std::size_t l = 0; l < grads.size(); ++l) {
            auto& layer = net.layers()[l];
            m[l].w = b1 * m[l].w + (1.0 - b1) * grads[l].w;
            m[l].b = b1 * m[l].b + (1.0 - b1) * grads[l].b;
            v[l].w = b2 * v[l].w.array().matrix() + (1.0 - b2) * grads[l].w.cwiseProduct(grads[l].w);
            v[l].b = b2 * v[l].b + (1.0 - b2) * grads[l].b.cwiseProduct(grads[l].b);
            layer.w -= (c.learning_rate * (m[l].w / corr1).array() /
                        ((v[l].w / corr2).array().sqrt() + c.adam_eps))
                           .matrix();
            layer.b -= (c.learning_rate * (m[l].b / corr1).array() /
                        ((v[l].b / corr2).array().sqrt() + c.adam_eps))
                           .matrix();
        }
    }
};

}  // namespace

PhmModel train_phm(const PhmDataset& train, const PhmDataset& val, const PhmConfig& config,
                   std::uint64_t seed) {
    if (train.size() == 0) throw std::invalid_argument("train_phm: empty training set");
    if (train.features.rows() != config.input_dim()) {
        throw std::invalid_argument("train_phm: feature dimension mismatch");
    }
    std::array<int, kNumClasses> per_class = {0, 0, 0};
    for (HelpfulnessLabel l : train.labels) ++per_class[class_of(l)];
    for (int c = 0; c < kNumClasses; ++c) {
        if (per_class[c] == 0) {
            throw std::invalid_argument("train_phm: training set lacks examples of class " +
                                        std::string(to_string(label_of(c))));
        }
    }

    Mlp<double> net = Mlp<double>::seeded(config.widths(), derive_seed(seed, "init"));
    const Eigen::Vector3d weights(config.class_weights[0], config.class_weights[1],
                                  config.class_weights[2]);
    const std::vector<int> y_train = class_indices(train.labels);
    const std::vector<int> y_val = class_indices(val.labels);

    AdamState adam(net);
    TrainingMeta meta;
    meta.epochs = config.epochs;
    meta.learning_rate = config.learning_rate;
    meta.batch_size = config.batch_size;
    meta.seed = seed;

    const auto n = train.size();
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(epoch) + 1));
        std::shuffle(order.begin(), order.end(), rng);

        for (Eigen::Index start = 0; start < n; start += config.batch_size) {
            const Eigen::Index size = std::min<Eigen::Index>(config.batch_size, n - start);
            Eigen::MatrixXd xb(train.features.rows(), size);
            std::vector<int> yb(size);
            for (Eigen::Index i = 0; i < size; ++i) {
                xb.col(i) = train.features.col(order[start + i]);
                yb[i] = y_train[order[start + i]];
            }
            std::vector<Mlp<double>::Layer> grads;
            const double batch_loss = net.loss_and_gradient(xb, yb, weights, &grads);
            if (!std::isfinite(batch_loss)) {
                std::ostringstream msg;
                msg << "train_phm: non-finite loss at epoch " << epoch << ", batch offset "
                    << start << " (learning_rate=" << config.learning_rate << ")";
                throw std::runtime_error(msg.str());
            }
            adam.apply(net, grads, config);
        }

        meta.train_loss.push_back(net.loss(train.features, y_train, weights));
        if (val.size() > 0) {
            meta.val_loss.push_back(net.loss(val.features, y_val, weights));
        }
    }

    return PhmModel(std::move(net), config, std::move(meta));
}

HelpfulnessLabel sample_label_greedy(const Eigen::Vector3d& probs) {
    // Scan in order of increasing helpfulness so exact ties resolve to the
    // less helpful label.
    int best = kClassNotHelpful;
    if (probs[kClassSomewhat] > probs[best]) best = kClassSomewhat;
    if (probs[kClassHelpful] > probs[best]) best = kClassHelpful;
    return label_of(best);
}

HelpfulnessLabel sample_label_probabilistic(const Eigen::Vector3d& probs, std::mt19937_64& rng) {
    // 53-bit uniform in [0,1); portable given the engine's defined sequence.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    double cum = 0.0;
    for (int c = 0; c < kNumClasses - 1; ++c) {
        cum += probs[c];
        if (u < cum) return label_of(c);
    }
    return label_of(kNumClasses - 1);
}

HelpfulnessLabel sample_label(const Eigen::Vector3d& probs, const SamplingStrategy& strategy,
                              std::mt19937_64* rng) {
    if (strategy.kind == SamplingKind::Greedy) return sample_label_greedy(probs);
    if (!rng) throw std::invalid_argument("probabilistic sampling requires a seeded RNG");
    return sample_label_probabilistic(probs, *rng);
}

std::array<std::vector<ReliabilityBin>, 3> reliability_curve(const RatingPredictor& model,
                                                             const PhmDataset& data,
                                                             int n_bins) {
    if (n_bins < 2) throw std::invalid_argument("reliability_curve: n_bins must be >= 2");
    if (data.size() == 0) throw std::invalid_argument("reliability_curve: empty data");

    struct Acc {
        double sum_pred = 0.0;
        long hits = 0;
        long count = 0;
    };
    std::array<std::vector<Acc>, 3> acc;
    for (auto& a : acc) a.resize(static_cast<std::size_t>(n_bins));

    for (Eigen::Index j = 0; j < data.size(); ++j) {
        const Eigen::Vector3d p = model.predict_proba(data.features.col(j));
        const int truth = class_of(data.labels[j]);
        for (int c = 0; c < kNumClasses; ++c) {
            int bin = static_cast<int>(p[c] * n_bins);
            bin = std::clamp(bin, 0, n_bins - 1);
            auto& a = acc[c][static_cast<std::size_t>(bin)];
            a.sum_pred += p[c];
            a.count += 1;
            if (truth == c) a.hits += 1;
        }
    }

    std::array<std::vector<ReliabilityBin>, 3> out;
    for (int c = 0; c < kNumClasses; ++c) {
        out[c].resize(static_cast<std::size_t>(n_bins));
        for (int b = 0; b < n_bins; ++b) {
            const auto& a = acc[c][static_cast<std::size_t>(b)];
            auto& bin = out[c][static_cast<std::size_t>(b)];
            bin.count = static_cast<int>(a.count);
            if (a.count > 0) {
                bin.mean_predicted = a.sum_pred / static_cast<double>(a.count);
                bin.empirical = static_cast<double>(a.hits) / static_cast<double>(a.count);
            }
        }
    }
    return out;
}

void write_feature_cache(const std::string& path, const std::vector<FeatureRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write feature cache: " + path);
    out.precision(17);
    out << "note_id,rater_id,label,features\n";
    for (const FeatureRow& r : rows) {
        out << r.note_id << ',' << r.rater_id << ',' << to_string(r.label) << ',';
        for (Eigen::Index i = 0; i < r.features.size(); ++i) {
            if (i) out << ' ';
            out << r.features[i];
        }
        out << '\n';
    }
}

std::vector<FeatureRow> read_feature_cache(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read feature cache: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty feature cache: " + path);

    std::vector<FeatureRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        FeatureRow row;
        std::string label, feats;
        if (!std::getline(ss, row.note_id, ',') || !std::getline(ss, row.rater_id, ',') ||
            !std::getline(ss, label, ',') || !std::getline(ss, feats)) {
            throw std::runtime_error("malformed feature cache row: " + line);
        }
        if (label == "Helpful") row.label = HelpfulnessLabel::Helpful;
        else if (label == "SomewhatHelpful") row.label = HelpfulnessLabel::SomewhatHelpful;
        else if (label == "NotHelpful") row.label = HelpfulnessLabel::NotHelpful;
        else throw std::runtime_error("unknown label in feature cache: " + label);

        std::istringstream fs(feats);
        std::vector<double> values;
        double v = 0.0;
        while (fs >> v) values.push_back(v);
        row.features = Eigen::Map<Eigen::VectorXd>(values.data(),
                                                   static_cast<Eigen::Index>(values.size()));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace supernotes
