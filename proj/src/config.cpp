#include "supernotes/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace supernotes {

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["data"] = {{"notes_path", data.notes_path},
                 {"ratings_path", data.ratings_path},
                 {"status_path", data.status_path},
                 {"posts_path", data.posts_path},
                 {"mf_model_path", data.mf_model_path},
                 {"phm_model_path", data.phm_model_path},
                 {"feature_cache_path", data.feature_cache_path}};
    j["ingest"] = {{"timestamp_floor_ms", ingest.timestamp_floor_ms},
                   {"english_only", ingest.english_only}};
    j["split_fractions"] = split_fractions;
    j["mf"] = {{"hyper", mf.hyper}, {"train_on", mf.train_on}};
    j["phm"] = phm;
    j["jury"] = {{"size", jury.size}, {"sampling", jury.sampling}};
    j["generation"] = {{"n_candidates", generation.n_candidates},
                       {"temperature", generation.temperature},
                       {"top_p", generation.top_p},
                       {"max_output_chars", generation.max_output_chars}};
    j["alignment"] = {{"max_chars", alignment.max_chars},
                      {"check_clarity", alignment.check_clarity},
                      {"probe_links", alignment.probe_links}};
    j["pipeline"] = {{"cutoff_hours_after_nth_note", pipeline.cutoff_hours_after_nth_note},
                     {"cutoff_note_index", pipeline.cutoff_note_index},
                     {"post_ids", pipeline.post_ids},
                     {"batch_max_post_chars", pipeline.batch_max_post_chars},
                     {"batch_max_post_age_days", pipeline.batch_max_post_age_days}};
    j["gateway"] = {{"stub", gateway.stub},
                    {"base_url", gateway.base_url},
                    {"api_key_env", gateway.api_key_env},
                    {"chat_model", gateway.chat_model},
                    {"embedding_model", gateway.embedding_model},
                    {"embedding_dim", gateway.embedding_dim},
                    {"retry_attempts", gateway.retry_attempts},
                    {"retry_base_delay_ms", gateway.retry_base_delay_ms},
                    {"retry_max_delay_ms", gateway.retry_max_delay_ms},
                    {"requests_per_minute", gateway.requests_per_minute},
                    {"max_in_flight", gateway.max_in_flight},
                    {"cache_path", gateway.cache_path}};
    j["synth"] = {{"n_raters", synth.n_raters},
                  {"n_notes", synth.n_notes},
                  {"polarization", synth.polarization},
                  {"noise_sigma", synth.noise_sigma},
                  {"mu", synth.mu},
                  {"factor_jitter", synth.factor_jitter},
                  {"rater_intercept_sd", synth.rater_intercept_sd},
                  {"note_intercept_sd", synth.note_intercept_sd},
                  {"density", synth.density}};
    j["eval"] = {{"jury_size", eval.jury_size}, {"calibration_bins", eval.calibration_bins}};
    return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    j.at("seed").get_to(c.seed);
    const auto& d = j.at("data");
    d.at("notes_path").get_to(c.data.notes_path);
    d.at("ratings_path").get_to(c.data.ratings_path);
    d.at("status_path").get_to(c.data.status_path);
    d.at("posts_path").get_to(c.data.posts_path);
    d.at("mf_model_path").get_to(c.data.mf_model_path);
    d.at("phm_model_path").get_to(c.data.phm_model_path);
    d.at("feature_cache_path").get_to(c.data.feature_cache_path);
    j.at("ingest").at("timestamp_floor_ms").get_to(c.ingest.timestamp_floor_ms);
    j.at("ingest").at("english_only").get_to(c.ingest.english_only);
    j.at("split_fractions").get_to(c.split_fractions);
    j.at("mf").at("hyper").get_to(c.mf.hyper);
    j.at("mf").at("train_on").get_to(c.mf.train_on);
    j.at("phm").get_to(c.phm);
    j.at("jury").at("size").get_to(c.jury.size);
    j.at("jury").at("sampling").get_to(c.jury.sampling);
    const auto& g = j.at("generation");
    g.at("n_candidates").get_to(c.generation.n_candidates);
    g.at("temperature").get_to(c.generation.temperature);
    g.at("top_p").get_to(c.generation.top_p);
    g.at("max_output_chars").get_to(c.generation.max_output_chars);
    const auto& a = j.at("alignment");
    a.at("max_chars").get_to(c.alignment.max_chars);
    a.at("check_clarity").get_to(c.alignment.check_clarity);
    a.at("probe_links").get_to(c.alignment.probe_links);
    const auto& p = j.at("pipeline");
    p.at("cutoff_hours_after_nth_note").get_to(c.pipeline.cutoff_hours_after_nth_note);
    p.at("cutoff_note_index").get_to(c.pipeline.cutoff_note_index);
    p.at("post_ids").get_to(c.pipeline.post_ids);
    p.at("batch_max_post_chars").get_to(c.pipeline.batch_max_post_chars);
    p.at("batch_max_post_age_days").get_to(c.pipeline.batch_max_post_age_days);
    const auto& gw = j.at("gateway");
    gw.at("stub").get_to(c.gateway.stub);
    gw.at("base_url").get_to(c.gateway.base_url);
    gw.at("api_key_env").get_to(c.gateway.api_key_env);
    gw.at("chat_model").get_to(c.gateway.chat_model);
    gw.at("embedding_model").get_to(c.gateway.embedding_model);
    gw.at("embedding_dim").get_to(c.gateway.embedding_dim);
    gw.at("retry_attempts").get_to(c.gateway.retry_attempts);
    gw.at("retry_base_delay_ms").get_to(c.gateway.retry_base_delay_ms);
    gw.at("retry_max_delay_ms").get_to(c.gateway.retry_max_delay_ms);
    gw.at("requests_per_minute").get_to(c.gateway.requests_per_minute);
    gw.at("max_in_flight").get_to(c.gateway.max_in_flight);
    gw.at("cache_path").get_to(c.gateway.cache_path);
    const auto& s = j.at("synth");
    s.at("n_raters").get_to(c.synth.n_raters);
    s.at("n_notes").get_to(c.synth.n_notes);
    s.at("polarization").get_to(c.synth.polarization);
    s.at("noise_sigma").get_to(c.synth.noise_sigma);
    s.at("mu").get_to(c.synth.mu);
    s.at("factor_jitter").get_to(c.synth.factor_jitter);
    s.at("rater_intercept_sd").get_to(c.synth.rater_intercept_sd);
    s.at("note_intercept_sd").get_to(c.synth.note_intercept_sd);
    s.at("density").get_to(c.synth.density);
    j.at("eval").at("jury_size").get_to(c.eval.jury_size);
    j.at("eval").at("calibration_bins").get_to(c.eval.calibration_bins);
    return c;
}

IngestConfig RunConfig::ingest_config() const {
    IngestConfig c;
    c.timestamp_floor_ms = ingest.timestamp_floor_ms;
    c.english_only = ingest.english_only;
    c.posts_path = data.posts_path;
    return c;
}

GatewayConfig RunConfig::gateway_config() const {
    GatewayConfig c;
    c.chat_model = gateway.chat_model;
    c.embedding_model = gateway.embedding_model;
    c.embedding_dim = gateway.embedding_dim;
    c.temperature = generation.temperature;
    c.top_p = generation.top_p;
    c.retry.max_attempts = gateway.retry_attempts;
    c.retry.base_delay_ms = gateway.retry_base_delay_ms;
    c.retry.max_delay_ms = gateway.retry_max_delay_ms;
    c.requests_per_minute = gateway.requests_per_minute;
    c.max_in_flight = gateway.max_in_flight;
    c.cache_path = gateway.cache_path;
    return c;
}

PipelineConfig RunConfig::pipeline_config() const {
    PipelineConfig c;
    c.n_candidates = generation.n_candidates;
    c.gen.temperature = generation.temperature;
    c.gen.top_p = generation.top_p;
    c.max_output_chars = generation.max_output_chars;
    c.jury_size = jury.size;
    c.sampling = sampling_kind();
    c.run_seed = seed;
    c.cutoff_hours_after_nth_note = pipeline.cutoff_hours_after_nth_note;
    c.cutoff_note_index = pipeline.cutoff_note_index;
    c.batch_max_post_chars = pipeline.batch_max_post_chars;
    c.batch_max_post_age_days = pipeline.batch_max_post_age_days;
    c.alignment.max_chars = alignment.max_chars;
    c.alignment.check_clarity = alignment.check_clarity;
    c.alignment.probe_links = alignment.probe_links;
    return c;
}

SynthWorldConfig RunConfig::synth_config() const {
    SynthWorldConfig c;
    c.n_raters = synth.n_raters;
    c.n_notes = synth.n_notes;
    c.polarization = synth.polarization;
    c.noise_sigma = synth.noise_sigma;
    c.seed = seed;
    c.mu = synth.mu;
    c.factor_jitter = synth.factor_jitter;
    c.rater_intercept_sd = synth.rater_intercept_sd;
    c.note_intercept_sd = synth.note_intercept_sd;
    c.density = synth.density;
    return c;
}

SamplingKind RunConfig::sampling_kind() const {
    if (jury.sampling == "greedy") return SamplingKind::Greedy;
    if (jury.sampling == "probabilistic") return SamplingKind::Probabilistic;
    throw ConfigError("unknown jury.sampling value: " + jury.sampling);
}

namespace {

void check_against_schema(const nlohmann::json& user, const nlohmann::json& schema,
                          const std::string& prefix) {
    for (const auto& [key, value] : user.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!schema.contains(key)) {
            throw ConfigError("unknown config key: " + path);
        }
        const nlohmann::json& expected = schema.at(key);
        if (expected.is_object()) {
            if (!value.is_object()) {
                throw ConfigError("config key " + path + " must be an object");
            }
            check_against_schema(value, expected, path);
        } else if (expected.is_array() && !value.is_array()) {
            throw ConfigError("config key " + path + " must be an array");
        } else if (expected.is_number() && !value.is_number()) {
            throw ConfigError("config key " + path + " must be a number");
        } else if (expected.is_string() && !value.is_string()) {
            throw ConfigError("config key " + path + " must be a string");
        } else if (expected.is_boolean() && !value.is_boolean()) {
            throw ConfigError("config key " + path + " must be a boolean");
        }
    }
}

void merge_into(nlohmann::json& base, const nlohmann::json& overlay) {
    for (const auto& [key, value] : overlay.items()) {
        if (value.is_object() && base.contains(key) && base.at(key).is_object()) {
            merge_into(base.at(key), value);
        } else {
            base[key] = value;
        }
    }
}

nlohmann::json parse_override(const std::string& assignment, const nlohmann::json& schema) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override must look like key=value, got: " + assignment);
    }
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    // Navigate the schema to validate the dotted path and learn the leaf type.
    std::vector<std::string> parts;
    std::stringstream ss(key);
    std::string part;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) throw ConfigError("empty override key in: " + assignment);

    const nlohmann::json* node = &schema;
    for (const std::string& p : parts) {
        if (!node->is_object() || !node->contains(p)) {
            throw ConfigError("unknown config key: " + key);
        }
        node = &node->at(p);
    }

    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;  // bare strings are fine
    if (node->is_string() && !value.is_string()) value = raw;

    // Build the nested single-key object.
    nlohmann::json nested = value;
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
        nlohmann::json wrap;
        wrap[*it] = std::move(nested);
        nested = std::move(wrap);
    }
    return nested;
}

}  // namespace

RunConfig parse_config(const std::string& path, const std::vector<std::string>& overrides) {
    nlohmann::json resolved = RunConfig{}.to_json();
    const nlohmann::json schema = resolved;

    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::stringstream buffer;
        buffer << in.rdbuf();
        const std::string content = buffer.str();
        if (content.find_first_not_of(" \t\r\n") != std::string::npos) {
            nlohmann::json user = nlohmann::json::parse(content, nullptr, false);
            if (user.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
            if (!user.is_object()) throw ConfigError("config file must hold a JSON object");
            check_against_schema(user, schema, "");
            merge_into(resolved, user);
        }
    }

    for (const std::string& assignment : overrides) {
        const nlohmann::json nested = parse_override(assignment, schema);
        check_against_schema(nested, schema, "");
        merge_into(resolved, nested);
    }

    try {
        return RunConfig::from_json(resolved);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config type error: ") + e.what());
    }
}

}  // namespace supernotes
