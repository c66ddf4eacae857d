#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "supernotes/corpus.hpp"
#include "supernotes/eval.hpp"
#include "supernotes/gateway.hpp"
#include "supernotes/mf.hpp"
#include "supernotes/phm.hpp"
#include "supernotes/pipeline.hpp"

namespace supernotes {

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct DataConfig {
    std::string notes_path;
    std::string ratings_path;
    std::string status_path;
    std::string posts_path;
    std::string mf_model_path;
    std::string phm_model_path;
    std::string feature_cache_path;  // empty = no training-data cache written
};

struct IngestSettings {
    std::int64_t timestamp_floor_ms = 1672531200000;
    bool english_only = false;
};

struct GatewaySettings {
    bool stub = true;
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key_env = "SUPERNOTES_API_KEY";
    std::string chat_model = "gpt-4o-mini";
    std::string embedding_model = "text-embedding-3-small";
    int embedding_dim = 512;
    int retry_attempts = 3;
    int retry_base_delay_ms = 500;
    int retry_max_delay_ms = 8000;
    int requests_per_minute = 0;
    int max_in_flight = 8;
    std::string cache_path;
};

struct JurySettings {
    int size = 100;
    std::string sampling = "probabilistic";  // or "greedy"
};

struct GenerationSettings {
    int n_candidates = 100;
    double temperature = 0.95;
    double top_p = 0.8;
    int max_output_chars = 0;
};

struct AlignmentSettings {
    int max_chars = 280;
    bool check_clarity = false;
    bool probe_links = false;
};

struct PipelineSettings {
    double cutoff_hours_after_nth_note = 1.0;
    int cutoff_note_index = 3;
    std::vector<std::string> post_ids;
    int batch_max_post_chars = 0;     // 0 = filter off
    int batch_max_post_age_days = 0;  // 0 = filter off
};

struct SynthSettings {
    int n_raters = 50;
    int n_notes = 20;
    double polarization = 1.0;
    double noise_sigma = 0.05;
    double mu = 0.1;
    double factor_jitter = 0.1;
    double rater_intercept_sd = 0.1;
    double note_intercept_sd = 0.3;
    double density = 1.0;
};

struct EvalSettings {
    int jury_size = 25;
    int calibration_bins = 10;
};

struct MfSettings {
    MfHyper hyper;
    std::string train_on = "all";  // or "train_split"
};

struct RunConfig {
    std::uint64_t seed = 1234;
    DataConfig data;
    IngestSettings ingest;
    std::array<double, 3> split_fractions = {0.8, 0.1, 0.1};
    MfSettings mf;
    PhmConfig phm;
    JurySettings jury;
    GenerationSettings generation;
    AlignmentSettings alignment;
    PipelineSettings pipeline;
    GatewaySettings gateway;
    SynthSettings synth;
    EvalSettings eval;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);

    IngestConfig ingest_config() const;
    GatewayConfig gateway_config() const;
    PipelineConfig pipeline_config() const;
    SynthWorldConfig synth_config() const;
    SamplingKind sampling_kind() const;
};

// Layered resolution: built-in defaults <- file <- overrides. Unknown keys
// and type mismatches are fatal, naming the offending dotted key.
RunConfig parse_config(const std::string& path, const std::vector<std::string>& overrides);

}  // namespace supernotes
