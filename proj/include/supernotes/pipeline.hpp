#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "supernotes/alignment.hpp"
#include "supernotes/corpus.hpp"
#include "supernotes/gateway.hpp"
#include "supernotes/jury.hpp"
#include "supernotes/mf.hpp"
#include "supernotes/phm.hpp"

namespace supernotes {

struct GenParams {
    double temperature = 0.95;
    double top_p = 0.8;
};

struct CandidateSupernote {
    std::string candidate_id;
    std::string text;
    std::vector<std::string> source_note_ids;  // the prompt's note order
    std::uint64_t generation_seed = 0;
    GenParams gen_params;
};

struct ScoredCandidate {
    CandidateSupernote candidate;
    AlignmentVerdict verdict;
    std::optional<JuryVerdict> jury_verdict;  // present iff verdict.accepted
};

enum class SelectionReason {
    Selected,
    NoEligibleNotes,
    AllRejected,
    BelowThreshold,
    NotBetterThanExisting,
};

std::string_view to_string(SelectionReason r);

struct BestExisting {
    std::string note_id;
    double score = 0.0;
};

struct PipelineReport {
    std::string post_id;
    std::int64_t cutoff = 0;
    std::vector<std::string> eligible_note_ids;
    std::vector<ScoredCandidate> candidates;
    std::optional<BestExisting> best_existing;
    std::optional<CandidateSupernote> selected;
    SelectionReason selection_reason = SelectionReason::NoEligibleNotes;
    int requested_candidates = 0;
    int generation_shortfall = 0;
    std::optional<Jury> jury;

    nlohmann::json to_json() const;
};

struct PipelineConfig {
    int n_candidates = 100;
    GenParams gen;
    int max_output_chars = 0;
    int jury_size = 100;
    SamplingKind sampling = SamplingKind::Probabilistic;
    std::uint64_t run_seed = 0;
    double cutoff_hours_after_nth_note = 1.0;
    int cutoff_note_index = 3;  // cutoff anchors to this-many notes being up
    std::optional<std::int64_t> cutoff_override;
    AlignmentConfig alignment;

    // Optional batch-mode post filters (experiment-selection style, not
    // pipeline preconditions). 0 disables. Age is measured against the newest
    // timestamp in the corpus.
    int batch_max_post_chars = 0;
    int batch_max_post_age_days = 0;
};

// Rating summaries and tag lists see only ratings up to the cutoff.
GenerationContext make_generation_context(const Post& post, const std::vector<Note>& notes,
                                          const Corpus& corpus, std::int64_t cutoff);

std::int64_t default_cutoff(const Corpus& corpus, const std::string& post_id,
                            const PipelineConfig& config);

// Each slot draws a uniformly random non-empty subset of the notes and a
// uniformly random order, renders the prompt, and asks for a completion.
// Failed slots are dropped and counted in *shortfall.
std::vector<CandidateSupernote> generate_candidates(const Post& post,
                                                    const std::vector<Note>& notes,
                                                    const Corpus& corpus, std::int64_t cutoff,
                                                    int n, std::uint64_t seed, Gateway& gateway,
                                                    const PipelineConfig& config,
                                                    int* shortfall);

// Alignment filtering, then one shared jury scores every accepted candidate.
std::vector<ScoredCandidate> score_candidates(const std::vector<CandidateSupernote>& candidates,
                                              const std::vector<Note>& source_notes,
                                              const Eigen::Ref<const Eigen::VectorXd>& post_emb,
                                              Gateway& gateway, const RatingPredictor& phm,
                                              const MfModel& mf_model, std::uint64_t jury_seed,
                                              const PipelineConfig& config, Jury* jury_out);

struct Selection {
    std::optional<CandidateSupernote> selected;
    std::optional<double> score;
    SelectionReason reason = SelectionReason::AllRejected;
};

// Highest-scoring accepted candidate wins only when its score beats the best
// existing note and clears the helpful threshold. Ties break toward shorter
// text, then lexicographic candidate_id.
Selection select_supernote(const std::vector<ScoredCandidate>& scored, double best_existing_score,
                           const MfHyper& hyper);

// Best existing note on the post: fit against observed ratings up to the
// cutoff using the trained rater parameters; unknown raters are skipped.
std::optional<BestExisting> best_existing_note(const Corpus& corpus, const std::string& post_id,
                                               std::int64_t cutoff, const MfModel& mf_model);

PipelineReport run_pipeline(const std::string& post_id, const Corpus& corpus,
                            const MfModel& mf_model, const RatingPredictor& phm, Gateway& gateway,
                            const PipelineConfig& config);

// One report JSON per post plus a summary CSV in out_dir.
void run_batch(const std::vector<std::string>& post_ids, const Corpus& corpus,
               const MfModel& mf_model, const RatingPredictor& phm, Gateway& gateway,
               const PipelineConfig& config, const std::string& out_dir);

}  // namespace supernotes
