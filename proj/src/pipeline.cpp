#include "supernotes/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "supernotes/seeding.hpp"

namespace supernotes {

namespace {

std::string format_candidate_id(const std::string& post_id, int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "c%04d", index);
    return post_id + "-" + buf;
}

nlohmann::json candidate_to_json(const CandidateSupernote& c) {
    nlohmann::json j;
    j["candidate_id"] = c.candidate_id;
    j["text"] = c.text;
    j["source_note_ids"] = c.source_note_ids;
    j["generation_seed"] = c.generation_seed;
    j["gen_params"] = {{"temperature", c.gen_params.temperature}, {"top_p", c.gen_params.top_p}};
    return j;
}

}  // namespace

std::string_view to_string(SelectionReason r) {
    switch (r) {
        case SelectionReason::Selected: return "Selected";
        case SelectionReason::NoEligibleNotes: return "NoEligibleNotes";
        case SelectionReason::AllRejected: return "AllRejected";
        case SelectionReason::BelowThreshold: return "BelowThreshold";
        case SelectionReason::NotBetterThanExisting: return "NotBetterThanExisting";
    }
    return "?";
}

nlohmann::json PipelineReport::to_json() const {
    nlohmann::json j;
    j["post_id"] = post_id;
    j["cutoff"] = cutoff;
    j["eligible_note_ids"] = eligible_note_ids;
    j["requested_candidates"] = requested_candidates;
    j["generation_shortfall"] = generation_shortfall;
    j["selection_reason"] = std::string(to_string(selection_reason));
    if (best_existing) {
        j["best_existing"] = {{"note_id", best_existing->note_id},
                              {"score", best_existing->score}};
    } else {
        j["best_existing"] = nullptr;
    }
    if (selected) {
        j["selected"] = candidate_to_json(*selected);
    } else {
        j["selected"] = nullptr;
    }
    j["candidates"] = nlohmann::json::array();
    for (const ScoredCandidate& sc : candidates) {
        nlohmann::json cj;
        cj["candidate"] = candidate_to_json(sc.candidate);
        cj["verdict"] = sc.verdict.to_json();
        if (sc.jury_verdict && jury) {
            cj["jury_verdict"] = sc.jury_verdict->to_json(*jury);
        } else {
            cj["jury_verdict"] = nullptr;
        }
        j["candidates"].push_back(std::move(cj));
    }
    return j;
}

GenerationContext make_generation_context(const Post& post, const std::vector<Note>& notes,
                                          const Corpus& corpus, std::int64_t cutoff) {
    GenerationContext ctx;
    ctx.post_text = post.text;
    for (const Note& note : notes) {
        NoteContext nc;
        nc.text = note.text;

        int helpful = 0, somewhat = 0, not_helpful = 0;
        std::map<std::string, int> tag_counts;
        for (const Rating* r : corpus.ratings_on_note(note.note_id, cutoff)) {
            switch (r->label) {
                case HelpfulnessLabel::Helpful: ++helpful; break;
                case HelpfulnessLabel::SomewhatHelpful: ++somewhat; break;
                case HelpfulnessLabel::NotHelpful: ++not_helpful; break;
            }
            for (const std::string& tag : r->tags) ++tag_counts[tag];
        }

        std::string summary;
        auto append = [&summary](int n, const char* what) {
            if (n == 0) return;
            if (!summary.empty()) summary += " / ";
            summary += std::to_string(n) + " " + what;
        };
        append(helpful, "helpful");
        append(somewhat, "somewhat helpful");
        append(not_helpful, "not helpful");
        nc.rating_summary = summary;

        std::vector<std::pair<std::string, int>> tags(tag_counts.begin(), tag_counts.end());
        std::sort(tags.begin(), tags.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        for (std::size_t i = 0; i < tags.size() && i < 3; ++i) nc.top_tags.push_back(tags[i].first);

        ctx.notes.push_back(std::move(nc));
    }
    return ctx;
}

std::int64_t default_cutoff(const Corpus& corpus, const std::string& post_id,
                            const PipelineConfig& config) {
    if (config.cutoff_override) return *config.cutoff_override;

    auto it = corpus.notes_by_post.find(post_id);
    if (it == corpus.notes_by_post.end() || it->second.empty()) {
        corpus.post(post_id);  // raises on unknown post
        return 0;
    }
    // notes_by_post is sorted by (created_at, note_id); anchor to the n-th
    // note, or the last one when fewer exist.
    const auto& ids = it->second;
    const std::size_t anchor =
        std::min<std::size_t>(static_cast<std::size_t>(config.cutoff_note_index), ids.size()) - 1;
    const std::int64_t anchor_time = corpus.note(ids[anchor]).created_at;
    return anchor_time +
           static_cast<std::int64_t>(config.cutoff_hours_after_nth_note * 3600.0 * 1000.0);
}

std::vector<CandidateSupernote> generate_candidates(const Post& post,
                                                    const std::vector<Note>& notes,
                                                    const Corpus& corpus, std::int64_t cutoff,
                                                    int n, std::uint64_t seed, Gateway& gateway,
                                                    const PipelineConfig& config,
                                                    int* shortfall) {
    if (notes.empty()) throw std::invalid_argument("generate_candidates: notes must be non-empty");
    if (n < 1) throw std::invalid_argument("generate_candidates: n must be >= 1");

    std::vector<CandidateSupernote> out;
    if (shortfall) *shortfall = 0;

    for (int i = 0; i < n; ++i) {
        const std::uint64_t slot_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
        std::mt19937_64 rng(slot_seed);

        // Independent fair coin per note, rejecting the empty draw, is uniform
        // over non-empty subsets.
        std::vector<std::size_t> subset;
        while (subset.empty()) {
            for (std::size_t k = 0; k < notes.size(); ++k) {
                if (rng() & 1u) subset.push_back(k);
            }
        }
        std::shuffle(subset.begin(), subset.end(), rng);

        std::vector<Note> chosen;
        chosen.reserve(subset.size());
        for (std::size_t k : subset) chosen.push_back(notes[k]);

        ChatRequest req = gateway.default_chat_request();
        req.temperature = config.gen.temperature;
        req.top_p = config.gen.top_p;
        req.max_output_chars = config.max_output_chars;
        req.messages = {{"user", render_generation_prompt(
                                     make_generation_context(post, chosen, corpus, cutoff))}};

        CandidateSupernote candidate;
        candidate.candidate_id = format_candidate_id(post.post_id, i);
        candidate.generation_seed = slot_seed;
        candidate.gen_params = config.gen;
        for (const Note& note : chosen) candidate.source_note_ids.push_back(note.note_id);

        try {
            candidate.text = gateway.chat_complete(req);
        } catch (const GatewayError&) {
            if (shortfall) ++*shortfall;
            continue;
        }
        out.push_back(std::move(candidate));
    }
    return out;
}

std::vector<ScoredCandidate> score_candidates(const std::vector<CandidateSupernote>& candidates,
                                              const std::vector<Note>& source_notes,
                                              const Eigen::Ref<const Eigen::VectorXd>& post_emb,
                                              Gateway& gateway, const RatingPredictor& phm,
                                              const MfModel& mf_model, std::uint64_t jury_seed,
                                              const PipelineConfig& config, Jury* jury_out) {
    if (candidates.empty()) {
        throw std::invalid_argument("score_candidates: candidates must be non-empty");
    }

    std::vector<CandidateText> texts;
    texts.reserve(candidates.size());
    for (const CandidateSupernote& c : candidates) texts.push_back({c.candidate_id, c.text});
    auto [accepted, verdicts] =
        filter_candidates(texts, source_notes, gateway, config.alignment);

    const Jury jury = sample_jury(mf_model, config.jury_size, jury_seed);
    if (jury_out) *jury_out = jury;
    const SamplingStrategy strategy{config.sampling, jury_seed};

    std::vector<ScoredCandidate> scored;
    scored.reserve(candidates.size());
    std::size_t next_accepted = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        ScoredCandidate sc;
        sc.candidate = candidates[i];
        sc.verdict = std::move(verdicts[i]);

        const bool is_accepted =
            next_accepted < accepted.size() && accepted[next_accepted] == i;
        if (is_accepted) ++next_accepted;

        if (is_accepted) {
            try {
                const Eigen::VectorXd note_emb = gateway.embed_text(sc.candidate.text);
                const std::vector<HelpfulnessLabel> labels =
                    simulate_jury_ratings(phm, jury, post_emb, note_emb, strategy);
                sc.jury_verdict = aggregate_score(jury, labels, mf_model.global, mf_model.hyper);
            } catch (const GatewayError& e) {
                sc.verdict.accepted = false;
                sc.verdict.checks.push_back(
                    {"embedding", CheckState::Fail, std::string("embedding failed: ") + e.what()});
                sc.jury_verdict.reset();
            }
        }
        scored.push_back(std::move(sc));
    }
    return scored;
}

Selection select_supernote(const std::vector<ScoredCandidate>& scored, double best_existing_score,
                           const MfHyper& hyper) {
    const ScoredCandidate* best = nullptr;
    for (const ScoredCandidate& sc : scored) {
        if (!sc.verdict.accepted || !sc.jury_verdict) continue;
        if (!best) {
            best = &sc;
            continue;
        }
        const double score = sc.jury_verdict->score;
        const double best_score = best->jury_verdict->score;
        if (score > best_score) {
            best = &sc;
        } else if (score == best_score) {
            const auto len = count_unicode_scalars(sc.candidate.text);
            const auto best_len = count_unicode_scalars(best->candidate.text);
            if (len < best_len ||
                (len == best_len && sc.candidate.candidate_id < best->candidate.candidate_id)) {
                best = &sc;
            }
        }
    }

    Selection result;
    if (!best) {
        result.reason = SelectionReason::AllRejected;
        return result;
    }
    const double score = best->jury_verdict->score;
    result.score = score;
    if (score < hyper.helpful_threshold) {
        result.reason = SelectionReason::BelowThreshold;
        return result;
    }
    if (!(score > best_existing_score)) {
        result.reason = SelectionReason::NotBetterThanExisting;
        return result;
    }
    result.selected = best->candidate;
    result.reason = SelectionReason::Selected;
    return result;
}

std::optional<BestExisting> best_existing_note(const Corpus& corpus, const std::string& post_id,
                                               std::int64_t cutoff, const MfModel& mf_model) {
    std::optional<BestExisting> best;
    auto it = corpus.notes_by_post.find(post_id);
    if (it == corpus.notes_by_post.end()) return best;

    for (const std::string& note_id : it->second) {
        const Note& note = corpus.note(note_id);
        if (note.created_at >= cutoff) continue;

        std::vector<RaterParams> jurors;
        std::vector<double> values;
        for (const Rating* r : corpus.ratings_on_note(note_id, cutoff)) {
            auto rater = mf_model.raters.find(r->rater_id);
            if (rater == mf_model.raters.end()) continue;
            jurors.push_back(rater->second);
            values.push_back(label_value(r->label));
        }
        if (jurors.size() < static_cast<std::size_t>(mf_model.hyper.min_ratings_for_status)) {
            continue;
        }
        const NoteParams fitted = fit_note(jurors, values, mf_model.global, mf_model.hyper);
        if (!best || fitted.intercept > best->score) {
            best = BestExisting{note_id, fitted.intercept};
        }
    }
    return best;
}

PipelineReport run_pipeline(const std::string& post_id, const Corpus& corpus,
                            const MfModel& mf_model, const RatingPredictor& phm, Gateway& gateway,
                            const PipelineConfig& config) {
    PipelineReport report;
    report.post_id = post_id;
    report.requested_candidates = config.n_candidates;
    report.cutoff = default_cutoff(corpus, post_id, config);

    const NoteStatusOracle status_at = make_status_oracle(mf_model);
    const std::vector<Note> eligible = eligible_notes(post_id, corpus, report.cutoff, status_at);
    for (const Note& n : eligible) report.eligible_note_ids.push_back(n.note_id);

    if (eligible.empty()) {
        report.selection_reason = SelectionReason::NoEligibleNotes;
        return report;
    }

    report.best_existing = best_existing_note(corpus, post_id, report.cutoff, mf_model);

    const Post& post = corpus.post(post_id);
    const std::uint64_t gen_seed = derive_seed(config.run_seed, "gen:" + post_id);
    int shortfall = 0;
    const std::vector<CandidateSupernote> candidates =
        generate_candidates(post, eligible, corpus, report.cutoff, config.n_candidates, gen_seed,
                            gateway, config, &shortfall);
    report.generation_shortfall = shortfall;

    if (candidates.empty()) {
        report.selection_reason = SelectionReason::AllRejected;
        return report;
    }

    // Posts may carry no text (the public exports do not include it); an
    // all-zero embedding stands in so scoring stays offline-deterministic.
    Eigen::VectorXd post_emb = Eigen::VectorXd::Zero(gateway.config().embedding_dim);
    if (!post.text.empty()) post_emb = gateway.embed_text(post.text);

    const std::uint64_t jury_seed = derive_seed(config.run_seed, "jury:" + post_id);
    Jury jury;
    report.candidates = score_candidates(candidates, eligible, post_emb, gateway, phm, mf_model,
                                         jury_seed, config, &jury);
    report.jury = std::move(jury);

    const double best_existing_score =
        report.best_existing ? report.best_existing->score
                             : -std::numeric_limits<double>::infinity();
    Selection selection = select_supernote(report.candidates, best_existing_score, mf_model.hyper);
    report.selected = std::move(selection.selected);
    report.selection_reason = selection.reason;
    return report;
}

void run_batch(const std::vector<std::string>& post_ids, const Corpus& corpus,
               const MfModel& mf_model, const RatingPredictor& phm, Gateway& gateway,
               const PipelineConfig& config, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    std::int64_t newest = 0;
    for (const Rating& r : corpus.ratings) newest = std::max(newest, r.created_at);
    for (const auto& [id, note] : corpus.notes) newest = std::max(newest, note.created_at);

    std::ofstream summary(fs::path(out_dir) / "summary.csv");
    summary << "post_id,best_existing_score,supernote_score,reason\n";

    for (const std::string& post_id : post_ids) {
        const Post& post = corpus.post(post_id);
        const bool too_long =
            config.batch_max_post_chars > 0 &&
            count_unicode_scalars(post.text) >
                static_cast<std::size_t>(config.batch_max_post_chars);
        const bool too_old =
            config.batch_max_post_age_days > 0 && post.created_at > 0 &&
            newest - post.created_at >
                static_cast<std::int64_t>(config.batch_max_post_age_days) * 86400000LL;
        if (too_long || too_old) {
            summary << post_id << ",,," << (too_long ? "SkippedPostTooLong" : "SkippedPostTooOld")
                    << '\n';
            continue;
        }

        const PipelineReport report = run_pipeline(post_id, corpus, mf_model, phm, gateway, config);
        std::ofstream out(fs::path(out_dir) / ("report_" + post_id + ".json"));
        out << report.to_json().dump(2) << '\n';

        std::vector<AlignmentVerdict> verdicts;
        for (const ScoredCandidate& sc : report.candidates) verdicts.push_back(sc.verdict);
        write_rejection_log(verdicts,
                            (fs::path(out_dir) / ("rejections_" + post_id + ".jsonl")).string());

        double top_score = -std::numeric_limits<double>::infinity();
        bool any = false;
        for (const ScoredCandidate& sc : report.candidates) {
            if (sc.jury_verdict && sc.jury_verdict->score > top_score) {
                top_score = sc.jury_verdict->score;
                any = true;
            }
        }
        summary << report.post_id << ',';
        if (report.best_existing) summary << report.best_existing->score;
        summary << ',';
        if (any) summary << top_score;
        summary << ',' << to_string(report.selection_reason) << '\n';
    }
}

}  // namespace supernotes
