#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace supernotes {

enum class HelpfulnessLabel { NotHelpful = 0, SomewhatHelpful = 1, Helpful = 2 };

// Numeric rating values used by the consensus scorer.
inline double label_value(HelpfulnessLabel label) {
    switch (label) {
        case HelpfulnessLabel::NotHelpful: return 0.0;
        case HelpfulnessLabel::SomewhatHelpful: return 0.5;
        case HelpfulnessLabel::Helpful: return 1.0;
    }
    return 0.0;
}

enum class NoteClassification { Misleading, NotMisleading };

enum class NoteStatus { NeedsMoreRatings, CurrentlyRatedHelpful, CurrentlyRatedNotHelpful };

std::string_view to_string(HelpfulnessLabel label);
std::string_view to_string(NoteClassification c);
std::string_view to_string(NoteStatus s);

struct Post {
    std::string post_id;
    std::string text;
    std::int64_t created_at = 0;  // epoch milliseconds

    bool operator==(const Post&) const = default;
};

struct Note {
    std::string note_id;
    std::string post_id;
    std::string text;
    std::int64_t created_at = 0;
    NoteClassification classification = NoteClassification::Misleading;
    NoteStatus status = NoteStatus::NeedsMoreRatings;
    std::map<std::string, int> tags;  // tag -> count, aggregated from ratings

    bool operator==(const Note&) const = default;
};

struct Rating {
    std::string rater_id;
    std::string note_id;
    HelpfulnessLabel label = HelpfulnessLabel::NotHelpful;
    std::int64_t created_at = 0;
    std::vector<std::string> tags;  // sorted, unique

    bool operator==(const Rating&) const = default;
};

struct IngestReport {
    std::int64_t posts_loaded = 0;
    std::int64_t notes_loaded = 0;
    std::int64_t ratings_loaded = 0;
    std::int64_t statuses_loaded = 0;
    std::map<std::string, std::int64_t> dropped;  // reason -> count

    std::int64_t total_dropped() const;
    nlohmann::json to_json() const;
};

// True when the text is probably English. Default is a crude ASCII-ratio
// heuristic; a real detector can be injected through IngestConfig.
using LanguageDetector = std::function<bool(std::string_view)>;

bool ascii_ratio_english(std::string_view text);

// Column names and value spellings follow the public Community Notes TSV
// exports; remap here if the export schema drifts.
struct IngestConfig {
    std::string note_id_col = "noteId";
    std::string note_post_col = "tweetId";
    std::string note_created_col = "createdAtMillis";
    std::string note_class_col = "classification";
    std::string note_text_col = "summary";

    std::string rating_note_col = "noteId";
    std::string rating_rater_col = "raterParticipantId";
    std::string rating_created_col = "createdAtMillis";
    std::string rating_label_col = "helpfulnessLevel";

    std::string status_note_col = "noteId";
    std::string status_current_col = "currentStatus";

    std::string post_id_col = "postId";
    std::string post_created_col = "createdAtMillis";
    std::string post_text_col = "text";

    // Boolean tag columns on the ratings file; the fixed tag vocabulary.
    std::vector<std::string> rating_tag_columns = default_tag_columns();

    // Ratings before this timestamp are excluded (system pilot era).
    std::int64_t timestamp_floor_ms = 1672531200000;  // 2023-01-01T00:00Z

    bool english_only = false;
    LanguageDetector language_detector = ascii_ratio_english;

    // Optional TSV supplying post text; posts referenced by notes are always
    // materialized even without it.
    std::string posts_path;

    static std::vector<std::string> default_tag_columns();
};

struct Corpus {
    std::map<std::string, Post> posts;
    std::map<std::string, Note> notes;
    std::vector<Rating> ratings;  // sorted by (created_at, note_id, rater_id)

    // Derived indexes, rebuilt by finalize().
    std::map<std::string, std::vector<std::size_t>> ratings_by_note;
    std::map<std::string, std::vector<std::string>> notes_by_post;

    void finalize();  // sort ratings, rebuild indexes, aggregate note tags

    const Post& post(const std::string& post_id) const;
    const Note& note(const std::string& note_id) const;

    // Ratings on a note with created_at <= cutoff, in canonical order.
    std::vector<const Rating*> ratings_on_note(const std::string& note_id,
                                               std::int64_t cutoff) const;

    bool operator==(const Corpus& other) const {
        return posts == other.posts && notes == other.notes && ratings == other.ratings;
    }
};

Corpus load_corpus(const std::string& note_path, const std::string& rating_path,
                   const std::string& status_path, const IngestConfig& config = {},
                   IngestReport* report = nullptr);

// Normalized TSV dump using the same column conventions load_corpus reads.
void write_corpus(const Corpus& corpus, const std::string& dir,
                  const IngestConfig& config = {});

struct DatasetSplit {
    std::vector<Rating> train;
    std::vector<Rating> validation;
    std::vector<Rating> test;
    std::array<std::int64_t, 2> boundary_times = {0, 0};
};

DatasetSplit chronological_split(const Corpus& corpus,
                                 std::array<double, 3> fractions = {0.8, 0.1, 0.1});

// Computes a note's status from the ratings visible at a cutoff. Bound to the
// trained consensus model by the caller (see mf.hpp / make_status_oracle).
using NoteStatusOracle =
    std::function<NoteStatus(const Note&, const std::vector<const Rating*>&)>;

// Notes on the post that an automated synthesis run may consume: created
// before the cutoff, arguing the post is misleading, and still lacking a
// decisive status. Empty when any of the post's notes already reached
// CurrentlyRatedHelpful by the cutoff.
std::vector<Note> eligible_notes(const std::string& post_id, const Corpus& corpus,
                                 std::int64_t cutoff, const NoteStatusOracle& status_at);

}  // namespace supernotes
