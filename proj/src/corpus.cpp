#include "supernotes/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "supernotes/tsv.hpp"

namespace supernotes {

namespace {

constexpr const char* kLabelHelpful = "HELPFUL";
constexpr const char* kLabelSomewhat = "SOMEWHAT_HELPFUL";
constexpr const char* kLabelNotHelpful = "NOT_HELPFUL";
constexpr const char* kClassMisleading = "MISINFORMED_OR_POTENTIALLY_MISLEADING";
constexpr const char* kClassNotMisleading = "NOT_MISLEADING";
constexpr const char* kStatusNmr = "NEEDS_MORE_RATINGS";
constexpr const char* kStatusCrh = "CURRENTLY_RATED_HELPFUL";
constexpr const char* kStatusCrnh = "CURRENTLY_RATED_NOT_HELPFUL";

std::optional<std::int64_t> parse_int64(const std::string& s) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::optional<HelpfulnessLabel> parse_label(const std::string& s) {
    if (s == kLabelHelpful) return HelpfulnessLabel::Helpful;
    if (s == kLabelSomewhat) return HelpfulnessLabel::SomewhatHelpful;
    if (s == kLabelNotHelpful) return HelpfulnessLabel::NotHelpful;
    return std::nullopt;
}

std::optional<NoteClassification> parse_classification(const std::string& s) {
    if (s == kClassMisleading) return NoteClassification::Misleading;
    if (s == kClassNotMisleading) return NoteClassification::NotMisleading;
    return std::nullopt;
}

std::optional<NoteStatus> parse_status(const std::string& s) {
    if (s == kStatusNmr) return NoteStatus::NeedsMoreRatings;
    if (s == kStatusCrh) return NoteStatus::CurrentlyRatedHelpful;
    if (s == kStatusCrnh) return NoteStatus::CurrentlyRatedNotHelpful;
    return std::nullopt;
}

void drop(IngestReport* report, const std::string& reason) {
    if (report) ++report->dropped[reason];
}

bool rating_order(const Rating& a, const Rating& b) {
    if (a.created_at != b.created_at) return a.created_at < b.created_at;
    if (a.note_id != b.note_id) return a.note_id < b.note_id;
    return a.rater_id < b.rater_id;
}

}  // namespace

std::string_view to_string(HelpfulnessLabel label) {
    switch (label) {
        case HelpfulnessLabel::NotHelpful: return "NotHelpful";
        case HelpfulnessLabel::SomewhatHelpful: return "SomewhatHelpful";
        case HelpfulnessLabel::Helpful: return "Helpful";
    }
    return "?";
}

std::string_view to_string(NoteClassification c) {
    return c == NoteClassification::Misleading ? "Misleading" : "NotMisleading";
}

std::string_view to_string(NoteStatus s) {
    switch (s) {
        case NoteStatus::NeedsMoreRatings: return "NeedsMoreRatings";
        case NoteStatus::CurrentlyRatedHelpful: return "CurrentlyRatedHelpful";
        case NoteStatus::CurrentlyRatedNotHelpful: return "CurrentlyRatedNotHelpful";
    }
    return "?";
}

std::int64_t IngestReport::total_dropped() const {
    std::int64_t n = 0;
    for (const auto& [reason, count] : dropped) n += count;
    return n;
}

nlohmann::json IngestReport::to_json() const {
    nlohmann::json j;
    j["posts_loaded"] = posts_loaded;
    j["notes_loaded"] = notes_loaded;
    j["ratings_loaded"] = ratings_loaded;
    j["statuses_loaded"] = statuses_loaded;
    j["dropped"] = nlohmann::json::object();
    for (const auto& [reason, count] : dropped) j["dropped"][reason] = count;
    j["total_dropped"] = total_dropped();
    return j;
}

bool ascii_ratio_english(std::string_view text) {
    if (text.empty()) return true;
    std::size_t ascii = 0;
    for (unsigned char c : text) {
        if (c < 128) ++ascii;
    }
    return static_cast<double>(ascii) / static_cast<double>(text.size()) >= 0.9;
}

std::vector<std::string> IngestConfig::default_tag_columns() {
    return {
        "helpfulOther",
        "helpfulInformative",
        "helpfulClear",
        "helpfulEmpathetic",
        "helpfulGoodSources",
        "helpfulUniqueContext",
        "helpfulAddressesClaim",
        "helpfulImportantContext",
        "helpfulUnbiasedLanguage",
        "notHelpfulOther",
        "notHelpfulIncorrect",
        "notHelpfulSourcesMissingOrUnreliable",
        "notHelpfulOpinionSpeculationOrBias",
        "notHelpfulMissingKeyPoints",
        "notHelpfulOutdated",
        "notHelpfulHardToUnderstand",
        "notHelpfulArgumentativeOrBiased",
        "notHelpfulOffTopic",
        "notHelpfulSpamHarassmentOrAbuse",
        "notHelpfulIrrelevantSources",
        "notHelpfulOpinionSpeculation",
        "notHelpfulNoteNotNeeded",
    };
}

void Corpus::finalize() {
    std::sort(ratings.begin(), ratings.end(), rating_order);

    ratings_by_note.clear();
    for (std::size_t i = 0; i < ratings.size(); ++i) {
        ratings_by_note[ratings[i].note_id].push_back(i);
    }

    notes_by_post.clear();
    for (auto& [note_id, note] : notes) {
        note.tags.clear();
        notes_by_post[note.post_id].push_back(note_id);
    }
    for (auto& [post_id, ids] : notes_by_post) {
        std::sort(ids.begin(), ids.end(), [this](const std::string& a, const std::string& b) {
            const Note& na = notes.at(a);
            const Note& nb = notes.at(b);
            if (na.created_at != nb.created_at) return na.created_at < nb.created_at;
            return a < b;
        });
    }

    for (const Rating& r : ratings) {
        auto it = notes.find(r.note_id);
        if (it == notes.end()) continue;
        for (const std::string& tag : r.tags) ++it->second.tags[tag];
    }
}

const Post& Corpus::post(const std::string& post_id) const {
    auto it = posts.find(post_id);
    if (it == posts.end()) throw std::invalid_argument("unknown post_id: " + post_id);
    return it->second;
}

const Note& Corpus::note(const std::string& note_id) const {
    auto it = notes.find(note_id);
    if (it == notes.end()) throw std::invalid_argument("unknown note_id: " + note_id);
    return it->second;
}

std::vector<const Rating*> Corpus::ratings_on_note(const std::string& note_id,
                                                   std::int64_t cutoff) const {
    std::vector<const Rating*> out;
    auto it = ratings_by_note.find(note_id);
    if (it == ratings_by_note.end()) return out;
    for (std::size_t idx : it->second) {
        if (ratings[idx].created_at <= cutoff) out.push_back(&ratings[idx]);
    }
    return out;
}

Corpus load_corpus(const std::string& note_path, const std::string& rating_path,
                   const std::string& status_path, const IngestConfig& config,
                   IngestReport* report) {
    Corpus corpus;
    std::unordered_set<std::string> filtered_notes;

    {
        TsvReader notes(note_path);
        const std::size_t id_col = notes.column(config.note_id_col);
        const std::size_t post_col = notes.column(config.note_post_col);
        const std::size_t created_col = notes.column(config.note_created_col);
        const std::size_t class_col = notes.column(config.note_class_col);
        const std::size_t text_col = notes.column(config.note_text_col);

        std::vector<std::string> row;
        bool malformed = false;
        while (notes.next(row, &malformed)) {
            if (malformed) {
                drop(report, "malformed_note_row");
                continue;
            }
            Note note;
            note.note_id = row[id_col];
            note.post_id = row[post_col];
            auto created = parse_int64(row[created_col]);
            auto classification = parse_classification(row[class_col]);
            if (note.note_id.empty() || note.post_id.empty() || !created || !classification) {
                drop(report, "bad_note_field");
                continue;
            }
            note.created_at = *created;
            note.classification = *classification;
            note.text = row[text_col];
            if (config.english_only && config.language_detector &&
                !config.language_detector(note.text)) {
                drop(report, "non_english_note");
                filtered_notes.insert(note.note_id);
                continue;
            }
            if (!corpus.notes.emplace(note.note_id, note).second) {
                drop(report, "duplicate_note");
                continue;
            }
            if (report) ++report->notes_loaded;
        }
    }

    // Posts are materialized from the notes; an optional posts file adds text.
    for (const auto& [note_id, note] : corpus.notes) {
        auto [it, inserted] = corpus.posts.try_emplace(note.post_id);
        if (inserted) {
            it->second.post_id = note.post_id;
            if (report) ++report->posts_loaded;
        }
    }
    if (!config.posts_path.empty()) {
        TsvReader posts(config.posts_path);
        const std::size_t id_col = posts.column(config.post_id_col);
        const std::size_t created_col = posts.column(config.post_created_col);
        const std::size_t text_col = posts.column(config.post_text_col);
        std::vector<std::string> row;
        bool malformed = false;
        while (posts.next(row, &malformed)) {
            if (malformed) {
                drop(report, "malformed_post_row");
                continue;
            }
            auto it = corpus.posts.find(row[id_col]);
            if (it == corpus.posts.end()) {
                drop(report, "post_without_notes");
                continue;
            }
            auto created = parse_int64(row[created_col]);
            it->second.created_at = created.value_or(0);
            it->second.text = row[text_col];
        }
    }

    {
        TsvReader statuses(status_path);
        const std::size_t note_col = statuses.column(config.status_note_col);
        const std::size_t status_col = statuses.column(config.status_current_col);
        std::vector<std::string> row;
        bool malformed = false;
        while (statuses.next(row, &malformed)) {
            if (malformed) {
                drop(report, "malformed_status_row");
                continue;
            }
            auto it = corpus.notes.find(row[note_col]);
            if (it == corpus.notes.end()) {
                if (filtered_notes.count(row[note_col]) == 0) drop(report, "unknown_note_status");
                continue;
            }
            auto status = parse_status(row[status_col]);
            if (!status) {
                drop(report, "bad_status_field");
                continue;
            }
            it->second.status = *status;
            if (report) ++report->statuses_loaded;
        }
    }

    {
        TsvReader ratings(rating_path);
        const std::size_t note_col = ratings.column(config.rating_note_col);
        const std::size_t rater_col = ratings.column(config.rating_rater_col);
        const std::size_t created_col = ratings.column(config.rating_created_col);
        const std::size_t label_col = ratings.column(config.rating_label_col);
        std::vector<std::pair<std::string, std::size_t>> tag_cols;
        for (const std::string& tag : config.rating_tag_columns) {
            if (ratings.has_column(tag)) tag_cols.emplace_back(tag, ratings.column(tag));
        }

        std::set<std::pair<std::string, std::string>> seen;
        std::vector<std::string> row;
        bool malformed = false;
        while (ratings.next(row, &malformed)) {
            if (malformed) {
                drop(report, "malformed_rating_row");
                continue;
            }
            Rating r;
            r.note_id = row[note_col];
            r.rater_id = row[rater_col];
            auto created = parse_int64(row[created_col]);
            auto label = parse_label(row[label_col]);
            if (r.note_id.empty() || r.rater_id.empty() || !created || !label) {
                drop(report, "bad_rating_field");
                continue;
            }
            r.created_at = *created;
            r.label = *label;
            auto note_it = corpus.notes.find(r.note_id);
            if (note_it == corpus.notes.end()) {
                drop(report, filtered_notes.count(r.note_id) ? "rating_on_filtered_note"
                                                             : "unknown_note_rating");
                continue;
            }
            if (r.created_at < config.timestamp_floor_ms) {
                drop(report, "before_timestamp_floor");
                continue;
            }
            if (r.created_at < note_it->second.created_at) {
                drop(report, "rating_before_note");
                continue;
            }
            if (!seen.emplace(r.rater_id, r.note_id).second) {
                drop(report, "duplicate_rating");
                continue;
            }
            for (const auto& [tag, col] : tag_cols) {
                if (row[col] == "1") r.tags.push_back(tag);
            }
            std::sort(r.tags.begin(), r.tags.end());
            corpus.ratings.push_back(std::move(r));
            if (report) ++report->ratings_loaded;
        }
    }

    corpus.finalize();
    return corpus;
}

void write_corpus(const Corpus& corpus, const std::string& dir, const IngestConfig& config) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    {
        TsvWriter w((fs::path(dir) / "notes.tsv").string(),
                    {config.note_id_col, config.note_post_col, config.note_created_col,
                     config.note_class_col, config.note_text_col});
        for (const auto& [id, note] : corpus.notes) {
            w.write_row({note.note_id, note.post_id, std::to_string(note.created_at),
                         note.classification == NoteClassification::Misleading
                             ? kClassMisleading
                             : kClassNotMisleading,
                         note.text});
        }
    }
    {
        TsvWriter w((fs::path(dir) / "noteStatusHistory.tsv").string(),
                    {config.status_note_col, config.status_current_col});
        for (const auto& [id, note] : corpus.notes) {
            const char* status = kStatusNmr;
            if (note.status == NoteStatus::CurrentlyRatedHelpful) status = kStatusCrh;
            if (note.status == NoteStatus::CurrentlyRatedNotHelpful) status = kStatusCrnh;
            w.write_row({note.note_id, status});
        }
    }
    {
        std::vector<std::string> cols = {config.rating_note_col, config.rating_rater_col,
                                         config.rating_created_col, config.rating_label_col};
        for (const std::string& tag : config.rating_tag_columns) cols.push_back(tag);
        TsvWriter w((fs::path(dir) / "ratings.tsv").string(), cols);
        for (const Rating& r : corpus.ratings) {
            const char* label = kLabelNotHelpful;
            if (r.label == HelpfulnessLabel::Helpful) label = kLabelHelpful;
            if (r.label == HelpfulnessLabel::SomewhatHelpful) label = kLabelSomewhat;
            std::vector<std::string> row = {r.note_id, r.rater_id,
                                            std::to_string(r.created_at), label};
            for (const std::string& tag : config.rating_tag_columns) {
                bool set = std::binary_search(r.tags.begin(), r.tags.end(), tag);
                row.push_back(set ? "1" : "0");
            }
            w.write_row(row);
        }
    }
    {
        TsvWriter w((fs::path(dir) / "posts.tsv").string(),
                    {config.post_id_col, config.post_created_col, config.post_text_col});
        for (const auto& [id, post] : corpus.posts) {
            w.write_row({post.post_id, std::to_string(post.created_at), post.text});
        }
    }
}

DatasetSplit chronological_split(const Corpus& corpus, std::array<double, 3> fractions) {
    for (double f : fractions) {
        if (f <= 0.0) throw std::invalid_argument("split fractions must be positive");
    }
    if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
        throw std::invalid_argument("split fractions must sum to 1");
    }
    const std::size_t n = corpus.ratings.size();
    if (n < 3) {
        throw std::invalid_argument("need at least 3 ratings to form three non-empty splits");
    }

    std::vector<Rating> sorted = corpus.ratings;
    std::sort(sorted.begin(), sorted.end(), rating_order);

    auto cut1 = static_cast<std::size_t>(static_cast<double>(n) * fractions[0]);
    auto cut2 = static_cast<std::size_t>(static_cast<double>(n) * (fractions[0] + fractions[1]));
    cut1 = std::clamp<std::size_t>(cut1, 1, n - 2);
    cut2 = std::clamp<std::size_t>(cut2, cut1 + 1, n - 1);

    DatasetSplit split;
    split.boundary_times = {sorted[cut1].created_at, sorted[cut2].created_at};

    // Earliest interval a note appears in; its ratings in later intervals are
    // discarded so no note spans a boundary.
    std::map<std::string, int> first_interval;
    for (std::size_t i = 0; i < n; ++i) {
        const int interval = i < cut1 ? 0 : (i < cut2 ? 1 : 2);
        auto [it, inserted] = first_interval.try_emplace(sorted[i].note_id, interval);
        if (!inserted) it->second = std::min(it->second, interval);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const int interval = i < cut1 ? 0 : (i < cut2 ? 1 : 2);
        if (first_interval.at(sorted[i].note_id) != interval) continue;
        if (interval == 0) split.train.push_back(sorted[i]);
        if (interval == 1) split.validation.push_back(sorted[i]);
        if (interval == 2) split.test.push_back(sorted[i]);
    }
    return split;
}

std::vector<Note> eligible_notes(const std::string& post_id, const Corpus& corpus,
                                 std::int64_t cutoff, const NoteStatusOracle& status_at) {
    corpus.post(post_id);  // validates existence

    std::vector<Note> candidates;
    auto it = corpus.notes_by_post.find(post_id);
    if (it == corpus.notes_by_post.end()) return candidates;

    for (const std::string& note_id : it->second) {
        const Note& note = corpus.note(note_id);
        if (note.created_at >= cutoff) continue;
        const NoteStatus status = status_at(note, corpus.ratings_on_note(note_id, cutoff));
        if (status == NoteStatus::CurrentlyRatedHelpful) return {};
        if (status != NoteStatus::NeedsMoreRatings) continue;
        if (note.classification != NoteClassification::Misleading) continue;
        candidates.push_back(note);
    }
    return candidates;
}

}  // namespace supernotes
