#pragma once

#include <cstddef>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "supernotes/corpus.hpp"
#include "supernotes/gateway.hpp"

namespace supernotes {

struct LinkSet {
    std::set<std::string> links;  // normalized

    bool contains(const std::string& normalized) const { return links.count(normalized) > 0; }
};

struct LinkSpan {
    std::size_t begin = 0;  // byte offsets into the source text
    std::size_t end = 0;    // past the last URL byte, after trailing-punctuation strip
    std::string normalized;
};

// Maximal-munch http/https URL extraction; scheme and host are lowercased,
// trailing punctuation stripped, path case preserved.
std::vector<LinkSpan> extract_link_spans(const std::string& text);
LinkSet extract_links(const std::string& text);
std::string normalize_link(const std::string& url);

// Text with the URL spans removed (surrounding punctuation stays).
std::string strip_links(const std::string& text);

// Unicode scalar values, the user-visible character count.
std::size_t count_unicode_scalars(std::string_view text);

enum class CheckState { Pass, Fail, JudgeError };

struct CheckResult {
    std::string name;
    CheckState state = CheckState::Pass;
    std::string reason;
};

struct AlignmentConfig {
    int max_chars = 280;
    bool check_clarity = false;  // optional third judged principle
    bool probe_links = false;    // reachability probe, off by default
    std::function<bool(const std::string&)> reachability;  // used when probe_links is set
};

// Offline rule checks: no new links relative to the source notes (exact match
// after normalization, so truncated links fail) and the 280-character limit
// on the link-stripped text.
std::vector<CheckResult> check_candidate(const std::string& candidate_text,
                                         const std::vector<Note>& source_notes,
                                         const AlignmentConfig& config = {});

// Judged principle checks; a pass requires the judge to answer "No".
std::vector<CheckResult> check_principles(const std::string& candidate_text, Gateway& gateway,
                                          const AlignmentConfig& config = {});

struct AlignmentVerdict {
    std::string candidate_id;
    std::vector<CheckResult> checks;
    bool accepted = false;  // true iff every recorded check passed

    const CheckResult* find(const std::string& name) const;
    nlohmann::json to_json() const;
};

struct CandidateText {
    std::string candidate_id;
    std::string text;
};

// Rule checks first; judged checks only on rule-passing candidates. Returns
// the accepted candidate indices (input order preserved) plus one verdict per
// input candidate.
std::pair<std::vector<std::size_t>, std::vector<AlignmentVerdict>> filter_candidates(
    const std::vector<CandidateText>& candidates, const std::vector<Note>& source_notes,
    Gateway& gateway, const AlignmentConfig& config = {});

void write_rejection_log(const std::vector<AlignmentVerdict>& verdicts, const std::string& path);

}  // namespace supernotes
