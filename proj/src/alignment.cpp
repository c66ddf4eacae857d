#include "supernotes/alignment.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <nlohmann/json.hpp>

namespace supernotes {

namespace {

bool iequals_prefix(const std::string& text, std::size_t pos, std::string_view prefix) {
    if (pos + prefix.size() > text.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(text[pos + i])) != prefix[i]) return false;
    }
    return true;
}

bool url_boundary(unsigned char c) {
    return std::isspace(c) || c == '<' || c == '>' || c == '"' || c == '\'';
}

bool trailing_punct(char c) {
    switch (c) {
        case '.':
        case ',':
        case ';':
        case ':':
        case '!':
        case '?':
        case ')':
        case ']':
        case '}':
            return true;
        default:
            return false;
    }
}

constexpr const char* kCheckNewLink = "new_link";
constexpr const char* kCheckLength = "length";
constexpr const char* kCheckReachable = "link_reachable";
constexpr const char* kPrincipleArgumentative = "argumentative or biased";
constexpr const char* kPrincipleOpinion = "opinion or speculation";
constexpr const char* kPrincipleClarity = "lacking clarity";

std::string_view to_string(CheckState s) {
    switch (s) {
        case CheckState::Pass: return "Pass";
        case CheckState::Fail: return "Fail";
        case CheckState::JudgeError: return "JudgeError";
    }
    return "?";
}

CheckResult judged_check(const std::string& name, const std::string& principle,
                         const std::string& text, Gateway& gateway) {
    CheckResult result{name, CheckState::Pass, ""};
    try {
        if (gateway.judge_principle(text, principle)) {
            result.state = CheckState::Fail;
            result.reason = "judge answered yes to: " + principle;
        }
    } catch (const GatewayError& e) {
        if (e.kind() != GatewayError::Kind::JudgeFailure) throw;
        result.state = CheckState::JudgeError;
        result.reason = e.what();
    }
    return result;
}

}  // namespace

std::string normalize_link(const std::string& url) {
    std::string out = url;
    while (!out.empty() && trailing_punct(out.back())) out.pop_back();
    const std::size_t scheme_end = out.find("://");
    if (scheme_end == std::string::npos) return out;
    std::size_t host_end = out.find_first_of("/?#", scheme_end + 3);
    if (host_end == std::string::npos) host_end = out.size();
    for (std::size_t i = 0; i < host_end; ++i) {
        out[i] = static_cast<char>(std::tolower(static_cast<unsigned char>(out[i])));
    }
    return out;
}

std::vector<LinkSpan> extract_link_spans(const std::string& text) {
    std::vector<LinkSpan> spans;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t start = std::string::npos;
        for (std::size_t i = pos; i < text.size(); ++i) {
            if (iequals_prefix(text, i, "http://") || iequals_prefix(text, i, "https://")) {
                start = i;
                break;
            }
        }
        if (start == std::string::npos) break;

        std::size_t end = start;
        while (end < text.size() && !url_boundary(static_cast<unsigned char>(text[end]))) ++end;
        while (end > start && trailing_punct(text[end - 1])) --end;

        LinkSpan span;
        span.begin = start;
        span.end = end;
        span.normalized = normalize_link(text.substr(start, end - start));
        spans.push_back(std::move(span));
        pos = end > start ? end : start + 1;
    }
    return spans;
}

LinkSet extract_links(const std::string& text) {
    LinkSet set;
    for (const LinkSpan& span : extract_link_spans(text)) set.links.insert(span.normalized);
    return set;
}

std::string strip_links(const std::string& text) {
    std::string out;
    std::size_t pos = 0;
    for (const LinkSpan& span : extract_link_spans(text)) {
        out += text.substr(pos, span.begin - pos);
        pos = span.end;
    }
    out += text.substr(pos);
    return out;
}

std::size_t count_unicode_scalars(std::string_view text) {
    std::size_t count = 0;
    for (unsigned char c : text) {
        if ((c & 0xC0) != 0x80) ++count;  // skip UTF-8 continuation bytes
    }
    return count;
}

std::vector<CheckResult> check_candidate(const std::string& candidate_text,
                                         const std::vector<Note>& source_notes,
                                         const AlignmentConfig& config) {
    if (source_notes.empty()) {
        throw std::invalid_argument("check_candidate: source_notes must be non-empty");
    }

    LinkSet allowed;
    for (const Note& note : source_notes) {
        for (const std::string& link : extract_links(note.text).links) allowed.links.insert(link);
    }

    std::vector<CheckResult> results;

    CheckResult link_check{kCheckNewLink, CheckState::Pass, ""};
    for (const LinkSpan& span : extract_link_spans(candidate_text)) {
        if (!allowed.contains(span.normalized)) {
            link_check.state = CheckState::Fail;
            link_check.reason = "link not present in any source note: " + span.normalized;
            break;
        }
    }
    results.push_back(std::move(link_check));

    const std::size_t chars = count_unicode_scalars(strip_links(candidate_text));
    CheckResult length_check{kCheckLength, CheckState::Pass, ""};
    if (chars > static_cast<std::size_t>(config.max_chars)) {
        length_check.state = CheckState::Fail;
        length_check.reason = std::to_string(chars) + " characters excluding links (limit " +
                              std::to_string(config.max_chars) + ")";
    }
    results.push_back(std::move(length_check));

    if (config.probe_links && config.reachability) {
        CheckResult reach{kCheckReachable, CheckState::Pass, ""};
        for (const LinkSpan& span : extract_link_spans(candidate_text)) {
            if (!config.reachability(span.normalized)) {
                reach.state = CheckState::Fail;
                reach.reason = "unreachable link: " + span.normalized;
                break;
            }
        }
        results.push_back(std::move(reach));
    }

    return results;
}

std::vector<CheckResult> check_principles(const std::string& candidate_text, Gateway& gateway,
                                          const AlignmentConfig& config) {
    std::vector<CheckResult> results;
    results.push_back(
        judged_check("argumentative_or_biased", kPrincipleArgumentative, candidate_text, gateway));
    results.push_back(
        judged_check("opinion_or_speculation", kPrincipleOpinion, candidate_text, gateway));
    if (config.check_clarity) {
        results.push_back(
            judged_check("lacking_clarity", kPrincipleClarity, candidate_text, gateway));
    }
    return results;
}

const CheckResult* AlignmentVerdict::find(const std::string& name) const {
    for (const CheckResult& c : checks) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

nlohmann::json AlignmentVerdict::to_json() const {
    nlohmann::json j;
    j["candidate_id"] = candidate_id;
    j["accepted"] = accepted;
    j["checks"] = nlohmann::json::object();
    for (const CheckResult& c : checks) {
        j["checks"][c.name] = {{"state", std::string(to_string(c.state))}, {"reason", c.reason}};
    }
    return j;
}

std::pair<std::vector<std::size_t>, std::vector<AlignmentVerdict>> filter_candidates(
    const std::vector<CandidateText>& candidates, const std::vector<Note>& source_notes,
    Gateway& gateway, const AlignmentConfig& config) {
    std::vector<std::size_t> accepted;
    std::vector<AlignmentVerdict> verdicts;
    verdicts.reserve(candidates.size());

    for (std::size_t i = 0; i < candidates.size(); ++i) {
        AlignmentVerdict verdict;
        verdict.candidate_id = candidates[i].candidate_id;
        verdict.checks = check_candidate(candidates[i].text, source_notes, config);

        const bool rules_pass = std::all_of(
            verdict.checks.begin(), verdict.checks.end(),
            [](const CheckResult& c) { return c.state == CheckState::Pass; });

        if (rules_pass) {
            // Judged checks are the expensive path; rule failures skip them.
            std::vector<CheckResult> judged = check_principles(candidates[i].text, gateway, config);
            verdict.checks.insert(verdict.checks.end(), judged.begin(), judged.end());
        }

        verdict.accepted = std::all_of(verdict.checks.begin(), verdict.checks.end(),
                                       [](const CheckResult& c) {
                                           return c.state == CheckState::Pass;
                                       }) &&
                           rules_pass;
        if (verdict.accepted) accepted.push_back(i);
        verdicts.push_back(std::move(verdict));
    }

    return {std::move(accepted), std::move(verdicts)};
}

void write_rejection_log(const std::vector<AlignmentVerdict>& verdicts, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write rejection log: " + path);
    for (const AlignmentVerdict& v : verdicts) out << v.to_json().dump() << '\n';
}

}  // namespace supernotes
