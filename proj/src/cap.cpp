#include "insight/cap.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

#include "insight/adp.hpp"

namespace insight::cap {

namespace {

constexpr std::string_view kScoreFormat =
    "Respond with a single line in the format SCORE: <integer 0-100>.";
constexpr std::string_view kScoreRetry =
    "Your previous reply did not contain a readable score. Respond only with SCORE: <integer 0-100>.";

constexpr double kFallbackScore = 0.5;

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool ieq(char a, char b) {
    return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
}

// Parses [-+]?digits[.digits] or [-+]?.digits at `pos`. A trailing '.' not
// followed by a digit is punctuation, not a decimal point.
std::optional<ParsedScore> number_at(std::string_view s, std::size_t pos) {
    std::size_t i = pos;
    bool negative = false;
    if (i < s.size() && (s[i] == '-' || s[i] == '+')) {
        negative = s[i] == '-';
        ++i;
    }
    const std::size_t int_start = i;
    while (i < s.size() && is_digit(s[i])) ++i;
    const std::size_t int_end = i;
    bool is_real = false;
    std::size_t frac_end = i;
    if (i + 1 < s.size() && s[i] == '.' && is_digit(s[i + 1])) {
        is_real = true;
        frac_end = i + 1;
        while (frac_end < s.size() && is_digit(s[frac_end])) ++frac_end;
    }
    if (int_start == int_end && !is_real) return std::nullopt;

    // Very long digit runs saturate; they are out of range either way.
    double magnitude = 0.0;
    for (std::size_t k = int_start; k < int_end; ++k) {
        magnitude = magnitude * 10.0 + (s[k] - '0');
        if (magnitude > 1e9) {
            magnitude = 1e9;
            break;
        }
    }
    if (is_real) {
        double scale = 0.1;
        for (std::size_t k = int_end + 1; k < frac_end; ++k) {
            magnitude += (s[k] - '0') * scale;
            scale *= 0.1;
        }
    }
    const double value = negative ? -magnitude : magnitude;

    ParsedScore out;
    const double lo = 0.0;
    const double hi = is_real ? 1.0 : 100.0;
    double v = value;
    if (v < lo || v > hi) {
        v = std::clamp(v, lo, hi);
        out.clamped = true;
    }
    out.value = is_real ? v : v / 100.0;
    return out;
}

std::string category_block(const CategoryDefinition& def) {
    return "Generation category: " + def.category.name() + "\nDefinition: " + def.definition;
}

ReasoningTrace empty_trace(const GenerationCategory& category) {
    return ReasoningTrace{category, {}, {}, std::nullopt, std::nullopt, {}};
}

// Sends `request`; when no score is readable, retries once with a format
// reminder appended. Returns nullopt when both attempts fail.
std::optional<ParsedScore> ask_score(backend::ChatRequest request, backend::Backend& backend) {
    if (auto s = parse_score(backend.complete(request).text)) return s;
    request.messages.push_back({backend::Role::User, std::string(kScoreRetry), std::nullopt});
    request.tag += ".retry";
    return parse_score(backend.complete(request).text);
}

}  // namespace

CategoryDefinition definition_for(const GenerationCategory& category, const adp::PromptStore& prompts) {
    return {category, prompts.text(adp::definition_id(category))};
}

std::optional<ParsedScore> parse_score(std::string_view text) noexcept {
    constexpr std::string_view marker = "score";
    for (std::size_t start = 0; start + marker.size() <= text.size(); ++start) {
        bool match = true;
        for (std::size_t k = 0; k < marker.size(); ++k) {
            if (!ieq(text[start + k], marker[k])) {
                match = false;
                break;
            }
        }
        if (!match) continue;
        std::size_t i = start + marker.size();
        while (i < text.size() && text[i] == '*') ++i;
        while (i < text.size() && is_space(text[i])) ++i;
        if (i >= text.size() || text[i] != ':') continue;
        ++i;
        while (i < text.size() && (is_space(text[i]) || text[i] == '*')) ++i;
        if (auto n = number_at(text, i)) return n;
    }
    return std::nullopt;
}

std::vector<std::string> split_steps(std::string_view response) {
    const std::string whole = trim(response);
    if (whole.empty()) return {};

    auto starts_step = [](std::string_view line) {
        std::size_t i = 0;
        while (i < line.size() && is_space(line[i])) ++i;
        const std::size_t digits = i;
        while (i < line.size() && is_digit(line[i])) ++i;
        if (i == digits || i >= line.size()) return false;
        return line[i] == '.' || line[i] == ')' || line[i] == ':';
    };

    std::vector<std::string> steps;
    std::string current;
    bool saw_numbered = false;
    std::size_t pos = 0;
    while (pos <= whole.size()) {
        const auto nl = whole.find('\n', pos);
        const std::string_view line =
            std::string_view(whole).substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        if (starts_step(line)) {
            saw_numbered = true;
            if (!trim(current).empty()) steps.push_back(trim(current));
            current = std::string(line);
        } else {
            if (!current.empty()) current.push_back('\n');
            current += line;
        }
        if (nl == std::string::npos) break;
        pos = nl + 1;
    }
    if (!trim(current).empty()) steps.push_back(trim(current));
    if (!saw_numbered) return {whole};
    return steps;
}

std::string item_tag(const std::string& item_id, std::string_view stage) {
    return item_id + "/" + std::string(stage);
}

ReasoningTrace reason_category(const NewsItem& item, const GenerationCategory& category,
                               const StageContext& ctx) {
    const bool text_mode = category.modality() == Modality::Text;
    const auto def = definition_for(category, ctx.prompts);
    auto request = ctx.request(item_tag(item.id(), "cap.reason/" + category.name()));

    std::string body = ctx.prompts.text(text_mode ? adp::ids::kTextReason : adp::ids::kImageReason);
    body += "\n\n" + category_block(def) + "\n\n";
    backend::ChatMessage msg{backend::Role::User, {}, std::nullopt};
    if (text_mode) {
        body += "News caption: " + item.caption();
    } else {
        body += "News image: attached.";
        msg.image = backend::ImageAttachment::from_image(item.image_ptr());
    }
    msg.text = std::move(body);
    request.messages.push_back(std::move(msg));

    ReasoningTrace trace = empty_trace(category);
    trace.raw_response = ctx.backend.complete(request).text;
    trace.steps = split_steps(trace.raw_response);
    if (trace.steps.empty()) {
        trace.steps = {std::string()};
        trace.flags.insert(TraceFlag::EmptyReasoning);
    }
    return trace;
}

double elicit_reasoning_score(ReasoningTrace& trace, const StageContext& ctx, const std::string& item_id) {
    auto request = ctx.request(item_tag(item_id, "cap.score_r/" + trace.category.name()));
    std::string body = ctx.prompts.text(adp::ids::kReasoningScore);
    body += "\n\nGeneration category: " + trace.category.name();
    body += "\nReasoning path:\n" + trace.raw_response;
    body += "\n\n" + std::string(kScoreFormat);
    request.messages.push_back({backend::Role::User, std::move(body), std::nullopt});

    const auto parsed = ask_score(std::move(request), ctx.backend);
    if (!parsed) {
        trace.s_r = kFallbackScore;
        trace.flags.insert(TraceFlag::ParseFallbackR);
    } else {
        trace.s_r = parsed->value;
        if (parsed->clamped) trace.flags.insert(TraceFlag::ClampedR);
    }
    return *trace.s_r;
}

double elicit_category_score(const NewsItem& item, ReasoningTrace& trace, const StageContext& ctx) {
    const bool text_mode = trace.category.modality() == Modality::Text;
    const auto def = definition_for(trace.category, ctx.prompts);
    auto request = ctx.request(item_tag(item.id(), "cap.score_p/" + trace.category.name()));
    std::string body = ctx.prompts.text(adp::ids::kCategoryScore);
    body += "\n\n" + category_block(def) + "\n\n";
    backend::ChatMessage msg{backend::Role::User, {}, std::nullopt};
    if (text_mode) {
        body += "News caption: " + item.caption();
    } else {
        body += "News image: attached.";
        msg.image = backend::ImageAttachment::from_image(item.image_ptr());
    }
    body += "\n\n" + std::string(kScoreFormat);
    msg.text = std::move(body);
    request.messages.push_back(std::move(msg));

    const auto parsed = ask_score(std::move(request), ctx.backend);
    if (!parsed) {
        trace.s_p = kFallbackScore;
        trace.flags.insert(TraceFlag::ParseFallbackP);
    } else {
        trace.s_p = parsed->value;
        if (parsed->clamped) trace.flags.insert(TraceFlag::ClampedP);
    }
    return *trace.s_p;
}

AttributionResult select_attribution(std::span<const ReasoningTrace> traces) {
    if (traces.empty()) throw EmptyTraceList("select_attribution needs at least one trace");
    const Modality modality = traces.front().category.modality();
    std::set<GenerationCategory> seen;
    for (const auto& t : traces) {
        if (t.category.modality() != modality) throw PreconditionError("traces span two modalities");
        if (!t.s_r || !t.s_p) throw PreconditionError("trace " + t.category.name() + " is unscored");
        if (!seen.insert(t.category).second) {
            throw PreconditionError("duplicate trace for " + t.category.name());
        }
    }

    std::vector<ReasoningTrace> ordered(traces.begin(), traces.end());
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
        return a.category.canonical_rank() < b.category.canonical_rank();
    });
    // Strict '>' over canonical order keeps the earliest category on ties.
    std::size_t best = 0;
    for (std::size_t i = 1; i < ordered.size(); ++i) {
        if (ordered[i].product() > ordered[best].product()) best = i;
    }
    AttributionResult out{modality, ordered[best].category, ordered[best].product(), std::move(ordered)};
    return out;
}

AttributionResult attribute_modality(const NewsItem& item, Modality modality, const StageContext& ctx,
                                     const CapOptions& options) {
    std::vector<ReasoningTrace> traces;
    for (const auto& category : categories_for(modality)) {
        ReasoningTrace trace = reason_category(item, category, ctx);
        if (trace.flags.count(TraceFlag::EmptyReasoning)) {
            trace.s_r = kFallbackScore;
            trace.s_p = kFallbackScore;
            trace.flags.insert(TraceFlag::ParseFallbackR);
            trace.flags.insert(TraceFlag::ParseFallbackP);
        } else {
            if (options.reasoning_score) {
                elicit_reasoning_score(trace, ctx, item.id());
            } else {
                trace.s_r = 1.0;
                trace.flags.insert(TraceFlag::ScoreDisabledR);
            }
            if (options.category_score) {
                elicit_category_score(item, trace, ctx);
            } else {
                trace.s_p = 1.0;
                trace.flags.insert(TraceFlag::ScoreDisabledP);
            }
        }
        traces.push_back(std::move(trace));
    }
    return select_attribution(traces);
}

}  // namespace insight::cap
