#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "insight/core.hpp"
#include "insight/errors.hpp"
#include "insight/stage.hpp"

namespace insight::cap {

struct CategoryDefinition {
    GenerationCategory category;
    std::string definition;
};

CategoryDefinition definition_for(const GenerationCategory& category, const adp::PromptStore& prompts);

/// Result of reading a `SCORE: <n>` marker.
struct ParsedScore {
    double value = 0.0;  // in [0, 1]
    bool clamped = false;
};

/// Finds the first `score` marker (case-insensitive, optional `*` around the
/// colon) followed by a number. Integers are read on a 0-100 scale, reals as
/// unit-interval values; anything outside the scale is clamped and flagged.
/// Returns nullopt when no marker with a number exists.
std::optional<ParsedScore> parse_score(std::string_view text) noexcept;

/// Splits a reasoning response on lines that begin with an integer and a
/// delimiter (`1.`, `2)`, `3:`). Falls back to one step holding the whole
/// trimmed response. Blank input gives no steps.
std::vector<std::string> split_steps(std::string_view response);

/// One reasoning call for (item, category). Text categories send the
/// caption only; image categories attach the image only.
ReasoningTrace reason_category(const NewsItem& item, const GenerationCategory& category,
                               const StageContext& ctx);

/// Quality score for a reasoning path; sees only the trace. Stores s_r.
double elicit_reasoning_score(ReasoningTrace& trace, const StageContext& ctx,
                              const std::string& item_id);

/// Likelihood that `item` comes from the trace's category; never sees the
/// trace text. Stores s_p.
double elicit_category_score(const NewsItem& item, ReasoningTrace& trace, const StageContext& ctx);

/// Product argmax, ties to the earliest category in canonical order.
/// Throws EmptyTraceList / PreconditionError on empty, mixed-modality,
/// duplicate-category or unscored input.
AttributionResult select_attribution(std::span<const ReasoningTrace> traces);

struct CapOptions {
    bool reasoning_score = true;  // ARS
    bool category_score = true;   // PPS
};

/// Full per-modality attribution: reason, score twice, select.
AttributionResult attribute_modality(const NewsItem& item, Modality modality, const StageContext& ctx,
                                     const CapOptions& options = {});

/// Tag prefix shared by every request that concerns `item`.
std::string item_tag(const std::string& item_id, std::string_view stage);

}  // namespace insight::cap
