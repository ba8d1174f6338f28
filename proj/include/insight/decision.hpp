#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>

#include "insight/backend.hpp"
#include "insight/captioning.hpp"
#include "insight/core.hpp"
#include "insight/stage.hpp"

namespace insight::decision {

enum class VerdictFlag {
    LabelRetry,     // first answer unreadable, retry succeeded
    LabelFallback,  // both answers unreadable, deterministic fallback used
    CaptionMissing, // IC ran but returned nothing
    GoldAttribution,
};

std::string_view verdict_flag_name(VerdictFlag flag) noexcept;

struct Verdict {
    std::string item_id;
    VeracityLabel label = VeracityLabel::Real;
    std::optional<AttributionResult> text_attribution;
    std::optional<AttributionResult> image_attribution;
    std::string final_response;
    std::set<VerdictFlag> flags;
};

/// Answer tokens, in the order the answer instruction lists them.
inline constexpr std::string_view kAnswerTokens = "REAL | TVD | VVD | CCD";

/// Decision query: final prompt, caption, image attachment, optional image
/// description, optional attribution clue block and the answer instruction.
backend::ChatRequest build_final_query(const NewsItem& item,
                                       const std::optional<captioning::CaptionText>& caption,
                                       const std::optional<AttributionResult>& text_attr,
                                       const std::optional<AttributionResult>& image_attr,
                                       const StageContext& ctx);

/// Clue block text, or empty when neither attribution is present.
std::string clue_block(const std::optional<AttributionResult>& text_attr,
                       const std::optional<AttributionResult>& image_attr);

/// Case-insensitive, word-bounded scan for REAL/TVD/VVD/CCD or their long
/// forms. The earliest match in reading order wins.
std::optional<VeracityLabel> parse_label(std::string_view text) noexcept;

/// Used when the answer cannot be read twice: the modality with the larger
/// product decides (text -> TVD, image -> VVD, text on ties); Real without
/// attributions.
VeracityLabel fallback_label(const std::optional<AttributionResult>& text_attr,
                             const std::optional<AttributionResult>& image_attr) noexcept;

/// Sends the decision query, retrying once with an answer reminder if the
/// label is unreadable, then falling back deterministically.
Verdict final_verdict(const std::string& item_id, const backend::ChatRequest& request,
                      backend::Backend& backend, std::optional<AttributionResult> text_attr,
                      std::optional<AttributionResult> image_attr);

/// Attribution results with s_r = s_p = 1 for the gold categories; no backend calls.
std::pair<AttributionResult, AttributionResult> inject_gold_attribution(
    const GenerationCategory& text_category, const GenerationCategory& image_category);

/// Single-modality variant used when only part of the gold pair is known.
AttributionResult inject_gold(const GenerationCategory& category);

}  // namespace insight::decision
