#include "insight/decision.hpp"

#include <array>
#include <cctype>
#include <iomanip>
#include <sstream>

#include "insight/adp.hpp"
#include "insight/cap.hpp"
#include "insight/errors.hpp"

namespace insight::decision {

namespace {

constexpr std::string_view kLabelRetry =
    "Your previous answer could not be read. Answer with exactly one of: REAL | TVD | VVD | CCD.";

struct LabelPattern {
    std::string_view text;  // lower case
    VeracityLabel label;
};

constexpr std::array<LabelPattern, 9> kPatterns = {{
    {"textual veracity distortion", VeracityLabel::TVD},
    {"visual veracity distortion", VeracityLabel::VVD},
    {"cross-modal consistency distortion", VeracityLabel::CCD},
    {"cross modal consistency distortion", VeracityLabel::CCD},
    {"crossmodal consistency distortion", VeracityLabel::CCD},
    {"real", VeracityLabel::Real},
    {"tvd", VeracityLabel::TVD},
    {"vvd", VeracityLabel::VVD},
    {"ccd", VeracityLabel::CCD},
}};

bool is_word_char(char c) {
    const auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) != 0 || c == '_';
}

std::string score2(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
}

}  // namespace

std::string_view verdict_flag_name(VerdictFlag flag) noexcept {
    switch (flag) {
        case VerdictFlag::LabelRetry: return "label_retry";
        case VerdictFlag::LabelFallback: return "label_fallback";
        case VerdictFlag::CaptionMissing: return "caption_missing";
        case VerdictFlag::GoldAttribution: return "gold_attribution";
    }
    return "unknown";
}

std::string clue_block(const std::optional<AttributionResult>& text_attr,
                       const std::optional<AttributionResult>& image_attr) {
    if (!text_attr && !image_attr) return {};
    std::string out = "Attribution clues:";
    for (const auto* attr : {&text_attr, &image_attr}) {
        if (!*attr) continue;
        const auto& a = **attr;
        out += "\n- ";
        out += a.modality == Modality::Text ? "Caption" : "Image";
        out += ": most likely generation category " + a.selected.name() + " (score " +
               score2(a.selected_product) + ")";
    }
    return out;
}

backend::ChatRequest build_final_query(const NewsItem& item,
                                       const std::optional<captioning::CaptionText>& caption,
                                       const std::optional<AttributionResult>& text_attr,
                                       const std::optional<AttributionResult>& image_attr,
                                       const StageContext& ctx) {
    auto request = ctx.request(cap::item_tag(item.id(), "final"));
    std::string body = ctx.prompts.text(adp::ids::kFinal);
    body += "\n\nNews caption: " + item.caption();
    body += "\nNews image: attached.";
    if (caption && !caption->empty) body += "\n\nImage description: " + caption->text;
    if (const auto clues = clue_block(text_attr, image_attr); !clues.empty()) body += "\n\n" + clues;
    body += "\n\n" + ctx.prompts.text(adp::ids::kAnswerFormat);
    body += "\nAnswer with exactly one of: " + std::string(kAnswerTokens) + ".";
    request.messages.push_back(
        {backend::Role::User, std::move(body), backend::ImageAttachment::from_image(item.image_ptr())});
    return request;
}

std::optional<VeracityLabel> parse_label(std::string_view text) noexcept {
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (i > 0 && is_word_char(text[i - 1])) continue;
        // Patterns are ordered longest-first per label, so the first hit at
        // this position is the longest one.
        for (const auto& p : kPatterns) {
            if (i + p.text.size() > text.size()) continue;
            bool match = true;
            for (std::size_t k = 0; k < p.text.size(); ++k) {
                const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(text[i + k])));
                if (c != p.text[k]) {
                    match = false;
                    break;
                }
            }
            if (!match) continue;
            const std::size_t end = i + p.text.size();
            if (end < text.size() && is_word_char(text[end])) continue;
            return p.label;
        }
    }
    return std::nullopt;
}

VeracityLabel fallback_label(const std::optional<AttributionResult>& text_attr,
                             const std::optional<AttributionResult>& image_attr) noexcept {
    if (text_attr && image_attr) {
        return text_attr->selected_product >= image_attr->selected_product ? VeracityLabel::TVD
                                                                           : VeracityLabel::VVD;
    }
    if (text_attr) return VeracityLabel::TVD;
    if (image_attr) return VeracityLabel::VVD;
    return VeracityLabel::Real;
}

Verdict final_verdict(const std::string& item_id, const backend::ChatRequest& request,
                      backend::Backend& backend, std::optional<AttributionResult> text_attr,
                      std::optional<AttributionResult> image_attr) {
    Verdict v;
    v.item_id = item_id;
    v.final_response = backend.complete(request).text;
    auto label = parse_label(v.final_response);
    if (!label) {
        auto retry = request;
        retry.messages.push_back({backend::Role::User, std::string(kLabelRetry), std::nullopt});
        retry.tag += ".retry";
        v.final_response = backend.complete(retry).text;
        label = parse_label(v.final_response);
        if (label) {
            v.flags.insert(VerdictFlag::LabelRetry);
        } else {
            label = fallback_label(text_attr, image_attr);
            v.flags.insert(VerdictFlag::LabelFallback);
        }
    }
    v.label = *label;
    v.text_attribution = std::move(text_attr);
    v.image_attribution = std::move(image_attr);
    return v;
}

AttributionResult inject_gold(const GenerationCategory& category) {
    ReasoningTrace trace{category, {}, {}, 1.0, 1.0, {TraceFlag::GoldInjected}};
    return AttributionResult{category.modality(), category, 1.0, {std::move(trace)}};
}

std::pair<AttributionResult, AttributionResult> inject_gold_attribution(
    const GenerationCategory& text_category, const GenerationCategory& image_category) {
    if (text_category.modality() != Modality::Text) {
        throw InvalidCategory("gold text attribution " + text_category.name() + " is not a Text category");
    }
    if (image_category.modality() != Modality::Image) {
        throw InvalidCategory("gold image attribution " + image_category.name() + " is not an Image category");
    }
    return {inject_gold(text_category), inject_gold(image_category)};
}

}  // namespace insight::decision
