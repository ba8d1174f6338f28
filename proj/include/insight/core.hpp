#pragma once

#include <array>
#include <compare>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace insight {

/// Four-way verdict taxonomy. Codes are the on-disk integer labels.
enum class VeracityLabel : int { Real = 0, TVD = 1, VVD = 2, CCD = 3 };

inline constexpr std::array<VeracityLabel, 4> kAllLabels = {
    VeracityLabel::Real, VeracityLabel::TVD, VeracityLabel::VVD, VeracityLabel::CCD};

enum class BinaryLabel : int { Real = 0, Fake = 1 };

constexpr BinaryLabel to_binary(VeracityLabel label) noexcept {
    return label == VeracityLabel::Real ? BinaryLabel::Real : BinaryLabel::Fake;
}

constexpr int label_code(VeracityLabel label) noexcept { return static_cast<int>(label); }
std::optional<VeracityLabel> label_from_code(int code) noexcept;

/// Upper-case answer token: REAL, TVD, VVD or CCD.
std::string_view label_token(VeracityLabel label) noexcept;
std::optional<VeracityLabel> label_from_token(std::string_view token) noexcept;
std::string_view binary_token(BinaryLabel label) noexcept;

enum class Modality : int { Text = 0, Image = 1 };
enum class GenerationKind : int { Largemodel = 0, Smallmodel = 1, Artificiality = 2 };

std::string_view modality_name(Modality m) noexcept;
std::string_view kind_name(GenerationKind k) noexcept;

/// A hypothesised forgery source for one modality. Only the five pairs
/// (Text x {Largemodel, Smallmodel, Artificiality}) and
/// (Image x {Largemodel, Artificiality}) are constructible.
class GenerationCategory {
public:
    /// Throws InvalidCategory for (Image, Smallmodel).
    static GenerationCategory make(Modality modality, GenerationKind kind);
    /// Parses "text/largemodel", "Image/Artificiality", ... (case-insensitive).
    static GenerationCategory parse(std::string_view text);

    Modality modality() const noexcept { return modality_; }
    GenerationKind kind() const noexcept { return kind_; }
    /// "Text/Largemodel" style name, stable across runs.
    std::string name() const;
    /// Position within categories_for(modality()).
    std::size_t canonical_rank() const noexcept;

    auto operator<=>(const GenerationCategory&) const = default;

private:
    GenerationCategory(Modality m, GenerationKind k) : modality_(m), kind_(k) {}
    Modality modality_;
    GenerationKind kind_;
};

/// Canonical (declaration-order) category list for a modality.
std::span<const GenerationCategory> categories_for(Modality modality);

/// Image file reference. Bytes, digest and base64 are loaded once on first
/// use and shared by every copy of the owning NewsItem.
class ImageRef {
public:
    explicit ImageRef(std::filesystem::path path);

    const std::filesystem::path& path() const noexcept { return path_; }
    /// SHA-256 hex of the raw file bytes. Throws IoError if unreadable.
    const std::string& digest() const;
    const std::string& base64() const;
    /// "image/png", "image/jpeg", ...
    const std::string& media_type() const;
    bool readable() const noexcept;

private:
    void load() const;

    std::filesystem::path path_;
    mutable std::once_flag once_;
    mutable std::string digest_;
    mutable std::string base64_;
    mutable std::string media_type_;
    mutable std::string error_;
};

/// Returns the media type for a recognised image header, or nullopt.
std::optional<std::string> sniff_image_format(std::string_view header) noexcept;

struct GoldAttribution {
    std::optional<GenerationCategory> text;
    std::optional<GenerationCategory> image;
};

/// One caption/image pair under test.
class NewsItem {
public:
    /// Throws PreconditionError when the caption is blank after trimming.
    NewsItem(std::string id, std::string caption, std::filesystem::path image_path,
             std::optional<VeracityLabel> gold_label = std::nullopt);

    const std::string& id() const noexcept { return id_; }
    const std::string& caption() const noexcept { return caption_; }
    const ImageRef& image() const noexcept { return *image_; }
    const std::shared_ptr<const ImageRef>& image_ptr() const noexcept { return image_; }
    const std::optional<VeracityLabel>& gold_label() const noexcept { return gold_label_; }

    const GoldAttribution& gold_attribution() const noexcept { return gold_attribution_; }
    const std::optional<std::string>& generation_tag() const noexcept { return generation_tag_; }

    NewsItem& with_gold_attribution(GoldAttribution gold);
    NewsItem& with_generation_tag(std::string tag);

private:
    std::string id_;
    std::string caption_;
    std::shared_ptr<const ImageRef> image_;
    std::optional<VeracityLabel> gold_label_;
    GoldAttribution gold_attribution_;
    std::optional<std::string> generation_tag_;
};

enum class TraceFlag {
    ParseFallbackR,
    ParseFallbackP,
    ClampedR,
    ClampedP,
    EmptyReasoning,
    ScoreDisabledR,
    ScoreDisabledP,
    GoldInjected,
};

std::string_view trace_flag_name(TraceFlag flag) noexcept;

/// One per-category attribution reasoning path with its two scores.
struct ReasoningTrace {
    GenerationCategory category;
    std::string raw_response;
    std::vector<std::string> steps;
    std::optional<double> s_r;
    std::optional<double> s_p;
    std::set<TraceFlag> flags;

    double product() const { return s_r.value_or(0.0) * s_p.value_or(0.0); }
};

/// Product-argmax winner over one modality's traces.
struct AttributionResult {
    Modality modality;
    GenerationCategory selected;
    double selected_product = 0.0;
    std::vector<ReasoningTrace> per_category;
};

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

}  // namespace insight
