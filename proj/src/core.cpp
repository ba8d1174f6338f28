#include "insight/core.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>

#include "insight/digest.hpp"
#include "insight/errors.hpp"

namespace insight {

std::optional<VeracityLabel> label_from_code(int code) noexcept {
    if (code < 0 || code > 3) return std::nullopt;
    return static_cast<VeracityLabel>(code);
}

std::string_view label_token(VeracityLabel label) noexcept {
    switch (label) {
        case VeracityLabel::Real: return "REAL";
        case VeracityLabel::TVD: return "TVD";
        case VeracityLabel::VVD: return "VVD";
        case VeracityLabel::CCD: return "CCD";
    }
    return "REAL";
}

std::optional<VeracityLabel> label_from_token(std::string_view token) noexcept {
    const std::string t = to_lower(token);
    for (auto l : kAllLabels) {
        if (t == to_lower(label_token(l))) return l;
    }
    return std::nullopt;
}

std::string_view binary_token(BinaryLabel label) noexcept {
    return label == BinaryLabel::Real ? "real" : "fake";
}

std::string_view modality_name(Modality m) noexcept {
    return m == Modality::Text ? "Text" : "Image";
}

std::string_view kind_name(GenerationKind k) noexcept {
    switch (k) {
        case GenerationKind::Largemodel: return "Largemodel";
        case GenerationKind::Smallmodel: return "Smallmodel";
        case GenerationKind::Artificiality: return "Artificiality";
    }
    return "Largemodel";
}

GenerationCategory GenerationCategory::make(Modality modality, GenerationKind kind) {
    if (modality == Modality::Image && kind == GenerationKind::Smallmodel) {
        throw InvalidCategory("Image/Smallmodel is not a generation category");
    }
    return GenerationCategory(modality, kind);
}

GenerationCategory GenerationCategory::parse(std::string_view text) {
    const std::string lower = to_lower(trim(text));
    const auto slash = lower.find('/');
    if (slash == std::string::npos) {
        throw InvalidCategory("expected <modality>/<kind>, got '" + std::string(text) + "'");
    }
    const std::string m = lower.substr(0, slash);
    const std::string k = lower.substr(slash + 1);
    Modality modality;
    if (m == "text") {
        modality = Modality::Text;
    } else if (m == "image") {
        modality = Modality::Image;
    } else {
        throw InvalidCategory("unknown modality '" + m + "'");
    }
    for (auto kind : {GenerationKind::Largemodel, GenerationKind::Smallmodel,
                      GenerationKind::Artificiality}) {
        if (k == to_lower(kind_name(kind))) return make(modality, kind);
    }
    throw InvalidCategory("unknown generation kind '" + k + "'");
}

std::string GenerationCategory::name() const {
    return std::string(modality_name(modality_)) + "/" + std::string(kind_name(kind_));
}

std::size_t GenerationCategory::canonical_rank() const noexcept {
    const auto cats = categories_for(modality_);
    return static_cast<std::size_t>(std::find(cats.begin(), cats.end(), *this) - cats.begin());
}

std::span<const GenerationCategory> categories_for(Modality modality) {
    static const std::vector<GenerationCategory> text = {
        GenerationCategory::make(Modality::Text, GenerationKind::Largemodel),
        GenerationCategory::make(Modality::Text, GenerationKind::Smallmodel),
        GenerationCategory::make(Modality::Text, GenerationKind::Artificiality),
    };
    static const std::vector<GenerationCategory> image = {
        GenerationCategory::make(Modality::Image, GenerationKind::Largemodel),
        GenerationCategory::make(Modality::Image, GenerationKind::Artificiality),
    };
    return modality == Modality::Text ? std::span<const GenerationCategory>(text)
                                      : std::span<const GenerationCategory>(image);
}

std::optional<std::string> sniff_image_format(std::string_view h) noexcept {
    auto starts = [&](std::string_view magic) {
        return h.size() >= magic.size() && h.substr(0, magic.size()) == magic;
    };
    if (starts("\x89PNG\r\n\x1a\n")) return "image/png";
    if (starts("\xff\xd8\xff")) return "image/jpeg";
    if (starts("GIF87a") || starts("GIF89a")) return "image/gif";
    if (h.size() >= 12 && starts("RIFF") && h.substr(8, 4) == "WEBP") return "image/webp";
    if (starts("BM")) return "image/bmp";
    return std::nullopt;
}

ImageRef::ImageRef(std::filesystem::path path) : path_(std::move(path)) {}

void ImageRef::load() const {
    std::call_once(once_, [this] {
        std::ifstream in(path_, std::ios::binary);
        if (!in) {
            error_ = "cannot read image " + path_.string();
            return;
        }
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        auto media = sniff_image_format(std::string_view(bytes).substr(0, 16));
        if (!media) {
            error_ = "unrecognised image format " + path_.string();
            return;
        }
        media_type_ = *media;
        digest_ = sha256_hex(bytes);
        base64_ = base64_encode(bytes);
    });
    if (!error_.empty()) throw IoError(error_);
}

const std::string& ImageRef::digest() const {
    load();
    return digest_;
}

const std::string& ImageRef::base64() const {
    load();
    return base64_;
}

const std::string& ImageRef::media_type() const {
    load();
    return media_type_;
}

bool ImageRef::readable() const noexcept {
    try {
        load();
        return true;
    } catch (...) {
        return false;
    }
}

NewsItem::NewsItem(std::string id, std::string caption, std::filesystem::path image_path,
                   std::optional<VeracityLabel> gold_label)
    : id_(std::move(id)),
      caption_(std::move(caption)),
      image_(std::make_shared<const ImageRef>(std::move(image_path))),
      gold_label_(gold_label) {
    if (trim(caption_).empty()) {
        throw PreconditionError("news item '" + id_ + "' has a blank caption");
    }
}

NewsItem& NewsItem::with_gold_attribution(GoldAttribution gold) {
    if (gold.text && gold.text->modality() != Modality::Text) {
        throw InvalidCategory("gold text attribution must be a Text category");
    }
    if (gold.image && gold.image->modality() != Modality::Image) {
        throw InvalidCategory("gold image attribution must be an Image category");
    }
    gold_attribution_ = gold;
    return *this;
}

NewsItem& NewsItem::with_generation_tag(std::string tag) {
    generation_tag_ = std::move(tag);
    return *this;
}

std::string_view trace_flag_name(TraceFlag flag) noexcept {
    switch (flag) {
        case TraceFlag::ParseFallbackR: return "parse_fallback_r";
        case TraceFlag::ParseFallbackP: return "parse_fallback_p";
        case TraceFlag::ClampedR: return "clamped_r";
        case TraceFlag::ClampedP: return "clamped_p";
        case TraceFlag::EmptyReasoning: return "empty_reasoning";
        case TraceFlag::ScoreDisabledR: return "ars_off";
        case TraceFlag::ScoreDisabledP: return "pps_off";
        case TraceFlag::GoldInjected: return "gold_injected";
    }
    return "unknown";
}

std::string trim(std::string_view s) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace insight
