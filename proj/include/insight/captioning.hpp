#pragma once

#include <string>

#include "insight/core.hpp"
#include "insight/stage.hpp"

namespace insight::captioning {

inline constexpr const char* kNoCaption = "[no caption]";

/// Caption-blind textual description of a news image.
struct CaptionText {
    std::string text;
    std::string item_id;
    /// True when the model returned nothing and `text` holds kNoCaption.
    bool empty = false;
};

/// One captioning call with the image attached. The request never carries
/// the news caption. Throws PreconditionError before any backend call when
/// the image cannot be read.
CaptionText caption_image(const NewsItem& item, const StageContext& ctx);

}  // namespace insight::captioning
