#include "insight/captioning.hpp"

#include "insight/adp.hpp"
#include "insight/cap.hpp"
#include "insight/errors.hpp"

namespace insight::captioning {

CaptionText caption_image(const NewsItem& item, const StageContext& ctx) {
    if (!item.image().readable()) {
        throw PreconditionError("item '" + item.id() + "': image " + item.image().path().string() +
                                " is not readable");
    }
    auto request = ctx.request(cap::item_tag(item.id(), "caption"));
    request.messages.push_back({backend::Role::User, ctx.prompts.text(adp::ids::kCaption),
                                backend::ImageAttachment::from_image(item.image_ptr())});
    const std::string text = trim(ctx.backend.complete(request).text);
    if (text.empty()) return {kNoCaption, item.id(), true};
    return {text, item.id(), false};
}

}  // namespace insight::captioning
