#pragma once

#include <string>

#include "insight/backend.hpp"

namespace insight {

namespace adp {
class PromptStore;
}

/// Model and decoding settings shared by every pipeline request.
struct ModelSettings {
    std::string model = "llava-v1.6-34b";
    double temperature = backend::kDefaultTemperature;
    int max_tokens = backend::kDefaultMaxTokens;
};

/// What a pipeline stage needs to issue requests.
struct StageContext {
    const adp::PromptStore& prompts;
    backend::Backend& backend;
    ModelSettings settings;

    backend::ChatRequest request(std::string tag) const {
        backend::ChatRequest r;
        r.model = settings.model;
        r.temperature = settings.temperature;
        r.max_tokens = settings.max_tokens;
        r.tag = std::move(tag);
        return r;
    }
};

}  // namespace insight
