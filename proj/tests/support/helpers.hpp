#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include "insight/adp.hpp"
#include "insight/backend.hpp"
#include "insight/stage.hpp"

namespace insight::testkit {

inline std::filesystem::path source_dir() { return INSIGHT_SOURCE_DIR; }
inline std::filesystem::path fixture_dir() { return source_dir() / "tests" / "fixtures" / "replay12"; }

/// Minimal valid PNG header plus a tag so each file hashes differently.
inline std::filesystem::path write_png(const std::filesystem::path& path, const std::string& salt = "") {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << std::string("\x89PNG\r\n\x1a\n", 8) << "IHDR" << salt;
    return path;
}

/// Prompt store with raw text only; no backend involved.
inline adp::PromptStore raw_store() {
    return adp::PromptStore(adp::load_prompt_assets(source_dir() / "prompts"));
}

/// Owns the pieces a StageContext points at.
struct Stage {
    adp::PromptStore store = raw_store();
    std::shared_ptr<backend::Backend> backend;
    ModelSettings settings;

    explicit Stage(std::shared_ptr<backend::Backend> b) : backend(std::move(b)) { settings.model = "test-model"; }
    StageContext ctx() const { return StageContext{store, *backend, settings}; }
};

}  // namespace insight::testkit
