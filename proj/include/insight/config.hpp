#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "insight/backend.hpp"
#include "insight/dataset.hpp"
#include "insight/stage.hpp"

namespace insight {

/// Ablation switches. Declarative: the order they are set in never matters.
struct Toggles {
    bool adp = true;
    bool cap = true;
    bool ic = true;
    bool ars = true;
    bool pps = true;
    bool gold_attribution = false;

    /// Accepts "name=on|off" (also true/false, 1/0). Throws ConfigError.
    void apply(std::string_view assignment);
    void set(std::string_view name, bool value);
    bool operator==(const Toggles&) const = default;
};

struct RunConfig {
    backend::BackendConfig backend;
    ModelSettings pipeline;
    ModelSettings adp;  // model used for prompt rewriting; may differ from pipeline.model
    Toggles toggles;
    std::filesystem::path prompts_dir = "prompts";
    std::filesystem::path lock_path = "prompts.lock.json";
    std::filesystem::path dataset_root;
    dataset::Split split = dataset::Split::Test;
    std::optional<int> per_class;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "runs/latest";
    int concurrency = 4;
    bool skip_failures = false;

    /// Throws ConfigError for inconsistent settings.
    void validate() const;
};

/// Parses a JSON config document. Relative paths resolve against `base_dir`.
RunConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Snapshot written next to every run; config_from_json() reads it back.
nlohmann::json config_to_json(const RunConfig& config);

}  // namespace insight
