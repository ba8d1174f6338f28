#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "insight/backend.hpp"
#include "insight/config.hpp"
#include "insight/core.hpp"

namespace insight::fixture {

struct DesignItem {
    std::string id;
    int label = 0;
    std::string text;
    std::optional<std::string> generation_tag;
    std::optional<std::string> gold_text_category;
    std::optional<std::string> gold_image_category;
    std::map<std::string, std::array<int, 2>> text_scores;   // kind -> {s_r, s_p} in percent
    std::map<std::string, std::array<int, 2>> image_scores;
    std::string caption;
    std::string final_response;
    std::string final_baseline;
    VeracityLabel expected = VeracityLabel::Real;
    VeracityLabel expected_baseline = VeracityLabel::Real;
    std::string expected_text_category;
    std::string expected_image_category;
};

struct Design {
    std::string model;
    std::vector<DesignItem> items;
    std::array<std::array<std::size_t, 4>, 4> confusion{};
    std::array<std::array<std::size_t, 4>, 4> confusion_baseline{};
    std::map<std::string, double> success_rate;
    std::map<std::string, double> success_rate_baseline;

    const DesignItem& item(const std::string& id) const;
};

Design load_design(const std::filesystem::path& path);

/// Answers every pipeline and ADP request from the design sheet. ADP
/// rewrites echo the raw prompt in quotes, so debiased text equals raw.
backend::ScriptedBackend::Responder design_responder(const Design& design);

/// Writes <root>/test.jsonl from the design sheet.
void write_dataset(const Design& design, const std::filesystem::path& root);

/// The two configurations the transcript covers: everything on, and
/// cap=off/ic=off. Outputs go under `scratch`.
RunConfig full_config(const std::filesystem::path& fixture_root, const std::filesystem::path& scratch);
RunConfig baseline_config(const std::filesystem::path& fixture_root, const std::filesystem::path& scratch);

/// Regenerates test.jsonl and records a transcript of both configurations
/// into `transcript_dir`. Returns the number of entries written.
std::size_t author(const std::filesystem::path& fixture_root, const std::filesystem::path& transcript_dir,
                   const std::filesystem::path& scratch);

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& stem);

}  // namespace insight::fixture
