#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "insight/captioning.hpp"
#include "insight/config.hpp"
#include "insight/decision.hpp"
#include "insight/errors.hpp"
#include "insight/metrics.hpp"
#include "insight/stage.hpp"

namespace insight::pipeline {

/// Wraps a hard per-item failure; keeps the inner error's exit code.
class ItemFailure : public Error {
public:
    ItemFailure(std::string item_id, const std::string& what, int exit_code)
        : Error("item '" + item_id + "': " + what), item_id_(std::move(item_id)), exit_code_(exit_code) {}
    const std::string& item_id() const noexcept { return item_id_; }
    int exit_code() const noexcept override { return exit_code_; }

private:
    std::string item_id_;
    int exit_code_;
};

struct ItemOutcome {
    std::string item_id;
    std::optional<decision::Verdict> verdict;  // unset when the item failed
    std::optional<captioning::CaptionText> caption;
    std::string error;
    double seconds = 0.0;
};

/// Runs every enabled stage for one item: text CAP, image CAP, captioning,
/// final decision. Throws on hard backend errors.
ItemOutcome process_item(const NewsItem& item, const StageContext& ctx, const Toggles& toggles);

/// Reference path: items in order on the calling thread.
std::vector<ItemOutcome> run_items_serial(std::span<const NewsItem> items, const StageContext& ctx,
                                          const Toggles& toggles, bool skip_failures);

/// OpenMP worker pool of `threads` workers. Outcomes keep input order and
/// equal run_items_serial() for any deterministic backend. Without
/// `skip_failures` the failure of the lowest-index item is rethrown.
std::vector<ItemOutcome> run_items_parallel(std::span<const NewsItem> items, const StageContext& ctx,
                                            const Toggles& toggles, bool skip_failures, int threads);

std::vector<metrics::ScoredItem> scored_items(std::span<const NewsItem> items,
                                              std::span<const ItemOutcome> outcomes);

/// One verdicts.jsonl line.
nlohmann::json verdict_to_json(const NewsItem& item, const ItemOutcome& outcome);
metrics::ScoredItem scored_from_json(const nlohmann::json& line);

/// Full traces for one item (traces/<id>.json).
nlohmann::json traces_to_json(const ItemOutcome& outcome);

struct ArtifactInputs {
    nlohmann::json config_snapshot;
    std::vector<std::string> touched_keys;
    double wall_seconds = 0.0;
};

/// Writes verdicts.jsonl, traces/, report.json, config.snapshot.json,
/// flags.json, keys.txt and timing.json. Returns the report.
metrics::EvalReport write_run_artifact(const std::filesystem::path& out_dir, std::span<const NewsItem> items,
                                       std::span<const ItemOutcome> outcomes, const ArtifactInputs& extra);

/// Rebuilds the report from verdicts.jsonl alone. Throws MissingArtifact.
metrics::EvalReport report_from_run(const std::filesystem::path& run_dir);
/// Reads report.json. Throws MissingArtifact.
metrics::EvalReport load_report(const std::filesystem::path& run_dir);

/// Makes an id safe to use as a file name.
std::string file_safe(std::string_view id);

}  // namespace insight::pipeline
