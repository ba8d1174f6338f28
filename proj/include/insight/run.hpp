#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "insight/adp.hpp"
#include "insight/backend.hpp"
#include "insight/config.hpp"
#include "insight/metrics.hpp"
#include "insight/pipeline.hpp"

namespace insight {

struct RunSummary {
    std::vector<NewsItem> items;
    std::vector<pipeline::ItemOutcome> outcomes;
    metrics::EvalReport report;
    adp::MaterializeStats adp_stats;
    std::vector<backend::CallRecord> calls;  // every backend request, ADP included
    std::uint64_t network_calls = 0;
    double wall_seconds = 0.0;

    /// Requests per item id, from the tag prefix.
    std::map<std::string, std::size_t> calls_per_item() const;
};

/// Loads the dataset split and applies stratified sampling when configured.
std::vector<NewsItem> load_items(const RunConfig& config);

/// Loads prompts/ and materializes the store for the configured ADP mode.
adp::PromptStore prepare_prompts(const RunConfig& config, backend::Backend& backend,
                                 adp::MaterializeStats* stats = nullptr);

/// Full `run`: prompts, dataset, every item, artifact directory. When
/// `backend` is null it is built from config.backend.
RunSummary execute_run(const RunConfig& config, std::shared_ptr<backend::Backend> backend = nullptr);

/// Copies the cache entries listed in <run_dir>/keys.txt into `out_dir`.
/// Returns the number of entries exported. Throws MissingArtifact when a key is absent.
std::size_t export_transcript(const std::filesystem::path& cache_dir, const std::filesystem::path& run_dir,
                              const std::filesystem::path& out_dir);

}  // namespace insight
