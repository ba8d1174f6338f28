#include "insight/run.hpp"

#include <chrono>
#include <fstream>

#include "insight/errors.hpp"

namespace insight {

std::map<std::string, std::size_t> RunSummary::calls_per_item() const {
    std::map<std::string, std::size_t> out;
    for (const auto& item : items) out[item.id()] = 0;
    for (const auto& c : calls) {
        const auto slash = c.tag.find('/');
        if (slash == std::string::npos) continue;
        const auto it = out.find(c.tag.substr(0, slash));
        if (it != out.end()) ++it->second;
    }
    return out;
}

std::vector<NewsItem> load_items(const RunConfig& config) {
    if (config.dataset_root.empty()) throw ConfigError("no dataset root configured");
    auto items = dataset::load_dataset(config.dataset_root, config.split);
    if (config.per_class) items = dataset::sample_stratified(items, *config.per_class, config.seed);
    if (items.empty()) throw DatasetError("dataset split is empty");
    return items;
}

adp::PromptStore prepare_prompts(const RunConfig& config, backend::Backend& backend,
                                 adp::MaterializeStats* stats) {
    const auto assets = adp::load_prompt_assets(config.prompts_dir);
    auto store = adp::materialize_store(assets, backend, config.toggles.adp ? adp::AdpMode::On : adp::AdpMode::Off,
                                        config.adp, config.lock_path, stats);
    adp::check_required(store);
    return store;
}

RunSummary execute_run(const RunConfig& config, std::shared_ptr<backend::Backend> base) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    if (!base) base = backend::make_backend(config.backend);
    auto log = std::make_shared<backend::CallLog>();
    backend::LoggingBackend logged(base, log);

    RunSummary summary;
    summary.items = load_items(config);
    if (config.toggles.gold_attribution) {
        bool any_gold = false;
        for (const auto& item : summary.items) {
            any_gold = any_gold || item.gold_attribution().text || item.gold_attribution().image;
        }
        if (!any_gold) throw ConfigError("gold_attribution=on but no record carries gold categories");
    }

    const auto store = prepare_prompts(config, logged, &summary.adp_stats);
    const StageContext ctx{store, logged, config.pipeline};
    summary.outcomes = config.concurrency > 1
                           ? pipeline::run_items_parallel(summary.items, ctx, config.toggles, config.skip_failures,
                                                          config.concurrency)
                           : pipeline::run_items_serial(summary.items, ctx, config.toggles, config.skip_failures);

    summary.calls = log->snapshot();
    summary.network_calls = base->network_calls();
    summary.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    pipeline::ArtifactInputs extra;
    extra.config_snapshot = config_to_json(config);
    for (const auto& c : summary.calls) extra.touched_keys.push_back(c.key);
    extra.wall_seconds = summary.wall_seconds;
    summary.report = pipeline::write_run_artifact(config.output_dir, summary.items, summary.outcomes, extra);
    return summary;
}

std::size_t export_transcript(const std::filesystem::path& cache_dir, const std::filesystem::path& run_dir,
                              const std::filesystem::path& out_dir) {
    std::ifstream in(run_dir / "keys.txt");
    if (!in) throw MissingArtifact("missing " + (run_dir / "keys.txt").string());
    std::size_t n = 0;
    std::string key;
    while (std::getline(in, key)) {
        key = trim(key);
        if (key.empty()) continue;
        auto entry = backend::read_entry(cache_dir, key);
        if (!entry) throw MissingArtifact("cache has no entry for key " + key);
        backend::write_entry(out_dir, *entry);
        ++n;
    }
    return n;
}

}  // namespace insight
