// insight: run the detection pipeline, materialize prompts, render reports
// and maintain the response cache.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "insight/errors.hpp"
#include "insight/metrics.hpp"
#include "insight/run.hpp"

namespace {

using insight::RunConfig;

struct CommonFlags {
    std::string config_path;
    std::string backend;
    std::string endpoint;
    std::string transcript;
    std::string script;
    std::string cache_dir;
    std::string model;
    std::string adp_model;
    std::string prompts;
    std::string lock;
    std::vector<std::string> toggles;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file");
    cmd->add_option("--backend", f.backend, "live | replay | scripted")
        ->check(CLI::IsMember({"live", "replay", "scripted"}));
    cmd->add_option("--endpoint", f.endpoint, "OpenAI-compatible base URL (live)");
    cmd->add_option("--transcript", f.transcript, "Transcript directory (replay)");
    cmd->add_option("--script", f.script, "Rules file (scripted)");
    cmd->add_option("--cache-dir", f.cache_dir, "Response cache directory");
    cmd->add_option("--model", f.model, "Pipeline model id");
    cmd->add_option("--adp-model", f.adp_model, "Model used to debias prompts");
    cmd->add_option("--prompts", f.prompts, "Prompt asset directory");
    cmd->add_option("--lock", f.lock, "Prompt lock file");
    cmd->add_option("--toggle", f.toggles, "name=on|off for adp, cap, ic, ars, pps, gold_attribution")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
}

RunConfig base_config(const CommonFlags& f) {
    RunConfig c = f.config_path.empty() ? RunConfig{} : insight::load_config(f.config_path);
    if (!f.backend.empty()) c.backend.kind = insight::backend::backend_kind_from_name(f.backend);
    if (!f.endpoint.empty()) c.backend.endpoint = f.endpoint;
    if (!f.transcript.empty()) c.backend.transcript_dir = f.transcript;
    if (!f.script.empty()) c.backend.script_path = f.script;
    if (!f.cache_dir.empty()) c.backend.cache_dir = f.cache_dir;
    if (!f.model.empty()) {
        c.pipeline.model = f.model;
        if (f.adp_model.empty()) c.adp.model = f.model;
    }
    if (!f.adp_model.empty()) c.adp.model = f.adp_model;
    if (!f.prompts.empty()) c.prompts_dir = f.prompts;
    if (!f.lock.empty()) c.lock_path = f.lock;
    for (const auto& t : f.toggles) c.toggles.apply(t);
    return c;
}

void print_summary(const insight::RunSummary& s, const RunConfig& c) {
    std::size_t failed = 0;
    for (const auto& o : s.outcomes) failed += o.verdict ? 0 : 1;
    std::cout << "items: " << s.items.size() << "  failed: " << failed << "  backend requests: " << s.calls.size()
              << "  network calls: " << s.network_calls << '\n';
    std::cout << "prompts: " << s.adp_stats.backend_calls << " rewritten, " << s.adp_stats.reused_from_lock
              << " reused from lock, " << s.adp_stats.fallbacks << " fell back to raw\n";
    if (!s.items.empty()) {
        std::cout << "avg seconds per item: " << s.wall_seconds / static_cast<double>(s.items.size()) << '\n';
    }
    std::cout << "artifact: " << c.output_dir.string() << "\n\n";
    std::cout << insight::metrics::render_text(s.report);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Zero-shot multimodal misinformation detection with attribution prompting"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    CommonFlags run_flags;
    std::string split;
    std::string dataset;
    std::string out;
    std::optional<int> per_class;
    std::optional<std::uint64_t> seed;
    std::optional<int> concurrency;
    bool skip_failures = false;
    auto* run = app.add_subcommand("run", "Run the pipeline over a dataset split");
    add_common(run, run_flags);
    run->add_option("--split", split, "validation | test")->check(CLI::IsMember({"validation", "test"}));
    run->add_option("--dataset", dataset, "Dataset root containing <split>.jsonl");
    run->add_option("--out", out, "Run artifact directory");
    run->add_option("--per-class", per_class, "Stratified sample size per class");
    run->add_option("--seed", seed, "Sampling seed");
    run->add_option("--concurrency", concurrency, "Worker count (1 = serial)");
    run->add_flag("--skip-failures", skip_failures, "Continue past items with hard backend errors");

    CommonFlags adp_flags;
    auto* adp_cmd = app.add_subcommand("adp", "Materialize the debiased prompt store");
    add_common(adp_cmd, adp_flags);

    std::string report_dir;
    std::string compare_dir;
    bool report_json = false;
    auto* report = app.add_subcommand("report", "Render the tables of a run artifact");
    report->add_option("run_dir", report_dir, "Run artifact directory")->required();
    report->add_option("--compare", compare_dir, "Baseline run for a delta column");
    report->add_flag("--json", report_json, "Print report.json instead of tables");

    CommonFlags cache_flags;
    std::string cache_action;
    std::string cache_run;
    std::string cache_out;
    auto* cache = app.add_subcommand("cache", "Inspect or maintain the response cache");
    add_common(cache, cache_flags);
    cache->add_option("action", cache_action, "stats | clear | export-transcript")
        ->required()
        ->check(CLI::IsMember({"stats", "clear", "export-transcript"}));
    cache->add_option("--run", cache_run, "Run artifact whose requests to export");
    cache->add_option("--out", cache_out, "Transcript output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*run) {
            RunConfig c = base_config(run_flags);
            if (!split.empty()) c.split = insight::dataset::split_from_name(split);
            if (!dataset.empty()) c.dataset_root = dataset;
            if (!out.empty()) c.output_dir = out;
            if (per_class) c.per_class = *per_class;
            if (seed) c.seed = *seed;
            if (concurrency) c.concurrency = *concurrency;
            if (skip_failures) c.skip_failures = true;
            const auto summary = insight::execute_run(c);
            print_summary(summary, c);
        } else if (*adp_cmd) {
            RunConfig c = base_config(adp_flags);
            c.backend.validate();
            auto be = insight::backend::make_backend(c.backend);
            insight::adp::MaterializeStats stats;
            const auto store = insight::prepare_prompts(c, *be, &stats);
            std::cout << "prompt assets: " << store.size() << "  rewritten: " << stats.backend_calls
                      << "  reused: " << stats.reused_from_lock << "  fallbacks: " << stats.fallbacks
                      << "\nlock: " << c.lock_path.string() << '\n';
        } else if (*report) {
            const auto r = insight::pipeline::load_report(report_dir);
            if (report_json) {
                std::cout << insight::metrics::report_to_json(r).dump(2) << '\n';
            } else if (compare_dir.empty()) {
                std::cout << insight::metrics::render_text(r);
            } else {
                const auto base = insight::pipeline::load_report(compare_dir);
                std::cout << insight::metrics::render_text(r, &base);
            }
        } else if (*cache) {
            RunConfig c = base_config(cache_flags);
            if (c.backend.cache_dir.empty()) throw insight::ConfigError("no cache directory configured");
            const auto& dir = c.backend.cache_dir;
            if (cache_action == "stats") {
                std::cout << "entries: " << insight::backend::count_entries(dir) << '\n';
            } else if (cache_action == "clear") {
                insight::backend::clear_entries(dir);
                std::cout << "cleared " << dir.string() << '\n';
            } else {
                if (cache_run.empty() || cache_out.empty()) {
                    throw insight::ConfigError("export-transcript needs --run and --out");
                }
                const auto n = insight::export_transcript(dir, cache_run, cache_out);
                std::cout << "exported " << n << " entries to " << cache_out << '\n';
            }
        }
    } catch (const insight::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
