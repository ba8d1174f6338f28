#include "insight/pipeline.hpp"

#include <omp.h>

#include <chrono>
#include <exception>
#include <fstream>
#include <set>

#include "insight/cap.hpp"
#include "insight/errors.hpp"

namespace insight::pipeline {

using nlohmann::json;

ItemOutcome process_item(const NewsItem& item, const StageContext& ctx, const Toggles& toggles) {
    const auto start = std::chrono::steady_clock::now();
    ItemOutcome out;
    out.item_id = item.id();

    std::optional<AttributionResult> text_attr;
    std::optional<AttributionResult> image_attr;
    bool gold_used = false;
    if (toggles.cap) {
        const cap::CapOptions options{toggles.ars, toggles.pps};
        const auto& gold = item.gold_attribution();
        if (toggles.gold_attribution && gold.text) {
            text_attr = decision::inject_gold(*gold.text);
            gold_used = true;
        } else {
            text_attr = cap::attribute_modality(item, Modality::Text, ctx, options);
        }
        if (toggles.gold_attribution && gold.image) {
            image_attr = decision::inject_gold(*gold.image);
            gold_used = true;
        } else {
            image_attr = cap::attribute_modality(item, Modality::Image, ctx, options);
        }
    }
    if (toggles.ic) out.caption = captioning::caption_image(item, ctx);

    const auto request = decision::build_final_query(item, out.caption, text_attr, image_attr, ctx);
    auto verdict = decision::final_verdict(item.id(), request, ctx.backend, std::move(text_attr),
                                           std::move(image_attr));
    if (out.caption && out.caption->empty) verdict.flags.insert(decision::VerdictFlag::CaptionMissing);
    if (gold_used) verdict.flags.insert(decision::VerdictFlag::GoldAttribution);
    out.verdict = std::move(verdict);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

namespace {

ItemOutcome guarded(const NewsItem& item, const StageContext& ctx, const Toggles& toggles,
                    std::exception_ptr& failure) {
    try {
        return process_item(item, ctx, toggles);
    } catch (const Error& e) {
        failure = std::make_exception_ptr(ItemFailure(item.id(), e.what(), e.exit_code()));
    } catch (const std::exception& e) {
        failure = std::make_exception_ptr(ItemFailure(item.id(), e.what(), 1));
    }
    ItemOutcome out;
    out.item_id = item.id();
    try {
        std::rethrow_exception(failure);
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

}  // namespace

std::vector<ItemOutcome> run_items_serial(std::span<const NewsItem> items, const StageContext& ctx,
                                          const Toggles& toggles, bool skip_failures) {
    std::vector<ItemOutcome> out;
    out.reserve(items.size());
    for (const auto& item : items) {
        std::exception_ptr failure;
        out.push_back(guarded(item, ctx, toggles, failure));
        if (failure && !skip_failures) std::rethrow_exception(failure);
    }
    return out;
}

std::vector<ItemOutcome> run_items_parallel(std::span<const NewsItem> items, const StageContext& ctx,
                                            const Toggles& toggles, bool skip_failures, int threads) {
    const auto n = static_cast<std::int64_t>(items.size());
    std::vector<ItemOutcome> out(items.size());
    std::vector<std::exception_ptr> failures(items.size());
    // Items are independent; each worker writes only its own slots.
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (std::int64_t i = 0; i < n; ++i) {
        out[i] = guarded(items[i], ctx, toggles, failures[i]);
    }
    if (!skip_failures) {
        for (const auto& f : failures) {
            if (f) std::rethrow_exception(f);
        }
    }
    return out;
}

namespace {

json attribution_summary(const std::optional<AttributionResult>& a) {
    if (!a) return nullptr;
    return {{"selected", a->selected.name()}, {"product", a->selected_product}};
}

json trace_json(const ReasoningTrace& t) {
    json flags = json::array();
    for (auto f : t.flags) flags.push_back(trace_flag_name(f));
    return {
        {"category", t.category.name()},
        {"raw_response", t.raw_response},
        {"steps", t.steps},
        {"s_r", t.s_r ? json(*t.s_r) : json(nullptr)},
        {"s_p", t.s_p ? json(*t.s_p) : json(nullptr)},
        {"product", t.product()},
        {"flags", flags},
    };
}

json attribution_full(const std::optional<AttributionResult>& a) {
    if (!a) return nullptr;
    json traces = json::array();
    for (const auto& t : a->per_category) traces.push_back(trace_json(t));
    return {{"selected", a->selected.name()}, {"product", a->selected_product}, {"traces", traces}};
}

std::vector<std::string> all_flags(const ItemOutcome& o) {
    std::set<std::string> flags;
    if (!o.verdict) return {};
    for (auto f : o.verdict->flags) flags.insert(std::string(decision::verdict_flag_name(f)));
    for (const auto* a : {&o.verdict->text_attribution, &o.verdict->image_attribution}) {
        if (!*a) continue;
        for (const auto& t : (*a)->per_category)
            for (auto f : t.flags) flags.insert(std::string(trace_flag_name(f)));
    }
    return {flags.begin(), flags.end()};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

std::string file_safe(std::string_view id) {
    std::string out;
    for (char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                        c == '-' || c == '_' || c == '.';
        out.push_back(ok ? c : '_');
    }
    if (out.empty() || out == "." || out == "..") out = "_" + out;
    return out;
}

json verdict_to_json(const NewsItem& item, const ItemOutcome& o) {
    const auto& v = *o.verdict;
    json line = {
        {"id", item.id()},
        {"label", label_token(v.label)},
        {"binary", binary_token(to_binary(v.label))},
        {"text_attribution", attribution_summary(v.text_attribution)},
        {"image_attribution", attribution_summary(v.image_attribution)},
        {"caption", o.caption ? json(o.caption->text) : json(nullptr)},
        {"final_response", v.final_response},
        {"flags", all_flags(o)},
    };
    line["gold"] = item.gold_label() ? json(label_token(*item.gold_label())) : json(nullptr);
    line["generation_tag"] = item.generation_tag() ? json(*item.generation_tag()) : json(nullptr);
    return line;
}

metrics::ScoredItem scored_from_json(const json& line) {
    metrics::ScoredItem s;
    try {
        s.id = line.at("id").get<std::string>();
        const auto pred = label_from_token(line.at("label").get<std::string>());
        if (!pred) throw MissingArtifact("verdict '" + s.id + "' has an unknown label");
        s.pred = *pred;
        if (line.at("gold").is_null()) throw MissingArtifact("verdict '" + s.id + "' has no gold label");
        const auto gold = label_from_token(line.at("gold").get<std::string>());
        if (!gold) throw MissingArtifact("verdict '" + s.id + "' has an unknown gold label");
        s.gold = *gold;
        if (line.contains("generation_tag") && line["generation_tag"].is_string()) {
            s.generation_tag = line["generation_tag"].get<std::string>();
        }
        s.flags = line.value("flags", std::vector<std::string>{});
    } catch (const json::exception& e) {
        throw MissingArtifact(std::string("malformed verdict line: ") + e.what());
    }
    return s;
}

json traces_to_json(const ItemOutcome& o) {
    json doc = {{"id", o.item_id}};
    if (o.verdict) {
        doc["text_attribution"] = attribution_full(o.verdict->text_attribution);
        doc["image_attribution"] = attribution_full(o.verdict->image_attribution);
        doc["final_response"] = o.verdict->final_response;
    }
    doc["caption"] = o.caption ? json(o.caption->text) : json(nullptr);
    return doc;
}

std::vector<metrics::ScoredItem> scored_items(std::span<const NewsItem> items,
                                              std::span<const ItemOutcome> outcomes) {
    std::vector<metrics::ScoredItem> out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (!outcomes[i].verdict || !items[i].gold_label()) continue;
        metrics::ScoredItem s;
        s.id = items[i].id();
        s.pred = outcomes[i].verdict->label;
        s.gold = *items[i].gold_label();
        s.generation_tag = items[i].generation_tag();
        s.flags = all_flags(outcomes[i]);
        out.push_back(std::move(s));
    }
    return out;
}

metrics::EvalReport write_run_artifact(const std::filesystem::path& out_dir, std::span<const NewsItem> items,
                                       std::span<const ItemOutcome> outcomes, const ArtifactInputs& extra) {
    if (items.size() != outcomes.size()) throw PreconditionError("items and outcomes differ in length");
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "traces", ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    const auto scored = scored_items(items, outcomes);
    if (scored.empty()) throw MissingArtifact("no scored verdicts to report");
    const auto report = metrics::build_report(scored);

    std::string verdicts;
    json per_item_flags = json::object();
    json failures = json::object();
    double item_seconds = 0.0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& o = outcomes[i];
        item_seconds += o.seconds;
        if (!o.verdict) {
            failures[o.item_id] = o.error;
            continue;
        }
        verdicts += verdict_to_json(items[i], o).dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
        if (auto f = all_flags(o); !f.empty()) per_item_flags[o.item_id] = f;
        write_text(out_dir / "traces" / (file_safe(o.item_id) + ".json"),
                   traces_to_json(o).dump(2, ' ', false, json::error_handler_t::replace) + "\n");
    }
    write_text(out_dir / "verdicts.jsonl", verdicts);
    write_text(out_dir / "report.json", metrics::report_to_json(report).dump(2) + "\n");
    write_text(out_dir / "config.snapshot.json", extra.config_snapshot.dump(2) + "\n");
    write_text(out_dir / "flags.json",
               json{{"counts", report.flag_counts}, {"items", per_item_flags}, {"failures", failures}}.dump(2) +
                   "\n");

    std::set<std::string> keys(extra.touched_keys.begin(), extra.touched_keys.end());
    std::string key_lines;
    for (const auto& k : keys) key_lines += k + "\n";
    write_text(out_dir / "keys.txt", key_lines);

    const double n = static_cast<double>(items.size());
    write_text(out_dir / "timing.json", json{{"items", items.size()},
                                             {"wall_seconds", extra.wall_seconds},
                                             {"avg_item_seconds", n > 0 ? item_seconds / n : 0.0}}
                                                .dump(2) +
                                            "\n");
    return report;
}

metrics::EvalReport report_from_run(const std::filesystem::path& run_dir) {
    std::ifstream in(run_dir / "verdicts.jsonl");
    if (!in) throw MissingArtifact("missing " + (run_dir / "verdicts.jsonl").string());
    std::vector<metrics::ScoredItem> scored;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        try {
            scored.push_back(scored_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw MissingArtifact(std::string("malformed verdicts.jsonl: ") + e.what());
        }
    }
    if (scored.empty()) throw MissingArtifact("verdicts.jsonl in " + run_dir.string() + " is empty");
    return metrics::build_report(scored);
}

metrics::EvalReport load_report(const std::filesystem::path& run_dir) {
    std::ifstream in(run_dir / "report.json");
    if (!in) throw MissingArtifact("missing " + (run_dir / "report.json").string());
    try {
        return metrics::report_from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw MissingArtifact(std::string("malformed report.json: ") + e.what());
    }
}

}  // namespace insight::pipeline
