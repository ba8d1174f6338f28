#include "insight/config.hpp"

#include <fstream>

#include "insight/errors.hpp"

namespace insight {

using nlohmann::json;

namespace {

bool parse_switch(std::string_view v) {
    const std::string s = to_lower(trim(v));
    if (s == "on" || s == "true" || s == "1") return true;
    if (s == "off" || s == "false" || s == "0") return false;
    throw ConfigError("toggle value must be on or off, got '" + std::string(v) + "'");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    std::filesystem::path path(p);
    if (path.is_absolute() || base.empty()) return path;
    return base / path;
}

template <typename T>
T get_or(const json& doc, const char* key, T fallback) {
    if (!doc.contains(key) || doc[key].is_null()) return fallback;
    try {
        return doc[key].get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
}

ModelSettings settings_from(const json& doc, ModelSettings fallback) {
    fallback.model = get_or(doc, "model", fallback.model);
    fallback.temperature = get_or(doc, "temperature", fallback.temperature);
    fallback.max_tokens = get_or(doc, "max_tokens", fallback.max_tokens);
    return fallback;
}

}  // namespace

void Toggles::set(std::string_view name, bool value) {
    const std::string n = to_lower(trim(name));
    if (n == "adp") {
        adp = value;
    } else if (n == "cap") {
        cap = value;
    } else if (n == "ic") {
        ic = value;
    } else if (n == "ars") {
        ars = value;
    } else if (n == "pps") {
        pps = value;
    } else if (n == "gold_attribution" || n == "gold") {
        gold_attribution = value;
    } else {
        throw ConfigError("unknown toggle '" + std::string(name) + "'");
    }
}

void Toggles::apply(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) {
        throw ConfigError("toggle must look like name=on|off, got '" + std::string(assignment) + "'");
    }
    set(assignment.substr(0, eq), parse_switch(assignment.substr(eq + 1)));
}

void RunConfig::validate() const {
    backend.validate();
    if (pipeline.model.empty()) throw ConfigError("pipeline model is empty");
    if (adp.model.empty()) throw ConfigError("adp model is empty");
    if (pipeline.temperature < 0 || adp.temperature < 0) throw ConfigError("temperature must be >= 0");
    if (pipeline.max_tokens <= 0 || adp.max_tokens <= 0) throw ConfigError("max_tokens must be positive");
    if (concurrency < 1) throw ConfigError("concurrency must be >= 1");
    if (per_class && *per_class < 1) throw ConfigError("per_class must be positive");
    if (toggles.gold_attribution && !toggles.cap) {
        throw ConfigError("gold_attribution feeds the attribution clues and needs cap=on");
    }
}

RunConfig config_from_json(const json& doc, const std::filesystem::path& base_dir) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    RunConfig c;
    const json be = doc.value("backend", json::object());
    c.backend.kind = backend::backend_kind_from_name(get_or<std::string>(be, "kind", "replay"));
    c.backend.endpoint = get_or<std::string>(be, "endpoint", "");
    c.backend.api_key_env = get_or<std::string>(be, "api_key_env", c.backend.api_key_env);
    c.backend.cache_dir = resolve(base_dir, get_or<std::string>(be, "cache_dir", ""));
    c.backend.transcript_dir = resolve(base_dir, get_or<std::string>(be, "transcript_dir", ""));
    c.backend.script_path = resolve(base_dir, get_or<std::string>(be, "script", ""));
    c.backend.retry.max_attempts = get_or(be, "max_attempts", c.backend.retry.max_attempts);
    c.backend.retry.backoff_base =
        std::chrono::milliseconds(get_or<std::int64_t>(be, "backoff_ms", c.backend.retry.backoff_base.count()));
    c.backend.max_in_flight = get_or(be, "max_in_flight", c.backend.max_in_flight);
    c.backend.timeout_seconds = get_or(be, "timeout_seconds", c.backend.timeout_seconds);

    c.pipeline = settings_from(doc, c.pipeline);
    c.adp = c.pipeline;
    c.adp.model = get_or<std::string>(doc, "adp_model", c.pipeline.model);

    const json toggles = doc.value("toggles", json::object());
    for (const auto& [name, value] : toggles.items()) {
        if (value.is_boolean()) {
            c.toggles.set(name, value.get<bool>());
        } else if (value.is_string()) {
            c.toggles.set(name, parse_switch(value.get<std::string>()));
        } else {
            throw ConfigError("toggle '" + name + "' must be a boolean or on/off");
        }
    }

    c.prompts_dir = resolve(base_dir, get_or<std::string>(doc, "prompts_dir", c.prompts_dir.string()));
    c.lock_path = resolve(base_dir, get_or<std::string>(doc, "lock_path", c.lock_path.string()));
    const json ds = doc.value("dataset", json::object());
    c.dataset_root = resolve(base_dir, get_or<std::string>(ds, "root", ""));
    c.split = dataset::split_from_name(get_or<std::string>(ds, "split", "test"));
    const json sampling = doc.value("sampling", json::object());
    if (sampling.contains("per_class") && !sampling["per_class"].is_null()) {
        c.per_class = get_or<int>(sampling, "per_class", 0);
    }
    c.seed = get_or<std::uint64_t>(sampling, "seed", 0);
    c.output_dir = resolve(base_dir, get_or<std::string>(doc, "output", c.output_dir.string()));
    c.concurrency = get_or(doc, "concurrency", c.concurrency);
    c.skip_failures = get_or(doc, "skip_failures", false);
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return config_from_json(doc, path.parent_path());
}

json config_to_json(const RunConfig& c) {
    json sampling = {{"seed", c.seed}};
    sampling["per_class"] = c.per_class ? json(*c.per_class) : json(nullptr);
    return {
        {"backend",
         {{"kind", backend::backend_kind_name(c.backend.kind)},
          {"endpoint", c.backend.endpoint},
          {"api_key_env", c.backend.api_key_env},
          {"cache_dir", c.backend.cache_dir.string()},
          {"transcript_dir", c.backend.transcript_dir.string()},
          {"script", c.backend.script_path.string()},
          {"max_attempts", c.backend.retry.max_attempts},
          {"backoff_ms", c.backend.retry.backoff_base.count()},
          {"max_in_flight", c.backend.max_in_flight},
          {"timeout_seconds", c.backend.timeout_seconds}}},
        {"model", c.pipeline.model},
        {"adp_model", c.adp.model},
        {"temperature", c.pipeline.temperature},
        {"max_tokens", c.pipeline.max_tokens},
        {"toggles",
         {{"adp", c.toggles.adp},
          {"cap", c.toggles.cap},
          {"ic", c.toggles.ic},
          {"ars", c.toggles.ars},
          {"pps", c.toggles.pps},
          {"gold_attribution", c.toggles.gold_attribution}}},
        {"prompts_dir", c.prompts_dir.string()},
        {"lock_path", c.lock_path.string()},
        {"dataset", {{"root", c.dataset_root.string()}, {"split", dataset::split_name(c.split)}}},
        {"sampling", sampling},
        {"output", c.output_dir.string()},
        {"concurrency", c.concurrency},
        {"skip_failures", c.skip_failures},
    };
}

}  // namespace insight
