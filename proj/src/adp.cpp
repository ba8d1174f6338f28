#include "insight/adp.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iterator>
#include <sstream>

#include "insight/digest.hpp"

namespace insight::adp {

using nlohmann::json;

namespace {

// Meta-query wrapper. The two numbered lines are the rewrite contract.
constexpr std::string_view kQueryHead =
    "You are an expert prompt editor for multimodal news verification. "
    "Your task is to generate a sentence, please follow the instructions below:\n";
constexpr std::string_view kInstructionBias =
    "1. Eliminate language biases including rare words and grammatical mistakes in the Raw Sentence.";
constexpr std::string_view kInstructionSemantics =
    "2. Only return a new prompt while ensuring that it aligns with the unchanged semantics of the "
    "Raw Sentence.";
constexpr std::string_view kInputSlot = "Input: ";

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

bool echoes_scaffold(std::string_view text) {
    const std::string lower = to_lower(text);
    return lower.find("eliminate language biases") != std::string::npos ||
           lower.find("unchanged semantics of the raw sentence") != std::string::npos;
}

}  // namespace

PromptStore::PromptStore(std::vector<PromptAsset> assets) {
    for (auto& a : assets) {
        const std::string id = a.id;
        if (!assets_.emplace(id, std::move(a)).second) {
            throw ConfigError("duplicate prompt asset id '" + id + "'");
        }
    }
}

const PromptAsset& PromptStore::asset(const std::string& id) const {
    const auto it = assets_.find(id);
    if (it == assets_.end()) throw ConfigError("prompt asset '" + id + "' not found");
    return it->second;
}

const std::string& PromptStore::text(const std::string& id) const { return asset(id).effective(); }

std::vector<PromptAsset> PromptStore::assets() const {
    std::vector<PromptAsset> out;
    out.reserve(assets_.size());
    for (const auto& [_, a] : assets_) out.push_back(a);
    return out;
}

std::vector<PromptAsset> load_prompt_assets(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("prompt directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& de : std::filesystem::recursive_directory_iterator(dir)) {
        if (de.is_regular_file() && de.path().extension() == ".txt") files.push_back(de.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<PromptAsset> out;
    for (const auto& f : files) {
        auto rel = std::filesystem::relative(f, dir);
        rel.replace_extension();
        std::string id = rel.generic_string();
        std::replace(id.begin(), id.end(), '/', '.');
        std::ifstream in(f, std::ios::binary);
        if (!in) throw IoError("cannot read prompt " + f.string());
        std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        raw = trim(raw);
        if (raw.empty()) throw ConfigError("prompt asset '" + id + "' is empty");
        PromptAsset a;
        a.id = std::move(id);
        a.raw = std::move(raw);
        out.push_back(std::move(a));
    }
    return out;
}

backend::ChatRequest build_debias_query(const std::string& raw, const ModelSettings& settings) {
    if (trim(raw).empty()) throw PreconditionError("cannot debias an empty prompt");
    backend::ChatRequest r;
    r.model = settings.model;
    r.temperature = settings.temperature;
    r.max_tokens = settings.max_tokens;
    r.tag = "adp";
    std::string text;
    text += kQueryHead;
    text += kInstructionBias;
    text += '\n';
    text += kInstructionSemantics;
    text += "\n\n";
    text += kInputSlot;
    text += raw;
    r.messages.push_back({backend::Role::User, std::move(text), std::nullopt});
    return r;
}

std::string strip_rewrite(std::string_view text) {
    std::string s = trim(text);
    if (s.rfind("```", 0) == 0) {
        const auto first_nl = s.find('\n');
        s = first_nl == std::string::npos ? s.substr(3) : s.substr(first_nl + 1);
        const auto close = s.rfind("```");
        if (close != std::string::npos) s.erase(close);
        s = trim(s);
    }
    auto strip_pair = [&s](std::string_view open, std::string_view close) {
        if (s.size() >= open.size() + close.size() && s.compare(0, open.size(), open) == 0 &&
            s.compare(s.size() - close.size(), close.size(), close) == 0) {
            s = trim(s.substr(open.size(), s.size() - open.size() - close.size()));
            return true;
        }
        return false;
    };
    strip_pair("\"", "\"") || strip_pair("'", "'") || strip_pair("“", "”");
    return s;
}

PromptAsset debias_prompt(const PromptAsset& asset, backend::Backend& backend,
                          const ModelSettings& adp_settings) {
    auto request = build_debias_query(asset.raw, adp_settings);
    request.tag = "adp/" + asset.id;
    const auto response = backend.complete(request);
    std::string rewritten = strip_rewrite(response.text);
    if (rewritten.empty()) throw EmptyRewrite("rewrite of '" + asset.id + "' was blank");
    if (echoes_scaffold(rewritten)) {
        throw ScaffoldEcho("rewrite of '" + asset.id + "' echoed the meta-query");
    }
    PromptAsset out = asset;
    out.debiased = std::move(rewritten);
    out.source_model = adp_settings.model;
    out.created_at = utc_timestamp();
    out.flags.clear();
    return out;
}

std::vector<PromptAsset> read_lock(const std::filesystem::path& lock_path) {
    std::ifstream in(lock_path);
    if (!in) return {};
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("corrupt prompt lock " + lock_path.string() + ": " + e.what());
    }
    std::vector<PromptAsset> out;
    for (const auto& e : doc.value("assets", json::array())) {
        PromptAsset a;
        a.id = e.at("id").get<std::string>();
        // raw is not stored; callers match on raw_sha256.
        a.raw = e.at("raw_sha256").get<std::string>();
        a.debiased = e.at("debiased").get<std::string>();
        a.source_model = e.value("model", "");
        a.created_at = e.value("created_at", "");
        for (const auto& f : e.value("flags", json::array())) a.flags.insert(f.get<std::string>());
        out.push_back(std::move(a));
    }
    return out;
}

void write_lock(const std::filesystem::path& lock_path, const std::vector<PromptAsset>& assets) {
    json list = json::array();
    std::vector<const PromptAsset*> sorted;
    for (const auto& a : assets) sorted.push_back(&a);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });
    for (const auto* a : sorted) {
        list.push_back({
            {"id", a->id},
            {"raw_sha256", sha256_hex(a->raw)},
            {"model", a->source_model},
            {"debiased", a->effective()},
            {"created_at", a->created_at},
            {"flags", a->flags},
        });
    }
    if (lock_path.has_parent_path()) std::filesystem::create_directories(lock_path.parent_path());
    std::ofstream out(lock_path, std::ios::trunc);
    if (!out) throw IoError("cannot write prompt lock " + lock_path.string());
    out << json{{"version", 1}, {"assets", std::move(list)}}.dump(2) << '\n';
}

PromptStore materialize_store(const std::vector<PromptAsset>& assets, backend::Backend& backend,
                              AdpMode mode, const ModelSettings& adp_settings,
                              const std::filesystem::path& lock_path, MaterializeStats* stats) {
    MaterializeStats local;
    {
        std::set<std::string> seen;
        for (const auto& a : assets) {
            if (!seen.insert(a.id).second) throw ConfigError("duplicate prompt asset id '" + a.id + "'");
        }
    }
    std::vector<PromptAsset> out;
    out.reserve(assets.size());

    if (mode == AdpMode::Off) {
        for (const auto& a : assets) {
            PromptAsset copy = a;
            copy.debiased = a.raw;
            copy.source_model.clear();
            copy.flags = {"adp_off"};
            out.push_back(std::move(copy));
        }
    } else {
        std::map<std::string, PromptAsset> locked;
        if (!lock_path.empty()) {
            for (auto& a : read_lock(lock_path)) locked.emplace(a.id, std::move(a));
        }
        for (const auto& a : assets) {
            const auto it = locked.find(a.id);
            if (it != locked.end() && it->second.raw == sha256_hex(a.raw) &&
                it->second.source_model == adp_settings.model && !it->second.flags.count("adp_off")) {
                PromptAsset reused = a;
                reused.debiased = it->second.debiased;
                reused.source_model = it->second.source_model;
                reused.created_at = it->second.created_at;
                reused.flags = it->second.flags;
                out.push_back(std::move(reused));
                ++local.reused_from_lock;
                continue;
            }
            ++local.backend_calls;
            try {
                out.push_back(debias_prompt(a, backend, adp_settings));
            } catch (const EmptyRewrite&) {
                PromptAsset fb = a;
                fb.debiased = a.raw;
                fb.source_model = adp_settings.model;
                fb.flags = {"empty_rewrite"};
                out.push_back(std::move(fb));
                ++local.fallbacks;
            } catch (const ScaffoldEcho&) {
                PromptAsset fb = a;
                fb.debiased = a.raw;
                fb.source_model = adp_settings.model;
                fb.flags = {"scaffold_echo"};
                out.push_back(std::move(fb));
                ++local.fallbacks;
            }
        }
    }
    if (!lock_path.empty()) write_lock(lock_path, out);
    if (stats) *stats = local;
    return PromptStore(std::move(out));
}

std::string definition_id(const GenerationCategory& category) {
    return "definitions." + to_lower(modality_name(category.modality())) + "." +
           to_lower(kind_name(category.kind()));
}

std::vector<std::string> required_ids() {
    std::vector<std::string> out = {ids::kTextReason,    ids::kImageReason, ids::kReasoningScore,
                                    ids::kCategoryScore, ids::kCaption,     ids::kFinal,
                                    ids::kAnswerFormat};
    for (auto m : {Modality::Text, Modality::Image}) {
        for (const auto& c : categories_for(m)) out.push_back(definition_id(c));
    }
    return out;
}

void check_required(const PromptStore& store) {
    for (const auto& id : required_ids()) {
        if (!store.contains(id)) throw ConfigError("required prompt asset '" + id + "' is missing");
    }
}

}  // namespace insight::adp
