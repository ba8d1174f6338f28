#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "insight/backend.hpp"
#include "insight/errors.hpp"
#include "insight/stage.hpp"

namespace insight::adp {

/// A human-drafted prompt and, once rewritten, its debiased form.
struct PromptAsset {
    std::string id;
    std::string raw;
    std::optional<std::string> debiased;
    std::string source_model;
    std::string created_at;
    /// "empty_rewrite", "scaffold_echo" when the rewrite was rejected.
    std::set<std::string> flags;

    /// Debiased text when present, raw otherwise.
    const std::string& effective() const noexcept { return debiased ? *debiased : raw; }
};

/// Rewrite returned blank; callers fall back to the raw prompt.
class EmptyRewrite : public Error {
public:
    using Error::Error;
};

/// Rewrite echoed the meta-query instructions; callers fall back to raw.
class ScaffoldEcho : public Error {
public:
    using Error::Error;
};

/// Immutable id -> asset map consumed by the downstream stages.
class PromptStore {
public:
    PromptStore() = default;
    explicit PromptStore(std::vector<PromptAsset> assets);

    /// Effective text for `id`. Throws ConfigError for unknown ids.
    const std::string& text(const std::string& id) const;
    const PromptAsset& asset(const std::string& id) const;
    bool contains(const std::string& id) const { return assets_.count(id) != 0; }
    std::vector<PromptAsset> assets() const;
    std::size_t size() const noexcept { return assets_.size(); }

private:
    std::map<std::string, PromptAsset> assets_;
};

/// Reads every *.txt under `dir`. Ids are relative paths without extension,
/// with '/' replaced by '.': cap/text/reason.txt -> "cap.text.reason".
std::vector<PromptAsset> load_prompt_assets(const std::filesystem::path& dir);

/// Wraps `raw` in the fixed debiasing meta-query. Throws PreconditionError on blank input.
backend::ChatRequest build_debias_query(const std::string& raw, const ModelSettings& settings);

/// Removes surrounding whitespace, one markdown code fence and one pair of
/// matching quotes.
std::string strip_rewrite(std::string_view text);

/// One rewrite call. Throws EmptyRewrite / ScaffoldEcho on unusable output.
PromptAsset debias_prompt(const PromptAsset& asset, backend::Backend& backend,
                          const ModelSettings& adp_settings);

enum class AdpMode { On, Off };

struct MaterializeStats {
    std::size_t backend_calls = 0;
    std::size_t reused_from_lock = 0;
    std::size_t fallbacks = 0;
};

/// Debiases every asset once per (raw, model) pair. Entries in an existing
/// lock file with matching raw hash and model are reused without a call.
/// With AdpMode::Off the debiased text mirrors raw. The lock is rewritten
/// when `lock_path` is non-empty.
PromptStore materialize_store(const std::vector<PromptAsset>& assets, backend::Backend& backend,
                              AdpMode mode, const ModelSettings& adp_settings,
                              const std::filesystem::path& lock_path = {},
                              MaterializeStats* stats = nullptr);

/// Lock file I/O: {"version":1,"assets":[{id, raw_sha256, model, debiased, created_at, flags}]}.
std::vector<PromptAsset> read_lock(const std::filesystem::path& lock_path);
void write_lock(const std::filesystem::path& lock_path, const std::vector<PromptAsset>& assets);

// Asset ids the pipeline stages read.
namespace ids {
inline constexpr const char* kTextReason = "cap.text.reason";
inline constexpr const char* kImageReason = "cap.image.reason";
inline constexpr const char* kReasoningScore = "cap.score.reasoning";
inline constexpr const char* kCategoryScore = "cap.score.category";
inline constexpr const char* kCaption = "caption.describe";
inline constexpr const char* kFinal = "decision.final";
inline constexpr const char* kAnswerFormat = "decision.answer_format";
}  // namespace ids

/// "definitions.text.largemodel" etc.
std::string definition_id(const GenerationCategory& category);

/// Every id the pipeline requires; missing ones are a ConfigError at run start.
std::vector<std::string> required_ids();
void check_required(const PromptStore& store);

}  // namespace insight::adp
