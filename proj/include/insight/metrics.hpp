#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "insight/core.hpp"

namespace insight::metrics {

/// K x K counts, rows = gold, columns = predicted.
template <std::size_t K>
struct Confusion {
    std::array<std::array<std::uint64_t, K>, K> counts{};

    std::uint64_t total() const noexcept {
        std::uint64_t n = 0;
        for (const auto& row : counts)
            for (auto c : row) n += c;
        return n;
    }
    std::uint64_t trace() const noexcept {
        std::uint64_t n = 0;
        for (std::size_t i = 0; i < K; ++i) n += counts[i][i];
        return n;
    }
    bool operator==(const Confusion&) const = default;
};

using ConfusionMatrix = Confusion<4>;
using BinaryConfusion = Confusion<2>;

/// Tallies (gold, pred) pairs with an OpenMP reduction over per-thread tables.
/// Throws LengthMismatch / EmptyInput.
ConfusionMatrix confusion(std::span<const VeracityLabel> preds, std::span<const VeracityLabel> golds);
/// Single-threaded reference for confusion().
ConfusionMatrix confusion_serial(std::span<const VeracityLabel> preds, std::span<const VeracityLabel> golds);

BinaryConfusion project_binary(const ConfusionMatrix& m) noexcept;

struct MacroScores {
    double f1 = 0.0;
    double pre = 0.0;
    double rec = 0.0;
};

struct Scores {
    double f1 = 0.0;
    double pre = 0.0;
    double rec = 0.0;
    double acc = 0.0;
};

/// Per-class precision/recall/F1 with 0/0 := 0, averaged over all K classes
/// regardless of support.
template <std::size_t K>
MacroScores macro_scores(const Confusion<K>& m) noexcept;

template <std::size_t K>
std::array<double, K> per_class_f1(const Confusion<K>& m) noexcept;

template <std::size_t K>
double accuracy(const Confusion<K>& m) noexcept {
    const auto n = m.total();
    return n == 0 ? 0.0 : static_cast<double>(m.trace()) / static_cast<double>(n);
}

Scores multiclass_report(const ConfusionMatrix& m) noexcept;

/// Both vectors projected real/fake, macro over the two classes.
Scores binary_report(std::span<const VeracityLabel> preds, std::span<const VeracityLabel> golds);

struct PerSourceF1 {
    std::array<double, 4> per_class{};  // indexed by label code
    double overall = 0.0;               // equals macro_scores(m).f1
};

PerSourceF1 per_source_f1(const ConfusionMatrix& m) noexcept;

/// Per generation tag, the fraction of tagged items predicted fake.
/// Untagged items are ignored. Throws NoTaggedItems / LengthMismatch.
std::map<std::string, double> detection_success_rate(std::span<const VeracityLabel> preds,
                                                     std::span<const std::optional<std::string>> tags);

/// One scored verdict as the report builder sees it.
struct ScoredItem {
    std::string id;
    VeracityLabel pred = VeracityLabel::Real;
    VeracityLabel gold = VeracityLabel::Real;
    std::optional<std::string> generation_tag;
    std::vector<std::string> flags;
};

struct EvalReport {
    std::size_t n = 0;
    Scores multiclass;
    Scores binary;
    PerSourceF1 per_source;
    std::map<std::string, double> success_rate;  // empty when no item is tagged
    ConfusionMatrix confusion;
    BinaryConfusion binary_confusion;
    std::map<std::string, std::size_t> flag_counts;
};

EvalReport build_report(std::span<const ScoredItem> items);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& doc);

/// Aligned-column tables, percentages to one decimal. With `baseline`, each
/// table gains a delta column (this run minus baseline, in points).
std::string render_text(const EvalReport& report, const EvalReport* baseline = nullptr);

/// Percent with one decimal: 0.5912 -> "59.1".
std::string percent(double rate);

}  // namespace insight::metrics
