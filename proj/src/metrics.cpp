#include "insight/metrics.hpp"

#include <omp.h>

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "insight/errors.hpp"

namespace insight::metrics {

using nlohmann::json;

namespace {

void check_lengths(std::size_t preds, std::size_t golds) {
    if (preds != golds) {
        throw LengthMismatch("got " + std::to_string(preds) + " predictions and " + std::to_string(golds) +
                             " gold labels");
    }
    if (preds == 0) throw EmptyInput("no predictions to score");
}

double safe_div(double num, double den) noexcept { return den == 0.0 ? 0.0 : num / den; }

struct ClassPR {
    double pre = 0.0;
    double rec = 0.0;
    double f1 = 0.0;
};

template <std::size_t K>
std::array<ClassPR, K> per_class(const Confusion<K>& m) noexcept {
    std::array<ClassPR, K> out{};
    for (std::size_t c = 0; c < K; ++c) {
        double tp = static_cast<double>(m.counts[c][c]);
        double predicted = 0.0;
        double actual = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            predicted += static_cast<double>(m.counts[k][c]);
            actual += static_cast<double>(m.counts[c][k]);
        }
        out[c].pre = safe_div(tp, predicted);
        out[c].rec = safe_div(tp, actual);
        out[c].f1 = safe_div(2.0 * out[c].pre * out[c].rec, out[c].pre + out[c].rec);
    }
    return out;
}

}  // namespace

ConfusionMatrix confusion_serial(std::span<const VeracityLabel> preds, std::span<const VeracityLabel> golds) {
    check_lengths(preds.size(), golds.size());
    ConfusionMatrix m;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        ++m.counts[static_cast<std::size_t>(golds[i])][static_cast<std::size_t>(preds[i])];
    }
    return m;
}

ConfusionMatrix confusion(std::span<const VeracityLabel> preds, std::span<const VeracityLabel> golds) {
    check_lengths(preds.size(), golds.size());
    ConfusionMatrix m;
    const auto n = static_cast<std::int64_t>(preds.size());
#pragma omp parallel
    {
        ConfusionMatrix local;
#pragma omp for schedule(static) nowait
        for (std::int64_t i = 0; i < n; ++i) {
            ++local.counts[static_cast<std::size_t>(golds[i])][static_cast<std::size_t>(preds[i])];
        }
#pragma omp critical(insight_confusion_merge)
        for (std::size_t g = 0; g < 4; ++g)
            for (std::size_t p = 0; p < 4; ++p) m.counts[g][p] += local.counts[g][p];
    }
    return m;
}

BinaryConfusion project_binary(const ConfusionMatrix& m) noexcept {
    BinaryConfusion b;
    for (auto g : kAllLabels) {
        for (auto p : kAllLabels) {
            b.counts[static_cast<std::size_t>(to_binary(g))][static_cast<std::size_t>(to_binary(p))] +=
                m.counts[static_cast<std::size_t>(g)][static_cast<std::size_t>(p)];
        }
    }
    return b;
}

template <std::size_t K>
MacroScores macro_scores(const Confusion<K>& m) noexcept {
    const auto pcs = per_class(m);
    MacroScores s;
    for (const auto& pc : pcs) {
        s.f1 += pc.f1;
        s.pre += pc.pre;
        s.rec += pc.rec;
    }
    s.f1 /= static_cast<double>(K);
    s.pre /= static_cast<double>(K);
    s.rec /= static_cast<double>(K);
    return s;
}

template <std::size_t K>
std::array<double, K> per_class_f1(const Confusion<K>& m) noexcept {
    const auto pcs = per_class(m);
    std::array<double, K> out{};
    for (std::size_t c = 0; c < K; ++c) out[c] = pcs[c].f1;
    return out;
}

template MacroScores macro_scores<4>(const Confusion<4>&) noexcept;
template MacroScores macro_scores<2>(const Confusion<2>&) noexcept;
template std::array<double, 4> per_class_f1<4>(const Confusion<4>&) noexcept;
template std::array<double, 2> per_class_f1<2>(const Confusion<2>&) noexcept;

Scores multiclass_report(const ConfusionMatrix& m) noexcept {
    const auto macro = macro_scores(m);
    return {macro.f1, macro.pre, macro.rec, accuracy(m)};
}

namespace {

Scores binary_scores(const BinaryConfusion& b) noexcept {
    const auto macro = macro_scores(b);
    return {macro.f1, macro.pre, macro.rec, accuracy(b)};
}

}  // namespace

Scores binary_report(std::span<const VeracityLabel> preds, std::span<const VeracityLabel> golds) {
    return binary_scores(project_binary(confusion(preds, golds)));
}

PerSourceF1 per_source_f1(const ConfusionMatrix& m) noexcept {
    PerSourceF1 out;
    out.per_class = per_class_f1(m);
    out.overall = macro_scores(m).f1;
    return out;
}

std::map<std::string, double> detection_success_rate(std::span<const VeracityLabel> preds,
                                                     std::span<const std::optional<std::string>> tags) {
    if (preds.size() != tags.size()) {
        throw LengthMismatch("got " + std::to_string(preds.size()) + " predictions and " +
                             std::to_string(tags.size()) + " tags");
    }
    std::map<std::string, std::pair<std::size_t, std::size_t>> hits;  // tag -> (fake, total)
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (!tags[i]) continue;
        auto& h = hits[*tags[i]];
        h.first += to_binary(preds[i]) == BinaryLabel::Fake ? 1 : 0;
        h.second += 1;
    }
    if (hits.empty()) throw NoTaggedItems("no item carries a generation tag");
    std::map<std::string, double> out;
    for (const auto& [tag, h] : hits) out[tag] = static_cast<double>(h.first) / static_cast<double>(h.second);
    return out;
}

EvalReport build_report(std::span<const ScoredItem> items) {
    std::vector<VeracityLabel> preds;
    std::vector<VeracityLabel> golds;
    std::vector<std::optional<std::string>> tags;
    EvalReport r;
    for (const auto& it : items) {
        preds.push_back(it.pred);
        golds.push_back(it.gold);
        tags.push_back(it.generation_tag);
        for (const auto& f : it.flags) ++r.flag_counts[f];
    }
    r.n = items.size();
    r.confusion = confusion(preds, golds);
    r.binary_confusion = project_binary(r.confusion);
    r.multiclass = multiclass_report(r.confusion);
    r.binary = binary_scores(r.binary_confusion);
    r.per_source = per_source_f1(r.confusion);
    if (std::any_of(tags.begin(), tags.end(), [](const auto& t) { return t.has_value(); })) {
        r.success_rate = detection_success_rate(preds, tags);
    }
    return r;
}

namespace {

json scores_json(const Scores& s) { return {{"f1", s.f1}, {"pre", s.pre}, {"rec", s.rec}, {"acc", s.acc}}; }

Scores scores_from(const json& j) {
    return {j.at("f1").get<double>(), j.at("pre").get<double>(), j.at("rec").get<double>(),
            j.at("acc").get<double>()};
}

template <std::size_t K>
json counts_json(const Confusion<K>& m) {
    json rows = json::array();
    for (const auto& row : m.counts) rows.push_back(row);
    return rows;
}

template <std::size_t K>
Confusion<K> counts_from(const json& j) {
    Confusion<K> m;
    for (std::size_t g = 0; g < K; ++g)
        for (std::size_t p = 0; p < K; ++p) m.counts[g][p] = j.at(g).at(p).get<std::uint64_t>();
    return m;
}

}  // namespace

json report_to_json(const EvalReport& r) {
    json per_source = json::object();
    for (auto l : kAllLabels) per_source[std::string(label_token(l))] = r.per_source.per_class[label_code(l)];
    per_source["Overall"] = r.per_source.overall;
    return {
        {"n", r.n},
        {"multiclass", scores_json(r.multiclass)},
        {"binary", scores_json(r.binary)},
        {"per_source_f1", per_source},
        {"detection_success_rate", r.success_rate},
        {"confusion", counts_json(r.confusion)},
        {"binary_confusion", counts_json(r.binary_confusion)},
        {"flags", r.flag_counts},
    };
}

EvalReport report_from_json(const json& doc) {
    EvalReport r;
    try {
        r.n = doc.at("n").get<std::size_t>();
        r.multiclass = scores_from(doc.at("multiclass"));
        r.binary = scores_from(doc.at("binary"));
        for (auto l : kAllLabels) {
            r.per_source.per_class[label_code(l)] = doc.at("per_source_f1").at(std::string(label_token(l))).get<double>();
        }
        r.per_source.overall = doc.at("per_source_f1").at("Overall").get<double>();
        r.success_rate = doc.value("detection_success_rate", std::map<std::string, double>{});
        r.confusion = counts_from<4>(doc.at("confusion"));
        r.binary_confusion = counts_from<2>(doc.at("binary_confusion"));
        r.flag_counts = doc.value("flags", std::map<std::string, std::size_t>{});
    } catch (const json::exception& e) {
        throw MissingArtifact(std::string("malformed report: ") + e.what());
    }
    return r;
}

std::string percent(double rate) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << rate * 100.0;
    return os.str();
}

namespace {

std::string signed_delta(double now, double before) {
    const double d = (now - before) * 100.0;
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << (d >= 0.0 ? "+" : "") << d;
    std::string s = os.str();
    if (s == "-0.0") s = "+0.0";
    return s;
}

struct Row {
    std::string name;
    double value;
    std::optional<double> baseline;
};

void table(std::ostringstream& os, const std::string& title, const std::vector<Row>& rows, bool with_delta) {
    os << title << '\n';
    std::size_t width = 8;
    for (const auto& r : rows) width = std::max(width, r.name.size() + 2);
    os << "  " << std::left << std::setw(static_cast<int>(width)) << "metric" << std::right << std::setw(8)
       << "value";
    if (with_delta) os << std::setw(9) << "delta";
    os << '\n';
    for (const auto& r : rows) {
        os << "  " << std::left << std::setw(static_cast<int>(width)) << r.name << std::right << std::setw(8)
           << percent(r.value);
        if (with_delta) os << std::setw(9) << (r.baseline ? signed_delta(r.value, *r.baseline) : "n/a");
        os << '\n';
    }
    os << '\n';
}

std::vector<Row> score_rows(const Scores& s, const Scores* b) {
    auto opt = [b](double Scores::*f) { return b ? std::optional<double>(b->*f) : std::nullopt; };
    return {{"F1", s.f1, opt(&Scores::f1)},
            {"Pre", s.pre, opt(&Scores::pre)},
            {"Rec", s.rec, opt(&Scores::rec)},
            {"ACC", s.acc, opt(&Scores::acc)}};
}

}  // namespace

std::string render_text(const EvalReport& r, const EvalReport* baseline) {
    std::ostringstream os;
    const bool delta = baseline != nullptr;
    os << "items: " << r.n << "\n\n";
    table(os, "Multiclass (%)", score_rows(r.multiclass, delta ? &baseline->multiclass : nullptr), delta);
    table(os, "Binary (%)", score_rows(r.binary, delta ? &baseline->binary : nullptr), delta);

    std::vector<Row> source;
    for (auto l : kAllLabels) {
        const auto i = static_cast<std::size_t>(label_code(l));
        source.push_back({std::string(label_token(l)), r.per_source.per_class[i],
                          delta ? std::optional<double>(baseline->per_source.per_class[i]) : std::nullopt});
    }
    source.push_back({"Overall", r.per_source.overall,
                      delta ? std::optional<double>(baseline->per_source.overall) : std::nullopt});
    table(os, "Per-source F1 (%)", source, delta);

    std::vector<Row> success;
    for (const auto& [tag, rate] : r.success_rate) {
        std::optional<double> b;
        if (delta) {
            if (auto it = baseline->success_rate.find(tag); it != baseline->success_rate.end()) b = it->second;
        }
        success.push_back({tag, rate, b});
    }
    if (success.empty()) {
        os << "Detection success rate (%)\n  (no tagged items)\n\n";
    } else {
        table(os, "Detection success rate (%)", success, delta);
    }

    os << "Confusion (rows = gold, cols = predicted)\n  " << std::setw(6) << "";
    for (auto l : kAllLabels) os << std::setw(6) << label_token(l);
    os << '\n';
    for (auto g : kAllLabels) {
        os << "  " << std::left << std::setw(6) << label_token(g) << std::right;
        for (auto p : kAllLabels) os << std::setw(6) << r.confusion.counts[label_code(g)][label_code(p)];
        os << '\n';
    }
    if (!r.flag_counts.empty()) {
        os << "\nFlags\n";
        for (const auto& [f, c] : r.flag_counts) os << "  " << f << ": " << c << '\n';
    }
    return os.str();
}

}  // namespace insight::metrics
