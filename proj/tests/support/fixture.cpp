#include "fixture.hpp"

#include <atomic>
#include <fstream>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "insight/cap.hpp"
#include "insight/run.hpp"

namespace insight::fixture {

using nlohmann::json;

namespace {

VeracityLabel label_of(const json& j) {
    const auto l = label_from_token(j.get<std::string>());
    if (!l) throw std::runtime_error("design sheet: bad label " + j.dump());
    return *l;
}

std::optional<std::string> opt_string(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<std::string>();
}

std::array<std::array<std::size_t, 4>, 4> matrix(const json& j) {
    std::array<std::array<std::size_t, 4>, 4> m{};
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 4; ++c) m[r][c] = j.at(r).at(c).get<std::size_t>();
    return m;
}

std::string reasoning_text(const DesignItem& item, const std::string& category) {
    const bool text = category.rfind("Text/", 0) == 0;
    const std::string what = text ? "caption" : "image";
    return "1. Examined the " + what + " of item " + item.id + " for traits of " + category + ".\n" +
           "2. Compared the observed " + what + " cues with the category definition.\n" +
           "3. Conclusion: the evidence for " + category + " is summarized above.";
}

int score_for(const DesignItem& item, const std::string& category, int which) {
    const auto slash = category.find('/');
    const auto modality = category.substr(0, slash);
    const auto kind = category.substr(slash + 1);
    const auto& table = modality == "Text" ? item.text_scores : item.image_scores;
    const auto it = table.find(kind);
    if (it == table.end()) throw std::runtime_error("design sheet: no score for " + item.id + " " + category);
    return it->second[which];
}

}  // namespace

const DesignItem& Design::item(const std::string& id) const {
    for (const auto& i : items)
        if (i.id == id) return i;
    throw std::runtime_error("design sheet: no item " + id);
}

Design load_design(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    const auto doc = json::parse(in);
    Design d;
    d.model = doc.at("model").get<std::string>();
    for (const auto& j : doc.at("items")) {
        DesignItem i;
        i.id = j.at("id").get<std::string>();
        i.label = j.at("label").get<int>();
        i.text = j.at("text").get<std::string>();
        i.generation_tag = opt_string(j, "generation_tag");
        i.gold_text_category = opt_string(j, "gold_text_category");
        i.gold_image_category = opt_string(j, "gold_image_category");
        for (const auto& [k, v] : j.at("text_scores").items()) i.text_scores[k] = {v.at(0).get<int>(), v.at(1).get<int>()};
        for (const auto& [k, v] : j.at("image_scores").items()) i.image_scores[k] = {v.at(0).get<int>(), v.at(1).get<int>()};
        i.caption = j.at("caption").get<std::string>();
        i.final_response = j.at("final").get<std::string>();
        i.final_baseline = j.at("final_baseline").get<std::string>();
        i.expected = label_of(j.at("expected"));
        i.expected_baseline = label_of(j.at("expected_baseline"));
        i.expected_text_category = j.at("expected_text_category").get<std::string>();
        i.expected_image_category = j.at("expected_image_category").get<std::string>();
        d.items.push_back(std::move(i));
    }
    d.confusion = matrix(doc.at("expected_confusion"));
    d.confusion_baseline = matrix(doc.at("expected_confusion_baseline"));
    d.success_rate = doc.at("expected_success_rate").get<std::map<std::string, double>>();
    d.success_rate_baseline = doc.at("expected_success_rate_baseline").get<std::map<std::string, double>>();
    return d;
}

backend::ScriptedBackend::Responder design_responder(const Design& design) {
    return [design](const backend::ChatRequest& req) -> std::string {
        const auto& tag = req.tag;
        if (tag.rfind("adp/", 0) == 0) {
            const auto body = req.all_text();
            const auto at = body.rfind("Input: ");
            if (at == std::string::npos) throw std::runtime_error("ADP request without input slot");
            return "\"" + body.substr(at + 7) + "\"";
        }
        const auto slash = tag.find('/');
        if (slash == std::string::npos) throw std::runtime_error("unexpected tag " + tag);
        const auto& item = design.item(tag.substr(0, slash));
        const auto stage = tag.substr(slash + 1);
        if (stage == "caption") return item.caption;
        if (stage == "final") {
            const bool full = req.all_text().find("Attribution clues:") != std::string::npos;
            return full ? item.final_response : item.final_baseline;
        }
        const auto cat_at = stage.find('/');
        const auto step = stage.substr(0, cat_at);
        const auto category = stage.substr(cat_at + 1);
        if (step == "cap.reason") return reasoning_text(item, category);
        if (step == "cap.score_r") return "SCORE: " + std::to_string(score_for(item, category, 0));
        if (step == "cap.score_p") return "SCORE: " + std::to_string(score_for(item, category, 1));
        throw std::runtime_error("unexpected tag " + tag);
    };
}

void write_dataset(const Design& design, const std::filesystem::path& root) {
    std::ofstream out(root / "test.jsonl", std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (root / "test.jsonl").string());
    for (const auto& i : design.items) {
        json line = {{"id", i.id}, {"text", i.text}, {"image_path", "images/" + i.id + ".png"}, {"label", i.label}};
        if (i.gold_text_category) line["gold_text_category"] = *i.gold_text_category;
        if (i.gold_image_category) line["gold_image_category"] = *i.gold_image_category;
        if (i.generation_tag) line["generation_tag"] = *i.generation_tag;
        out << line.dump() << '\n';
    }
}

namespace {

RunConfig common(const std::filesystem::path& root, const std::filesystem::path& scratch, const std::string& model,
                 const std::string& name) {
    RunConfig c;
    c.backend.kind = backend::BackendKind::Replay;
    c.backend.transcript_dir = root / "transcript";
    c.pipeline.model = model;
    c.adp.model = model;
    c.prompts_dir = root / "prompts";
    c.lock_path = scratch / (name + ".lock.json");
    c.dataset_root = root;
    c.split = dataset::Split::Test;
    c.output_dir = scratch / name;
    c.concurrency = 1;
    return c;
}

}  // namespace

RunConfig full_config(const std::filesystem::path& root, const std::filesystem::path& scratch) {
    return common(root, scratch, load_design(root / "design.json").model, "full");
}

RunConfig baseline_config(const std::filesystem::path& root, const std::filesystem::path& scratch) {
    auto c = common(root, scratch, load_design(root / "design.json").model, "baseline");
    c.toggles.cap = false;
    c.toggles.ic = false;
    return c;
}

std::size_t author(const std::filesystem::path& root, const std::filesystem::path& transcript_dir,
                   const std::filesystem::path& scratch) {
    const auto design = load_design(root / "design.json");
    write_dataset(design, root);
    std::filesystem::remove_all(transcript_dir);
    std::filesystem::create_directories(transcript_dir);
    auto scripted = std::make_shared<backend::ScriptedBackend>(design_responder(design));
    auto recorder = std::make_shared<backend::RecordingBackend>(scripted, transcript_dir);
    for (auto config : {full_config(root, scratch), baseline_config(root, scratch)}) {
        config.lock_path = scratch / "author.lock.json";
        std::filesystem::remove(config.lock_path);
        execute_run(config, recorder);
    }
    return backend::count_entries(transcript_dir);
}

std::filesystem::path temp_dir(const std::string& stem) {
    static std::atomic<unsigned> counter{0};
    std::random_device rd;
    const auto dir = std::filesystem::temp_directory_path() /
                     (stem + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace insight::fixture
