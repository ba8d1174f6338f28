#include "insight/dataset.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <random>
#include <set>

#include "insight/errors.hpp"

namespace insight::dataset {

using nlohmann::json;

std::string_view split_name(Split split) noexcept {
    return split == Split::Validation ? "validation" : "test";
}

Split split_from_name(std::string_view name) {
    if (name == "validation") return Split::Validation;
    if (name == "test") return Split::Test;
    throw ConfigError("unknown split '" + std::string(name) + "' (expected validation or test)");
}

namespace {

std::string required_string(const json& doc, const char* field, std::size_t line) {
    if (!doc.contains(field)) throw SchemaError(line, std::string("missing field '") + field + "'");
    if (!doc[field].is_string()) throw SchemaError(line, std::string("field '") + field + "' must be a string");
    return doc[field].get<std::string>();
}

std::optional<GenerationCategory> optional_category(const json& doc, const char* field, Modality modality,
                                                    std::size_t line) {
    if (!doc.contains(field) || doc[field].is_null()) return std::nullopt;
    if (!doc[field].is_string()) throw SchemaError(line, std::string("field '") + field + "' must be a string");
    try {
        auto c = GenerationCategory::parse(doc[field].get<std::string>());
        if (c.modality() != modality) {
            throw SchemaError(line, std::string("field '") + field + "' has the wrong modality");
        }
        return c;
    } catch (const InvalidCategory& e) {
        throw SchemaError(line, std::string("field '") + field + "': " + e.what());
    }
}

bool escapes_root(const std::filesystem::path& rel) {
    if (rel.is_absolute() || rel.has_root_name()) return true;
    int depth = 0;
    for (const auto& part : rel.lexically_normal()) {
        if (part == "..") {
            if (--depth < 0) return true;
        } else if (part != ".") {
            ++depth;
        }
    }
    return false;
}

}  // namespace

DatasetRecord parse_record(const json& doc, std::size_t line) {
    if (!doc.is_object()) throw SchemaError(line, "record must be a JSON object");
    DatasetRecord r;
    r.id = required_string(doc, "id", line);
    if (r.id.empty()) throw SchemaError(line, "id must be non-empty");
    r.text = required_string(doc, "text", line);
    if (trim(r.text).empty()) throw SchemaError(line, "text must be non-blank");
    r.image_path = required_string(doc, "image_path", line);
    if (r.image_path.empty() || escapes_root(r.image_path)) {
        throw SchemaError(line, "image_path must be a relative path under the dataset root");
    }
    if (!doc.contains("label")) throw SchemaError(line, "missing field 'label'");
    if (!doc["label"].is_number_integer()) throw SchemaError(line, "label must be an integer");
    const auto label = doc["label"].get<std::int64_t>();
    if (label < 0 || label > 3) throw SchemaError(line, "label " + std::to_string(label) + " outside 0..3");
    r.label = static_cast<int>(label);
    r.gold_text_category = optional_category(doc, "gold_text_category", Modality::Text, line);
    r.gold_image_category = optional_category(doc, "gold_image_category", Modality::Image, line);
    if (doc.contains("generation_tag") && !doc["generation_tag"].is_null()) {
        if (!doc["generation_tag"].is_string()) throw SchemaError(line, "generation_tag must be a string");
        r.generation_tag = doc["generation_tag"].get<std::string>();
    }
    return r;
}

json record_to_json(const DatasetRecord& r) {
    json doc = {{"id", r.id}, {"text", r.text}, {"image_path", r.image_path}, {"label", r.label}};
    if (r.gold_text_category) doc["gold_text_category"] = r.gold_text_category->name();
    if (r.gold_image_category) doc["gold_image_category"] = r.gold_image_category->name();
    if (r.generation_tag) doc["generation_tag"] = *r.generation_tag;
    return doc;
}

NewsItem to_news_item(const DatasetRecord& r, const std::filesystem::path& root) {
    NewsItem item(r.id, r.text, root / r.image_path, label_from_code(r.label));
    if (r.gold_text_category || r.gold_image_category) {
        item.with_gold_attribution({r.gold_text_category, r.gold_image_category});
    }
    if (r.generation_tag) item.with_generation_tag(*r.generation_tag);
    return item;
}

DatasetRecord to_record(const NewsItem& item, const std::filesystem::path& root) {
    DatasetRecord r;
    r.id = item.id();
    r.text = item.caption();
    r.image_path = item.image().path().lexically_relative(root).generic_string();
    r.label = item.gold_label() ? label_code(*item.gold_label()) : 0;
    r.gold_text_category = item.gold_attribution().text;
    r.gold_image_category = item.gold_attribution().image;
    r.generation_tag = item.generation_tag();
    return r;
}

std::vector<DatasetRecord> load_records(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read dataset file " + path.string());
    std::vector<DatasetRecord> out;
    std::set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::exception& e) {
            throw SchemaError(line_no, std::string("invalid JSON: ") + e.what());
        }
        auto rec = parse_record(doc, line_no);
        if (!ids.insert(rec.id).second) throw SchemaError(line_no, "duplicate id '" + rec.id + "'");
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<NewsItem> load_dataset(const std::filesystem::path& root, Split split) {
    const auto records = load_records(root / (std::string(split_name(split)) + ".jsonl"));
    std::vector<NewsItem> items;
    items.reserve(records.size());
    for (const auto& r : records) {
        const auto image = root / r.image_path;
        std::ifstream in(image, std::ios::binary);
        if (!in) throw MissingImage(r.id, "image " + image.string() + " not found");
        std::array<char, 16> header{};
        in.read(header.data(), header.size());
        if (!sniff_image_format(std::string_view(header.data(), static_cast<std::size_t>(in.gcount())))) {
            throw MissingImage(r.id, "image " + image.string() + " is not a recognised image format");
        }
        items.push_back(to_news_item(r, root));
    }
    return items;
}

std::vector<NewsItem> sample_stratified(const std::vector<NewsItem>& items, int per_class,
                                        std::uint64_t seed) {
    if (per_class <= 0) throw PreconditionError("per_class must be positive");
    std::array<std::vector<std::size_t>, 4> by_class;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& gold = items[i].gold_label();
        if (!gold) throw PreconditionError("item '" + items[i].id() + "' has no gold label");
        by_class[static_cast<std::size_t>(label_code(*gold))].push_back(i);
    }
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> chosen;
    for (auto label : kAllLabels) {
        auto& pool = by_class[static_cast<std::size_t>(label_code(label))];
        if (pool.size() < static_cast<std::size_t>(per_class)) {
            throw InsufficientClass("class " + std::string(label_token(label)) + " has " +
                                    std::to_string(pool.size()) + " items, need " + std::to_string(per_class));
        }
        // Partial Fisher-Yates with raw engine output; std::uniform_int_distribution
        // is not portable across standard libraries.
        for (std::size_t k = 0; k < static_cast<std::size_t>(per_class); ++k) {
            const std::size_t j = k + static_cast<std::size_t>(rng() % (pool.size() - k));
            std::swap(pool[k], pool[j]);
            chosen.push_back(pool[k]);
        }
    }
    std::sort(chosen.begin(), chosen.end());
    std::vector<NewsItem> out;
    out.reserve(chosen.size());
    for (auto i : chosen) out.push_back(items[i]);
    return out;
}

}  // namespace insight::dataset
