#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "insight/core.hpp"

namespace insight::dataset {

enum class Split { Validation, Test };

std::string_view split_name(Split split) noexcept;
Split split_from_name(std::string_view name);

/// One line of `<split>.jsonl`.
struct DatasetRecord {
    std::string id;
    std::string text;
    std::string image_path;  // relative to the dataset root
    int label = 0;
    std::optional<GenerationCategory> gold_text_category;
    std::optional<GenerationCategory> gold_image_category;
    std::optional<std::string> generation_tag;
};

/// Throws SchemaError naming `line` for missing fields, wrong types, labels
/// outside 0..3, absolute or escaping image paths and invalid categories.
DatasetRecord parse_record(const nlohmann::json& doc, std::size_t line);
nlohmann::json record_to_json(const DatasetRecord& record);

NewsItem to_news_item(const DatasetRecord& record, const std::filesystem::path& root);
DatasetRecord to_record(const NewsItem& item, const std::filesystem::path& root);

/// Loads and validates `<root>/<split>.jsonl`, preserving file order. Image
/// files are checked by header sniff only.
std::vector<NewsItem> load_dataset(const std::filesystem::path& root, Split split);
std::vector<DatasetRecord> load_records(const std::filesystem::path& path);

/// Exactly `per_class` items from each of the four classes, deterministic
/// for a given seed, returned in original order.
std::vector<NewsItem> sample_stratified(const std::vector<NewsItem>& items, int per_class,
                                        std::uint64_t seed);

}  // namespace insight::dataset
