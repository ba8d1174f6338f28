#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "fixture.hpp"
#include "helpers.hpp"
#include "insight/dataset.hpp"
#include "insight/errors.hpp"

using namespace insight;
using namespace insight::dataset;

namespace {

class DatasetDir : public ::testing::Test {
protected:
    void SetUp() override { dir = fixture::temp_dir("dataset"); }
    void TearDown() override { std::filesystem::remove_all(dir); }

    void write(const std::string& jsonl, Split split = Split::Test) {
        std::ofstream(dir / (std::string(split_name(split)) + ".jsonl")) << jsonl;
    }

    std::filesystem::path dir;
};

std::string record(const std::string& id, int label, const std::string& extra = "") {
    return R"({"id":")" + id + R"(","text":"caption )" + id + R"(","image_path":"img/)" + id + R"(.png","label":)" +
           std::to_string(label) + extra + "}\n";
}

}  // namespace

TEST_F(DatasetDir, LoadsInFileOrder) {
    testkit::write_png(dir / "img" / "b.png", "b");
    testkit::write_png(dir / "img" / "a.png", "a");
    write(record("b", 2, R"(,"generation_tag":"largemodel","gold_image_category":"image/largemodel")") + "\n" +
          record("a", 0));
    const auto items = load_dataset(dir, Split::Test);
    ASSERT_EQ(items.size(), 2u);
    EXPECT_EQ(items[0].id(), "b");
    EXPECT_EQ(items[0].gold_label(), VeracityLabel::VVD);
    EXPECT_EQ(items[0].generation_tag(), "largemodel");
    EXPECT_EQ(items[0].gold_attribution().image->name(), "Image/Largemodel");
    EXPECT_FALSE(items[0].gold_attribution().text);
    EXPECT_EQ(items[1].caption(), "caption a");
}

TEST_F(DatasetDir, LabelOutOfRangeNamesLine) {
    write(record("a", 0) + record("b", 1) + record("c", 5));
    try {
        load_records(dir / "test.jsonl");
        FAIL();
    } catch (const SchemaError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_EQ(e.exit_code(), 3);
    }
}

TEST_F(DatasetDir, SchemaViolations) {
    const std::vector<std::string> bad = {
        R"({"text":"t","image_path":"a.png","label":0})",
        R"({"id":"a","image_path":"a.png","label":0})",
        R"({"id":"a","text":"t","label":0})",
        R"({"id":"a","text":"t","image_path":"a.png"})",
        R"({"id":"a","text":"t","image_path":"a.png","label":"0"})",
        R"({"id":"a","text":"t","image_path":"a.png","label":-1})",
        R"({"id":"a","text":"t","image_path":"/etc/passwd","label":0})",
        R"({"id":"a","text":"t","image_path":"../up.png","label":0})",
        R"({"id":"a","text":"t","image_path":"a.png","label":0,"gold_image_category":"Image/Smallmodel"})",
        R"({"id":"a","text":"t","image_path":"a.png","label":0,"gold_text_category":"Image/Largemodel"})",
        R"({"id":"a","text":"t","image_path":"a.png","label":0,"generation_tag":3})",
        R"(not json)",
    };
    for (const auto& line : bad) {
        SCOPED_TRACE(line);
        write(line + "\n");
        EXPECT_THROW(load_records(dir / "test.jsonl"), SchemaError);
    }
}

TEST_F(DatasetDir, DuplicateIds) {
    write(record("a", 0) + record("a", 1));
    EXPECT_THROW(load_records(dir / "test.jsonl"), SchemaError);
}

TEST_F(DatasetDir, DanglingImageNamesRecord) {
    testkit::write_png(dir / "img" / "a.png");
    write(record("a", 0) + record("ghost", 1));
    try {
        load_dataset(dir, Split::Test);
        FAIL();
    } catch (const MissingImage& e) {
        EXPECT_EQ(e.id(), "ghost");
    }
    std::ofstream(dir / "img" / "ghost.png") << "plain text";
    EXPECT_THROW(load_dataset(dir, Split::Test), MissingImage);
}

TEST_F(DatasetDir, MissingSplitFile) {
    EXPECT_THROW(load_dataset(dir, Split::Validation), IoError);
}

TEST_F(DatasetDir, RecordRoundTrip) {
    testkit::write_png(dir / "img" / "a.png");
    write(record("a", 3, R"(,"gold_text_category":"Text/Smallmodel")"));
    const auto rec = load_records(dir / "test.jsonl").at(0);
    const auto item = to_news_item(rec, dir);
    const auto back = to_record(item, dir);
    EXPECT_EQ(record_to_json(back), record_to_json(rec));
}

TEST(Sampling, StratifiedIsDeterministicAndBalanced) {
    std::vector<NewsItem> items;
    for (int i = 0; i < 40; ++i) {
        items.emplace_back("i" + std::to_string(i), "c", "x.png", static_cast<VeracityLabel>(i % 4));
    }
    const auto a = sample_stratified(items, 3, 42);
    const auto b = sample_stratified(items, 3, 42);
    ASSERT_EQ(a.size(), 12u);
    std::array<int, 4> per{};
    std::vector<std::string> ids_a, ids_b;
    for (const auto& it : a) {
        ++per[static_cast<std::size_t>(*it.gold_label())];
        ids_a.push_back(it.id());
    }
    for (const auto& it : b) ids_b.push_back(it.id());
    EXPECT_EQ(ids_a, ids_b);
    EXPECT_EQ(per, (std::array<int, 4>{3, 3, 3, 3}));
    // Original order is preserved.
    for (std::size_t k = 1; k < a.size(); ++k) {
        EXPECT_LT(std::stoi(a[k - 1].id().substr(1)), std::stoi(a[k].id().substr(1)));
    }
    std::set<std::vector<std::string>> distinct;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::vector<std::string> ids;
        for (const auto& it : sample_stratified(items, 3, seed)) ids.push_back(it.id());
        distinct.insert(ids);
    }
    EXPECT_GT(distinct.size(), 1u);
    EXPECT_THROW(sample_stratified(items, 11, 0), InsufficientClass);
    EXPECT_THROW(sample_stratified(items, 0, 0), PreconditionError);
}

TEST(Splits, Names) {
    EXPECT_EQ(split_from_name("validation"), Split::Validation);
    EXPECT_EQ(split_name(Split::Test), "test");
    EXPECT_THROW(split_from_name("train"), ConfigError);
}
