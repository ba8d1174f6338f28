#include <gtest/gtest.h>

#include <fstream>
#include <mutex>
#include <random>
#include <thread>
#include <unordered_set>

#include "fixture.hpp"
#include "helpers.hpp"
#include "insight/backend.hpp"
#include "insight/errors.hpp"
#include "mock_openai.hpp"

using namespace insight;
using namespace insight::backend;

namespace {

ChatRequest simple(const std::string& text, const std::string& tag = "t") {
    ChatRequest r;
    r.model = "m";
    r.tag = tag;
    r.messages.push_back({Role::User, text, std::nullopt});
    return r;
}

class TempDir : public ::testing::Test {
protected:
    void SetUp() override { dir = fixture::temp_dir("backend"); }
    void TearDown() override { std::filesystem::remove_all(dir); }
    std::filesystem::path dir;
};

struct FakeTransport {
    std::vector<HttpResult> script;
    std::shared_ptr<std::atomic<int>> calls = std::make_shared<std::atomic<int>>(0);
    bool throw_network = false;

    Transport make() {
        auto s = std::make_shared<std::vector<HttpResult>>(script);
        auto c = calls;
        const bool net = throw_network;
        return [s, c, net](const std::string&, const std::map<std::string, std::string>&, const std::string&) {
            const int i = c->fetch_add(1);
            if (net && i == 0) throw NetworkError("connection refused");
            return (*s)[std::min<std::size_t>(i, s->size() - 1)];
        };
    }
};

LiveOptions fast_options() {
    LiveOptions o;
    o.endpoint = "http://example.invalid";
    o.retry.max_attempts = 3;
    o.retry.backoff_base = std::chrono::milliseconds(1);
    return o;
}

}  // namespace

TEST(CacheKey, IgnoresTag) {
    EXPECT_EQ(cache_key(simple("x", "a/cap")), cache_key(simple("x", "b/final")));
}

TEST(CacheKey, EveryFieldMatters) {
    const auto base = simple("hello");
    const auto k = cache_key(base);
    auto r = base;
    r.model = "other";
    EXPECT_NE(cache_key(r), k);
    r = base;
    r.temperature = 0.5;
    EXPECT_NE(cache_key(r), k);
    r = base;
    r.max_tokens = 10;
    EXPECT_NE(cache_key(r), k);
    r = base;
    r.messages[0].role = Role::System;
    EXPECT_NE(cache_key(r), k);
    r = base;
    r.messages[0].text = "hello ";
    EXPECT_NE(cache_key(r), k);
    r = base;
    r.messages[0].image = ImageAttachment::from_bytes("\x89PNG", "image/png");
    EXPECT_NE(cache_key(r), k);
    auto r2 = r;
    r2.messages[0].image = ImageAttachment::from_bytes("\x89PNG2", "image/png");
    EXPECT_NE(cache_key(r2), cache_key(r));
}

TEST(CacheKey, NoCollisionsUnderPerturbation) {
    std::mt19937_64 rng(5);
    std::unordered_set<std::string> canon;
    std::unordered_set<std::string> keys;
    const auto base = simple("The quick brown fox");
    for (int i = 0; i < 10000; ++i) {
        auto r = base;
        switch (rng() % 5) {
            case 0: r.messages[0].text += std::to_string(rng()); break;
            case 1: r.model += std::to_string(rng() % 100000); break;
            case 2: r.temperature = static_cast<double>(rng() % 100000) / 1000.0; break;
            case 3: r.max_tokens = 1 + static_cast<int>(rng() % 100000); break;
            default: r.messages.push_back({Role::User, std::to_string(rng()), std::nullopt}); break;
        }
        r.tag = std::to_string(rng());
        const auto c = canonical_serialization(r);
        const auto k = cache_key(r);
        EXPECT_EQ(canon.insert(c).second, keys.insert(k).second);
    }
    EXPECT_EQ(canon.size(), keys.size());
}

TEST(CacheKey, CanonicalFormIsSortedAndHasNoTag) {
    auto r = simple("x", "secret-tag");
    const auto c = canonical_serialization(r);
    EXPECT_EQ(c.find("secret-tag"), std::string::npos);
    EXPECT_LT(c.find("\"max_tokens\""), c.find("\"messages\""));
    EXPECT_LT(c.find("\"messages\""), c.find("\"model\""));
    EXPECT_LT(c.find("\"model\""), c.find("\"temperature\""));
}

TEST(Requests, Validation) {
    ChatRequest r;
    EXPECT_THROW(r.validate(), PreconditionError);
    r = simple("x");
    r.max_tokens = 0;
    EXPECT_THROW(r.validate(), PreconditionError);
    r = simple("x");
    r.temperature = -1;
    EXPECT_THROW(r.validate(), PreconditionError);
    r = simple("x");
    r.messages[0].image = ImageAttachment::from_bytes("a", "image/png");
    r.messages.push_back({Role::User, "y", ImageAttachment::from_bytes("b", "image/png")});
    EXPECT_THROW(r.validate(), PreconditionError);
}

TEST_F(TempDir, EntryFanOutAndRoundTrip) {
    const auto e = make_entry(simple("x"), ChatResponse{"answer", FinishReason::Length, {}, false});
    EXPECT_EQ(entry_path(dir, e.key), dir / e.key.substr(0, 2) / e.key.substr(2, 2) / (e.key + ".json"));
    write_entry(dir, e);
    const auto back = read_entry(dir, e.key);
    ASSERT_TRUE(back);
    EXPECT_EQ(back->response_text, "answer");
    EXPECT_EQ(back->finish_reason, FinishReason::Length);
    EXPECT_EQ(back->request_canonical, e.request_canonical);
    EXPECT_FALSE(read_entry(dir, std::string(64, 'a')));
    EXPECT_EQ(count_entries(dir), 1u);
    clear_entries(dir);
    EXPECT_EQ(count_entries(dir), 0u);
}

TEST_F(TempDir, CorruptEntriesAreRejected) {
    const auto e = make_entry(simple("x"), ChatResponse{"answer", FinishReason::Stop, {}, false});
    write_entry(dir, e);
    const auto path = entry_path(dir, e.key);
    std::string text;
    {
        std::ifstream in(path);
        text.assign(std::istreambuf_iterator<char>(in), {});
    }
    const auto tamper = [&](const std::string& content) {
        std::ofstream out(path, std::ios::trunc);
        out << content;
    };
    auto changed = text;
    changed.replace(changed.find("\"answer\""), 8, "\"answeR\"");
    tamper(changed);
    EXPECT_THROW(read_entry(dir, e.key), CorruptTranscript);
    tamper("{not json");
    EXPECT_THROW(read_entry(dir, e.key), CorruptTranscript);
    EXPECT_THROW(load_transcript(dir), CorruptTranscript);
    tamper("{\"key\": 1}");
    EXPECT_THROW(read_entry(dir, e.key), CorruptTranscript);

    // Valid content stored under the wrong name.
    tamper(text);
    const auto other = dir / "zz" / "zz" / (std::string(64, 'z') + ".json");
    std::filesystem::create_directories(other.parent_path());
    std::filesystem::copy_file(path, other);
    EXPECT_THROW(load_transcript(dir), CorruptTranscript);
}

TEST(Transcripts, MissingDirectory) {
    EXPECT_THROW(load_transcript("/nonexistent/transcript"), IoError);
    EXPECT_THROW(ReplayBackend::from_dir("/nonexistent/transcript"), IoError);
}

TEST_F(TempDir, ReplayHitAndMiss) {
    const auto req = simple("q");
    write_entry(dir, make_entry(req, ChatResponse{"a", FinishReason::Stop, {}, false}));
    auto replay = ReplayBackend::from_dir(dir);
    const auto r = replay->complete(req);
    EXPECT_EQ(r.text, "a");
    EXPECT_FALSE(r.from_cache);
    EXPECT_EQ(replay->network_calls(), 0u);
    try {
        replay->complete(simple("other"));
        FAIL() << "expected ReplayMiss";
    } catch (const ReplayMiss& e) {
        EXPECT_EQ(e.key(), cache_key(simple("other")));
    }
    EXPECT_EQ(replay->lookups(), 2u);
}

TEST_F(TempDir, CachingSecondCallIsHit) {
    std::shared_ptr<ScriptedBackend> inner = ScriptedBackend::constant("v");
    CachingBackend cache(inner, dir);
    EXPECT_FALSE(cache.complete(simple("q")).from_cache);
    const auto second = cache.complete(simple("q", "different-tag"));
    EXPECT_TRUE(second.from_cache);
    EXPECT_EQ(second.text, "v");
    EXPECT_EQ(inner->calls(), 1u);
    EXPECT_EQ(cache.hits(), 1u);
    EXPECT_EQ(cache.misses(), 1u);
}

namespace {

class ErrorBackend final : public Backend {
public:
    ChatResponse complete(const ChatRequest&) override {
        ++calls;
        return ChatResponse{"", FinishReason::Error, {}, false};
    }
    int calls = 0;
};

}  // namespace

TEST_F(TempDir, ErrorResponsesAreNotCached) {
    auto inner = std::make_shared<ErrorBackend>();
    CachingBackend cache(inner, dir);
    cache.complete(simple("q"));
    cache.complete(simple("q"));
    EXPECT_EQ(inner->calls, 2);
    EXPECT_EQ(count_entries(dir), 0u);
}

TEST_F(TempDir, ConcurrentWritersConverge) {
    std::shared_ptr<ScriptedBackend> inner = std::make_shared<ScriptedBackend>(
        [](const ChatRequest& r) { return "reply:" + r.messages[0].text; }, std::chrono::milliseconds(2));
    CachingBackend cache(inner, dir);
    std::vector<std::thread> threads;
    std::mutex mu;
    std::vector<std::string> seen;
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&, t] {
            for (int i = 0; i < 20; ++i) {
                const auto r = cache.complete(simple("k" + std::to_string(i % 5)));
                std::lock_guard lock(mu);
                seen.push_back(r.text);
                (void)t;
            }
        });
    }
    for (auto& th : threads) th.join();
    EXPECT_EQ(count_entries(dir), 5u);
    for (const auto& s : seen) EXPECT_EQ(s.rfind("reply:k", 0), 0u);
    const auto all = load_transcript(dir);
    EXPECT_EQ(all.size(), 5u);
    for (const auto& de : std::filesystem::recursive_directory_iterator(dir)) {
        if (de.is_regular_file()) EXPECT_EQ(de.path().extension(), ".json") << de.path();
    }
}

TEST_F(TempDir, RecordingWritesEveryResponse) {
    std::shared_ptr<Backend> inner = ScriptedBackend::constant("z");
    RecordingBackend rec(inner, dir);
    rec.complete(simple("a"));
    rec.complete(simple("b"));
    rec.complete(simple("a"));
    EXPECT_EQ(count_entries(dir), 2u);
}

TEST(Logging, RecordsTagsAndKeys) {
    auto log = std::make_shared<CallLog>();
    LoggingBackend be(ScriptedBackend::constant("x"), log);
    be.complete(simple("q", "i1/final"));
    ASSERT_EQ(log->size(), 1u);
    EXPECT_EQ(log->snapshot()[0].tag, "i1/final");
    EXPECT_EQ(log->snapshot()[0].key, cache_key(simple("q")));
}

TEST_F(TempDir, ScriptedRulesFile) {
    {
        std::ofstream out(dir / "rules.json");
        out << R"({"default": "REAL", "rules": [{"tag": "score", "response": "SCORE: 40"},
                  {"contains": "penguin", "response": "TVD"}]})";
    }
    auto be = ScriptedBackend::from_rules_file(dir / "rules.json");
    EXPECT_EQ(be->complete(simple("x", "a/cap.score_r/Text/Largemodel")).text, "SCORE: 40");
    EXPECT_EQ(be->complete(simple("a penguin", "a/final")).text, "TVD");
    EXPECT_EQ(be->complete(simple("other", "a/final")).text, "REAL");
    EXPECT_THROW(ScriptedBackend::from_rules_file(dir / "missing.json"), ConfigError);
}

TEST(Wire, RequestShape) {
    auto r = simple("describe");
    r.messages[0].image = ImageAttachment::from_bytes("abc", "image/png");
    const auto body = nlohmann::json::parse(to_wire_json(r));
    EXPECT_EQ(body["stream"], false);
    EXPECT_EQ(body["model"], "m");
    EXPECT_EQ(body["max_tokens"], 1024);
    const auto& parts = body["messages"][0]["content"];
    ASSERT_TRUE(parts.is_array());
    EXPECT_EQ(parts[1]["image_url"]["url"], "data:image/png;base64,YWJj");
}

TEST(Wire, ResponseParsing) {
    EXPECT_EQ(parse_wire_response(testkit::openai_reply("hi")).text, "hi");
    EXPECT_EQ(parse_wire_response(testkit::openai_reply("hi", "length")).finish_reason, FinishReason::Length);
    EXPECT_THROW(parse_wire_response("nope"), ProtocolError);
    EXPECT_THROW(parse_wire_response("{}"), ProtocolError);
    EXPECT_THROW(parse_wire_response(R"({"choices": []})"), ProtocolError);
    EXPECT_THROW(parse_wire_response(R"({"choices": [{"finish_reason": "stop"}]})"), ProtocolError);
    EXPECT_EQ(parse_wire_response(R"({"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]})")
                  .text,
              "ab");
}

TEST(Live, UrlNormalisation) {
    FakeTransport f{{{200, testkit::openai_reply("x")}}};
    auto o = fast_options();
    for (const auto& [endpoint, url] : std::vector<std::pair<std::string, std::string>>{
             {"http://h:1", "http://h:1/v1/chat/completions"},
             {"http://h:1/", "http://h:1/v1/chat/completions"},
             {"http://h:1/v1", "http://h:1/v1/chat/completions"},
             {"http://h:1/v1/chat/completions", "http://h:1/v1/chat/completions"}}) {
        o.endpoint = endpoint;
        EXPECT_EQ(LiveBackend(o, f.make()).url(), url);
    }
    o.endpoint = "";
    EXPECT_THROW(LiveBackend(o, f.make()), ConfigError);
}

TEST(Live, RetriesTransientThenSucceeds) {
    FakeTransport f{{{503, ""}, {429, ""}, {200, testkit::openai_reply("ok")}}};
    LiveBackend be(fast_options(), f.make());
    EXPECT_EQ(be.complete(simple("q")).text, "ok");
    EXPECT_EQ(f.calls->load(), 3);
    EXPECT_EQ(be.network_calls(), 3u);
}

TEST(Live, GivesUpAfterMaxAttempts) {
    FakeTransport f{{{500, ""}}};
    LiveBackend be(fast_options(), f.make());
    EXPECT_THROW(be.complete(simple("q")), NetworkError);
    EXPECT_EQ(f.calls->load(), 3);
}

TEST(Live, NetworkFailureIsRetried) {
    FakeTransport f{{{200, testkit::openai_reply("ok")}}};
    f.throw_network = true;
    LiveBackend be(fast_options(), f.make());
    EXPECT_EQ(be.complete(simple("q")).text, "ok");
    EXPECT_EQ(f.calls->load(), 2);
}

TEST(Live, AuthAndProtocolErrorsAreNotRetried) {
    for (int status : {401, 403}) {
        FakeTransport f{{{status, ""}}};
        LiveBackend be(fast_options(), f.make());
        EXPECT_THROW(be.complete(simple("q")), AuthError);
        EXPECT_EQ(f.calls->load(), 1);
    }
    FakeTransport bad{{{400, "bad request"}}};
    LiveBackend be(fast_options(), bad.make());
    EXPECT_THROW(be.complete(simple("q")), ProtocolError);
    EXPECT_EQ(bad.calls->load(), 1);
    FakeTransport garbage{{{200, "<html>"}}};
    LiveBackend be2(fast_options(), garbage.make());
    EXPECT_THROW(be2.complete(simple("q")), ProtocolError);
    EXPECT_EQ(garbage.calls->load(), 1);
}

TEST(Live, InFlightIsBounded) {
    auto current = std::make_shared<std::atomic<int>>(0);
    auto peak = std::make_shared<std::atomic<int>>(0);
    Transport t = [current, peak](const std::string&, const std::map<std::string, std::string>&, const std::string&) {
        const int now = current->fetch_add(1) + 1;
        int p = peak->load();
        while (now > p && !peak->compare_exchange_weak(p, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        current->fetch_sub(1);
        return HttpResult{200, testkit::openai_reply("x")};
    };
    auto o = fast_options();
    o.max_in_flight = 2;
    LiveBackend be(o, t);
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&] { be.complete(simple("q")); });
    for (auto& th : threads) th.join();
    EXPECT_LE(peak->load(), 2);
    EXPECT_EQ(be.network_calls(), 8u);
}

TEST(Live, AgainstLocalHttpServer) {
    auto failures = std::make_shared<std::atomic<int>>(1);
    auto auth = std::make_shared<std::string>();
    testkit::MockOpenAI server([failures, auth](const nlohmann::json& body, const std::map<std::string, std::string>& h) {
        if (failures->fetch_sub(1) > 0) return testkit::MockOpenAI::Reply{502, "upstream"};
        if (auto it = h.find("Authorization"); it != h.end()) *auth = it->second;
        return testkit::MockOpenAI::Reply{200, testkit::openai_reply("echo:" + body["model"].get<std::string>())};
    });
    auto o = fast_options();
    o.endpoint = server.base_url();
    o.api_key = "sk-test";
    LiveBackend be(o, make_http_transport(std::chrono::seconds(5)));
    EXPECT_EQ(be.complete(simple("q")).text, "echo:m");
    EXPECT_EQ(*auth, "Bearer sk-test");
    EXPECT_EQ(server.requests(), 2u);
}

TEST(Live, UnreachableEndpointIsNetworkError) {
    auto o = fast_options();
    o.endpoint = "http://127.0.0.1:1";
    o.retry.max_attempts = 2;
    LiveBackend be(o, make_http_transport(std::chrono::seconds(2)));
    EXPECT_THROW(be.complete(simple("q")), NetworkError);
    EXPECT_EQ(be.network_calls(), 2u);
}

TEST(Factory, ValidationAndAuth) {
    BackendConfig c;
    c.kind = BackendKind::Live;
    EXPECT_THROW(make_backend(c), ConfigError);
    c.endpoint = "http://127.0.0.1:1";
    c.api_key_env = "INSIGHT_TEST_KEY_THAT_IS_NOT_SET";
    EXPECT_THROW(make_backend(c), AuthError);
    c = BackendConfig{};
    EXPECT_THROW(make_backend(c), ConfigError);
    c.transcript_dir = "/nonexistent";
    EXPECT_THROW(make_backend(c), IoError);
    c.transcript_dir = testkit::fixture_dir() / "transcript";
    EXPECT_NO_THROW(make_backend(c));
    EXPECT_EQ(backend_kind_from_name("scripted"), BackendKind::Scripted);
    EXPECT_THROW(backend_kind_from_name("grpc"), ConfigError);
}
