#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

namespace insight::testkit {

/// Chat-completions body carrying `text` as the first choice.
std::string openai_reply(const std::string& text, const std::string& finish_reason = "stop");

/// Local OpenAI-compatible HTTP server on 127.0.0.1 and an ephemeral port.
class MockOpenAI {
public:
    struct Reply {
        int status = 200;
        std::string body;
    };
    /// Receives the parsed request body and its headers.
    using Handler = std::function<Reply(const nlohmann::json& body, const std::map<std::string, std::string>& headers)>;

    explicit MockOpenAI(Handler handler);
    ~MockOpenAI();
    MockOpenAI(const MockOpenAI&) = delete;
    MockOpenAI& operator=(const MockOpenAI&) = delete;

    std::string base_url() const;
    std::uint64_t requests() const noexcept { return requests_.load(); }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::atomic<std::uint64_t> requests_{0};
};

/// Answers any pipeline request with plausible, well-formed text so a live
/// run completes: scores, numbered reasoning, captions and a label.
MockOpenAI::Handler generic_handler();

}  // namespace insight::testkit
