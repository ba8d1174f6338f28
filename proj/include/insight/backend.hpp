#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

#include "insight/core.hpp"

namespace insight::backend {

enum class Role { System, User };

std::string_view role_name(Role role) noexcept;

/// Image payload attached to a message. The base64 body is shared, never
/// copied, and only the digest takes part in cache keys.
struct ImageAttachment {
    std::string media_type;
    std::string digest;
    std::shared_ptr<const std::string> base64;

    static ImageAttachment from_image(const std::shared_ptr<const ImageRef>& image);
    static ImageAttachment from_bytes(std::string_view bytes, std::string media_type);
};

struct ChatMessage {
    Role role = Role::User;
    std::string text;
    std::optional<ImageAttachment> image;
};

inline constexpr double kDefaultTemperature = 0.0;
inline constexpr int kDefaultMaxTokens = 1024;

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = kDefaultTemperature;
    int max_tokens = kDefaultMaxTokens;
    /// Names the pipeline stage that issued the request. Never part of the key.
    std::string tag;

    /// Throws PreconditionError on an empty model, no messages, negative
    /// temperature, non-positive max_tokens or more than one image.
    void validate() const;
    const ImageAttachment* image() const noexcept;
    /// Concatenated message texts, for content assertions.
    std::string all_text() const;
};

/// Byte-stable JSON serialization: model, roles, texts, image digests,
/// temperature and max_tokens. Keys sorted, no whitespace.
std::string canonical_serialization(const ChatRequest& request);

/// SHA-256 hex of canonical_serialization().
std::string cache_key(const ChatRequest& request);

enum class FinishReason { Stop, Length, Error };

std::string_view finish_reason_name(FinishReason r) noexcept;
FinishReason finish_reason_from_name(std::string_view name);

struct Usage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

struct ChatResponse {
    std::string text;
    FinishReason finish_reason = FinishReason::Stop;
    std::optional<Usage> usage;
    bool from_cache = false;
};

class Backend {
public:
    virtual ~Backend() = default;
    /// Safe to call concurrently.
    virtual ChatResponse complete(const ChatRequest& request) = 0;
    /// Number of real network exchanges issued through this backend stack.
    virtual std::uint64_t network_calls() const { return 0; }
};

// ---------------------------------------------------------------------------
// Transcript / cache storage: one JSON file per key under
// <dir>/<key[0:2]>/<key[2:4]>/<key>.json.

struct TranscriptEntry {
    std::string key;
    std::string request_canonical;
    std::string response_text;
    FinishReason finish_reason = FinishReason::Stop;
    std::string checksum;  // sha256_hex(response_text)
};

std::filesystem::path entry_path(const std::filesystem::path& dir, const std::string& key);

/// Write-then-rename; concurrent writers of one key converge to one valid file.
void write_entry(const std::filesystem::path& dir, const TranscriptEntry& entry);

/// nullopt when absent; CorruptTranscript on checksum or key mismatch.
std::optional<TranscriptEntry> read_entry(const std::filesystem::path& dir, const std::string& key);

TranscriptEntry make_entry(const ChatRequest& request, const ChatResponse& response);

using Transcript = std::unordered_map<std::string, TranscriptEntry>;

/// Loads every entry under `dir`, verifying checksums. A missing directory
/// is an IoError; an empty one yields an empty transcript.
Transcript load_transcript(const std::filesystem::path& dir);

std::size_t count_entries(const std::filesystem::path& dir);
void clear_entries(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------

/// Serves recorded responses by cache key; never touches the network.
class ReplayBackend final : public Backend {
public:
    explicit ReplayBackend(Transcript transcript);
    static std::unique_ptr<ReplayBackend> from_dir(const std::filesystem::path& dir);

    ChatResponse complete(const ChatRequest& request) override;
    std::uint64_t lookups() const noexcept { return lookups_.load(); }

private:
    Transcript transcript_;
    std::atomic<std::uint64_t> lookups_{0};
};

/// Content-addressed on-disk cache in front of another backend.
class CachingBackend final : public Backend {
public:
    CachingBackend(std::shared_ptr<Backend> inner, std::filesystem::path dir);

    ChatResponse complete(const ChatRequest& request) override;
    std::uint64_t network_calls() const override { return inner_->network_calls(); }
    std::uint64_t hits() const noexcept { return hits_.load(); }
    std::uint64_t misses() const noexcept { return misses_.load(); }

private:
    std::shared_ptr<Backend> inner_;
    std::filesystem::path dir_;
    std::atomic<std::uint64_t> hits_{0};
    std::atomic<std::uint64_t> misses_{0};
};

/// Forwards to `inner` and records every exchange into a transcript directory.
class RecordingBackend final : public Backend {
public:
    RecordingBackend(std::shared_ptr<Backend> inner, std::filesystem::path dir);

    ChatResponse complete(const ChatRequest& request) override;
    std::uint64_t network_calls() const override { return inner_->network_calls(); }

private:
    std::shared_ptr<Backend> inner_;
    std::filesystem::path dir_;
};

/// Deterministic stand-in driven by a responder function.
class ScriptedBackend final : public Backend {
public:
    using Responder = std::function<std::string(const ChatRequest&)>;

    explicit ScriptedBackend(Responder responder,
                             std::chrono::milliseconds latency = std::chrono::milliseconds(0));
    /// Always answers `text`.
    static std::unique_ptr<ScriptedBackend> constant(std::string text);
    /// Rules file: {"default": "...", "rules": [{"tag": "...", "contains": "...", "response": "..."}]}.
    /// The first rule whose `tag` and `contains` substrings both match wins.
    static std::unique_ptr<ScriptedBackend> from_rules_file(const std::filesystem::path& path);

    ChatResponse complete(const ChatRequest& request) override;
    std::uint64_t calls() const noexcept { return calls_.load(); }

private:
    Responder responder_;
    std::chrono::milliseconds latency_;
    std::atomic<std::uint64_t> calls_{0};
};

struct CallRecord {
    std::string tag;
    std::string key;
    bool from_cache = false;
};

/// Thread-safe append-only log of (tag, key) pairs.
class CallLog {
public:
    void add(CallRecord record);
    std::vector<CallRecord> snapshot() const;
    std::size_t size() const;
    void clear();

private:
    mutable std::mutex mu_;
    std::vector<CallRecord> records_;
};

class LoggingBackend final : public Backend {
public:
    LoggingBackend(std::shared_ptr<Backend> inner, std::shared_ptr<CallLog> log);

    ChatResponse complete(const ChatRequest& request) override;
    std::uint64_t network_calls() const override { return inner_->network_calls(); }

private:
    std::shared_ptr<Backend> inner_;
    std::shared_ptr<CallLog> log_;
};

// ---------------------------------------------------------------------------
// Live OpenAI-compatible client.

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds backoff_base{500};
};

struct HttpResult {
    int status = 0;
    std::string body;
};

/// POST transport. Throws NetworkError on transport failure.
using Transport = std::function<HttpResult(const std::string& url,
                                           const std::map<std::string, std::string>& headers,
                                           const std::string& body)>;

Transport make_http_transport(std::chrono::seconds timeout);

/// OpenAI chat-completions body with base64 data-URL image parts.
std::string to_wire_json(const ChatRequest& request);

/// Throws ProtocolError for bodies lacking choices[0].message.content.
ChatResponse parse_wire_response(const std::string& body);

struct LiveOptions {
    std::string endpoint;  // base URL; "/v1/chat/completions" appended unless present
    std::string api_key;
    RetryPolicy retry;
    int max_in_flight = 4;
};

class LiveBackend final : public Backend {
public:
    LiveBackend(LiveOptions options, Transport transport);

    ChatResponse complete(const ChatRequest& request) override;
    std::uint64_t network_calls() const override { return network_calls_.load(); }
    const std::string& url() const noexcept { return url_; }

private:
    ChatResponse attempt(const std::string& body);

    LiveOptions options_;
    Transport transport_;
    std::string url_;
    std::counting_semaphore<> in_flight_;
    std::atomic<std::uint64_t> network_calls_{0};
};

// ---------------------------------------------------------------------------

enum class BackendKind { Live, Replay, Scripted };

std::string_view backend_kind_name(BackendKind kind) noexcept;
BackendKind backend_kind_from_name(std::string_view name);

struct BackendConfig {
    BackendKind kind = BackendKind::Replay;
    std::string endpoint;
    std::string api_key_env = "INSIGHT_API_KEY";
    std::filesystem::path cache_dir;
    std::filesystem::path transcript_dir;
    std::filesystem::path script_path;
    RetryPolicy retry;
    int max_in_flight = 4;
    int timeout_seconds = 120;

    /// Throws ConfigError when live lacks an endpoint, replay lacks a
    /// transcript directory or scripted lacks a rules file.
    void validate() const;
};

/// Builds the backend stack for `config`. Live and scripted backends sit
/// behind the cache when `cache_dir` is set. Live reads the token from the
/// configured environment variable and raises AuthError when unset.
std::shared_ptr<Backend> make_backend(const BackendConfig& config);

}  // namespace insight::backend
