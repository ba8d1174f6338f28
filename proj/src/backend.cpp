#include "insight/backend.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>
#include <thread>
#include <unistd.h>

#include "insight/digest.hpp"
#include "insight/errors.hpp"

namespace insight::backend {

using nlohmann::json;

std::string_view role_name(Role role) noexcept {
    return role == Role::System ? "system" : "user";
}

ImageAttachment ImageAttachment::from_image(const std::shared_ptr<const ImageRef>& image) {
    ImageAttachment a;
    a.media_type = image->media_type();
    a.digest = image->digest();
    // Aliasing constructor: keeps the ImageRef alive without copying the payload.
    a.base64 = std::shared_ptr<const std::string>(image, &image->base64());
    return a;
}

ImageAttachment ImageAttachment::from_bytes(std::string_view bytes, std::string media_type) {
    ImageAttachment a;
    a.media_type = std::move(media_type);
    a.digest = sha256_hex(bytes);
    a.base64 = std::make_shared<const std::string>(base64_encode(bytes));
    return a;
}

void ChatRequest::validate() const {
    if (model.empty()) throw PreconditionError("chat request has no model");
    if (messages.empty()) throw PreconditionError("chat request has no messages");
    if (temperature < 0.0) throw PreconditionError("temperature must be non-negative");
    if (max_tokens <= 0) throw PreconditionError("max_tokens must be positive");
    int images = 0;
    for (const auto& m : messages) images += m.image ? 1 : 0;
    if (images > 1) throw PreconditionError("at most one image attachment per request");
}

const ImageAttachment* ChatRequest::image() const noexcept {
    for (const auto& m : messages) {
        if (m.image) return &*m.image;
    }
    return nullptr;
}

std::string ChatRequest::all_text() const {
    std::string out;
    for (const auto& m : messages) {
        if (!out.empty()) out.push_back('\n');
        out += m.text;
    }
    return out;
}

std::string canonical_serialization(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) {
        json entry = {{"role", role_name(m.role)}, {"text", m.text}};
        if (m.image) {
            entry["image"] = {{"media_type", m.image->media_type}, {"digest", m.image->digest}};
        }
        messages.push_back(std::move(entry));
    }
    const json doc = {
        {"model", request.model},
        {"messages", std::move(messages)},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
    };
    return doc.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string cache_key(const ChatRequest& request) {
    return sha256_hex(canonical_serialization(request));
}

std::string_view finish_reason_name(FinishReason r) noexcept {
    switch (r) {
        case FinishReason::Stop: return "stop";
        case FinishReason::Length: return "length";
        case FinishReason::Error: return "error";
    }
    return "error";
}

FinishReason finish_reason_from_name(std::string_view name) {
    if (name == "stop") return FinishReason::Stop;
    if (name == "length") return FinishReason::Length;
    if (name == "error") return FinishReason::Error;
    throw ProtocolError("unknown finish_reason '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

std::filesystem::path entry_path(const std::filesystem::path& dir, const std::string& key) {
    if (key.size() < 4) throw PreconditionError("cache key too short: " + key);
    return dir / key.substr(0, 2) / key.substr(2, 2) / (key + ".json");
}

namespace {

json entry_to_json(const TranscriptEntry& e) {
    return {
        {"key", e.key},
        {"request_canonical", e.request_canonical},
        {"response_text", e.response_text},
        {"finish_reason", finish_reason_name(e.finish_reason)},
        {"checksum", e.checksum},
    };
}

TranscriptEntry entry_from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read transcript entry " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw CorruptTranscript(path.string() + ": " + e.what());
    }
    TranscriptEntry e;
    try {
        e.key = doc.at("key").get<std::string>();
        e.request_canonical = doc.at("request_canonical").get<std::string>();
        e.response_text = doc.at("response_text").get<std::string>();
        e.finish_reason = finish_reason_from_name(doc.at("finish_reason").get<std::string>());
        e.checksum = doc.at("checksum").get<std::string>();
    } catch (const json::exception& ex) {
        throw CorruptTranscript(path.string() + ": " + ex.what());
    } catch (const ProtocolError& ex) {
        throw CorruptTranscript(path.string() + ": " + ex.what());
    }
    if (sha256_hex(e.response_text) != e.checksum) {
        throw CorruptTranscript(path.string() + ": checksum mismatch");
    }
    if (path.stem().string() != e.key) {
        throw CorruptTranscript(path.string() + ": key does not match file name");
    }
    return e;
}

std::atomic<std::uint64_t> g_tmp_counter{0};

}  // namespace

void write_entry(const std::filesystem::path& dir, const TranscriptEntry& entry) {
    const auto final_path = entry_path(dir, entry.key);
    std::error_code ec;
    std::filesystem::create_directories(final_path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + final_path.parent_path().string() + ": " + ec.message());

    std::ostringstream tmp_name;
    tmp_name << final_path.filename().string() << ".tmp." << ::getpid() << '.'
             << std::hash<std::thread::id>{}(std::this_thread::get_id()) << '.'
             << g_tmp_counter.fetch_add(1);
    const auto tmp_path = final_path.parent_path() / tmp_name.str();
    {
        std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp_path.string());
        out << entry_to_json(entry).dump(2, ' ', false, json::error_handler_t::replace) << '\n';
        if (!out) throw IoError("short write to " + tmp_path.string());
    }
    std::filesystem::rename(tmp_path, final_path, ec);
    if (ec) {
        std::filesystem::remove(tmp_path, ec);
        throw IoError("cannot rename into " + final_path.string());
    }
}

std::optional<TranscriptEntry> read_entry(const std::filesystem::path& dir, const std::string& key) {
    const auto path = entry_path(dir, key);
    if (!std::filesystem::exists(path)) return std::nullopt;
    return entry_from_file(path);
}

TranscriptEntry make_entry(const ChatRequest& request, const ChatResponse& response) {
    TranscriptEntry e;
    e.request_canonical = canonical_serialization(request);
    e.key = sha256_hex(e.request_canonical);
    e.response_text = response.text;
    e.finish_reason = response.finish_reason;
    e.checksum = sha256_hex(response.text);
    return e;
}

namespace {

bool is_entry_file(const std::filesystem::directory_entry& de) {
    return de.is_regular_file() && de.path().extension() == ".json";
}

}  // namespace

Transcript load_transcript(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw IoError("transcript directory not found: " + dir.string());
    }
    Transcript out;
    for (const auto& de : std::filesystem::recursive_directory_iterator(dir)) {
        if (!is_entry_file(de)) continue;
        auto e = entry_from_file(de.path());
        out.emplace(e.key, std::move(e));
    }
    return out;
}

std::size_t count_entries(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) return 0;
    std::size_t n = 0;
    for (const auto& de : std::filesystem::recursive_directory_iterator(dir)) {
        n += is_entry_file(de) ? 1 : 0;
    }
    return n;
}

void clear_entries(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) return;
    std::error_code ec;
    for (const auto& de : std::filesystem::directory_iterator(dir)) {
        std::filesystem::remove_all(de.path(), ec);
        if (ec) throw IoError("cannot remove " + de.path().string() + ": " + ec.message());
    }
}

// ---------------------------------------------------------------------------

ReplayBackend::ReplayBackend(Transcript transcript) : transcript_(std::move(transcript)) {}

std::unique_ptr<ReplayBackend> ReplayBackend::from_dir(const std::filesystem::path& dir) {
    return std::make_unique<ReplayBackend>(load_transcript(dir));
}

ChatResponse ReplayBackend::complete(const ChatRequest& request) {
    request.validate();
    lookups_.fetch_add(1);
    const auto key = cache_key(request);
    const auto it = transcript_.find(key);
    if (it == transcript_.end()) throw ReplayMiss(key);
    ChatResponse r;
    r.text = it->second.response_text;
    r.finish_reason = it->second.finish_reason;
    return r;
}

CachingBackend::CachingBackend(std::shared_ptr<Backend> inner, std::filesystem::path dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {}

ChatResponse CachingBackend::complete(const ChatRequest& request) {
    request.validate();
    const auto key = cache_key(request);
    if (auto hit = read_entry(dir_, key)) {
        hits_.fetch_add(1);
        ChatResponse r;
        r.text = std::move(hit->response_text);
        r.finish_reason = hit->finish_reason;
        r.from_cache = true;
        return r;
    }
    misses_.fetch_add(1);
    ChatResponse r = inner_->complete(request);
    if (r.finish_reason != FinishReason::Error) write_entry(dir_, make_entry(request, r));
    r.from_cache = false;
    return r;
}

RecordingBackend::RecordingBackend(std::shared_ptr<Backend> inner, std::filesystem::path dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {}

ChatResponse RecordingBackend::complete(const ChatRequest& request) {
    ChatResponse r = inner_->complete(request);
    write_entry(dir_, make_entry(request, r));
    return r;
}

ScriptedBackend::ScriptedBackend(Responder responder, std::chrono::milliseconds latency)
    : responder_(std::move(responder)), latency_(latency) {}

std::unique_ptr<ScriptedBackend> ScriptedBackend::constant(std::string text) {
    return std::make_unique<ScriptedBackend>([text = std::move(text)](const ChatRequest&) { return text; });
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_rules_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read script rules " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("script rules " + path.string() + ": " + e.what());
    }
    struct Rule {
        std::string tag, contains, response;
    };
    std::vector<Rule> rules;
    for (const auto& r : doc.value("rules", json::array())) {
        rules.push_back({r.value("tag", ""), r.value("contains", ""), r.at("response").get<std::string>()});
    }
    std::string fallback = doc.value("default", "");
    return std::make_unique<ScriptedBackend>(
        [rules = std::move(rules), fallback = std::move(fallback)](const ChatRequest& req) {
            const std::string text = req.all_text();
            for (const auto& r : rules) {
                if (req.tag.find(r.tag) != std::string::npos &&
                    text.find(r.contains) != std::string::npos) {
                    return r.response;
                }
            }
            return fallback;
        });
}

ChatResponse ScriptedBackend::complete(const ChatRequest& request) {
    request.validate();
    calls_.fetch_add(1);
    if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
    ChatResponse r;
    r.text = responder_(request);
    return r;
}

void CallLog::add(CallRecord record) {
    std::lock_guard lock(mu_);
    records_.push_back(std::move(record));
}

std::vector<CallRecord> CallLog::snapshot() const {
    std::lock_guard lock(mu_);
    return records_;
}

std::size_t CallLog::size() const {
    std::lock_guard lock(mu_);
    return records_.size();
}

void CallLog::clear() {
    std::lock_guard lock(mu_);
    records_.clear();
}

LoggingBackend::LoggingBackend(std::shared_ptr<Backend> inner, std::shared_ptr<CallLog> log)
    : inner_(std::move(inner)), log_(std::move(log)) {}

ChatResponse LoggingBackend::complete(const ChatRequest& request) {
    const auto key = cache_key(request);
    try {
        ChatResponse r = inner_->complete(request);
        log_->add({request.tag, key, r.from_cache});
        return r;
    } catch (...) {
        log_->add({request.tag, key, false});
        throw;
    }
}

// ---------------------------------------------------------------------------

std::string to_wire_json(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) {
        if (!m.image) {
            messages.push_back({{"role", role_name(m.role)}, {"content", m.text}});
            continue;
        }
        json parts = json::array();
        parts.push_back({{"type", "text"}, {"text", m.text}});
        parts.push_back({{"type", "image_url"},
                         {"image_url", {{"url", "data:" + m.image->media_type + ";base64," + *m.image->base64}}}});
        messages.push_back({{"role", role_name(m.role)}, {"content", std::move(parts)}});
    }
    json body = {
        {"model", request.model},
        {"messages", std::move(messages)},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
        {"stream", false},
    };
    return body.dump(-1, ' ', false, json::error_handler_t::replace);
}

ChatResponse parse_wire_response(const std::string& body) {
    json doc;
    try {
        doc = json::parse(body);
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("response is not JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("choices") || !doc["choices"].is_array() ||
        doc["choices"].empty()) {
        throw ProtocolError("response has no choices");
    }
    const json& choice = doc["choices"][0];
    if (!choice.contains("message") || !choice["message"].is_object()) {
        throw ProtocolError("choice has no message");
    }
    ChatResponse r;
    const std::string reason =
        choice.contains("finish_reason") && choice["finish_reason"].is_string()
            ? choice["finish_reason"].get<std::string>()
            : "stop";
    if (reason == "stop") {
        r.finish_reason = FinishReason::Stop;
    } else if (reason == "length") {
        r.finish_reason = FinishReason::Length;
    } else {
        r.finish_reason = FinishReason::Error;
    }
    const json& content = choice["message"].value("content", json());
    if (content.is_string()) {
        r.text = content.get<std::string>();
    } else if (content.is_array()) {
        for (const auto& part : content) {
            if (part.is_object() && part.value("type", "") == "text") r.text += part.value("text", "");
        }
    } else if (r.finish_reason == FinishReason::Stop) {
        throw ProtocolError("message content missing");
    }
    if (doc.contains("usage") && doc["usage"].is_object()) {
        Usage u;
        u.prompt_tokens = doc["usage"].value("prompt_tokens", std::int64_t{0});
        u.completion_tokens = doc["usage"].value("completion_tokens", std::int64_t{0});
        r.usage = u;
    }
    return r;
}

namespace {

std::string completions_url(std::string endpoint) {
    while (!endpoint.empty() && endpoint.back() == '/') endpoint.pop_back();
    constexpr std::string_view suffix = "/chat/completions";
    if (endpoint.size() >= suffix.size() &&
        endpoint.compare(endpoint.size() - suffix.size(), suffix.size(), suffix) == 0) {
        return endpoint;
    }
    if (endpoint.size() >= 3 && endpoint.compare(endpoint.size() - 3, 3, "/v1") == 0) {
        return endpoint + std::string(suffix);
    }
    return endpoint + "/v1" + std::string(suffix);
}

}  // namespace

LiveBackend::LiveBackend(LiveOptions options, Transport transport)
    : options_(std::move(options)),
      transport_(std::move(transport)),
      url_(completions_url(options_.endpoint)),
      in_flight_(std::max(1, options_.max_in_flight)) {
    if (options_.endpoint.empty()) throw ConfigError("live backend requires an endpoint");
    if (options_.retry.max_attempts < 1) throw ConfigError("retry max_attempts must be >= 1");
}

ChatResponse LiveBackend::attempt(const std::string& body) {
    std::map<std::string, std::string> headers = {{"Content-Type", "application/json"}};
    if (!options_.api_key.empty()) headers["Authorization"] = "Bearer " + options_.api_key;

    in_flight_.acquire();
    HttpResult res;
    try {
        network_calls_.fetch_add(1);
        res = transport_(url_, headers, body);
    } catch (...) {
        in_flight_.release();
        throw;
    }
    in_flight_.release();

    if (res.status == 401 || res.status == 403) {
        throw AuthError("endpoint rejected credentials (HTTP " + std::to_string(res.status) + ")");
    }
    if (res.status == 408 || res.status == 429 || res.status >= 500) {
        throw NetworkError("transient HTTP " + std::to_string(res.status));
    }
    if (res.status < 200 || res.status >= 300) {
        throw ProtocolError("unexpected HTTP " + std::to_string(res.status) + ": " + res.body.substr(0, 200));
    }
    return parse_wire_response(res.body);
}

ChatResponse LiveBackend::complete(const ChatRequest& request) {
    request.validate();
    const std::string body = to_wire_json(request);
    for (int attempt_no = 1;; ++attempt_no) {
        try {
            return attempt(body);
        } catch (const BackendError& e) {
            if (!e.transient() || attempt_no >= options_.retry.max_attempts) throw;
        }
        std::this_thread::sleep_for(options_.retry.backoff_base * (1 << (attempt_no - 1)));
    }
}

// ---------------------------------------------------------------------------

std::string_view backend_kind_name(BackendKind kind) noexcept {
    switch (kind) {
        case BackendKind::Live: return "live";
        case BackendKind::Replay: return "replay";
        case BackendKind::Scripted: return "scripted";
    }
    return "replay";
}

BackendKind backend_kind_from_name(std::string_view name) {
    if (name == "live") return BackendKind::Live;
    if (name == "replay") return BackendKind::Replay;
    if (name == "scripted") return BackendKind::Scripted;
    throw ConfigError("unknown backend kind '" + std::string(name) + "'");
}

void BackendConfig::validate() const {
    switch (kind) {
        case BackendKind::Live:
            if (endpoint.empty()) throw ConfigError("live backend requires an endpoint");
            break;
        case BackendKind::Replay:
            if (transcript_dir.empty()) throw ConfigError("replay backend requires a transcript directory");
            break;
        case BackendKind::Scripted:
            if (script_path.empty()) throw ConfigError("scripted backend requires a rules file");
            break;
    }
    if (retry.max_attempts < 1) throw ConfigError("retry max_attempts must be >= 1");
    if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
}

std::shared_ptr<Backend> make_backend(const BackendConfig& config) {
    config.validate();
    std::shared_ptr<Backend> base;
    switch (config.kind) {
        case BackendKind::Replay:
            return ReplayBackend::from_dir(config.transcript_dir);
        case BackendKind::Scripted:
            base = ScriptedBackend::from_rules_file(config.script_path);
            break;
        case BackendKind::Live: {
            const char* token = std::getenv(config.api_key_env.c_str());
            if (token == nullptr || *token == '\0') {
                throw AuthError("environment variable " + config.api_key_env + " is not set");
            }
            LiveOptions opts;
            opts.endpoint = config.endpoint;
            opts.api_key = token;
            opts.retry = config.retry;
            opts.max_in_flight = config.max_in_flight;
            base = std::make_shared<LiveBackend>(std::move(opts),
                                                 make_http_transport(std::chrono::seconds(config.timeout_seconds)));
            break;
        }
    }
    if (!config.cache_dir.empty()) return std::make_shared<CachingBackend>(base, config.cache_dir);
    return base;
}

}  // namespace insight::backend
