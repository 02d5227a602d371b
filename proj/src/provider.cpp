// SPDX-License-Identifier: Apache-2.0
#include <tddloop/errors.hpp>
#include <tddloop/provider.hpp>

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <regex>
#include <thread>

#include <fmt/format.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace tddloop
{

auto toString(Role role) -> std::string_view
{
    return role == Role::User ? "user" : "assistant";
}

auto toString(ProviderKind kind) -> std::string_view
{
    switch (kind)
    {
        case ProviderKind::Remote: return "remote";
        case ProviderKind::Replay: return "replay";
        case ProviderKind::Scripted: return "scripted";
    }
    return "";
}

auto parseProviderKind(std::string_view s) -> ProviderKind
{
    if (s == "remote")
        return ProviderKind::Remote;
    if (s == "replay")
        return ProviderKind::Replay;
    if (s == "scripted")
        return ProviderKind::Scripted;
    throw ProviderError(fmt::format("unknown provider kind \"{}\"", s));
}

void ProviderConfig::validate() const
{
    switch (kind)
    {
        case ProviderKind::Remote:
            if (endpoint.empty())
                throw ProviderError("remote provider requires endpoint");
            if (modelName.empty())
                throw ProviderError("remote provider requires model_name");
            if (authEnvVar.empty())
                throw ProviderError("remote provider requires auth_env_var");
            break;
        case ProviderKind::Replay:
            if (transcriptPath.empty())
                throw ProviderError("replay provider requires transcript_path");
            break;
        case ProviderKind::Scripted: break;
    }
    if (maxRetries < 0)
        throw ProviderError("max_retries must be >= 0");
    if (requestTimeoutSeconds <= 0)
        throw ProviderError("request_timeout must be > 0");
}

auto ProviderConfig::fromJson(json const& j) -> ProviderConfig
{
    auto c = ProviderConfig {};
    c.kind = parseProviderKind(j.value("kind", std::string("scripted")));
    c.endpoint = j.value("endpoint", std::string {});
    c.modelName = j.value("model_name", std::string {});
    c.authEnvVar = j.value("auth_env_var", std::string {});
    c.requestTimeoutSeconds = j.value("request_timeout", c.requestTimeoutSeconds);
    c.maxRetries = j.value("max_retries", c.maxRetries);
    c.backoffBaseSeconds = j.value("backoff_base", c.backoffBaseSeconds);
    if (j.contains("sampling"))
        c.samplingParameters = j.at("sampling");
    c.transcriptPath = j.value("transcript_path", std::string {});
    c.scriptedResponses = j.value("responses", std::vector<std::string> {});
    return c;
}

ScriptedBackend::ScriptedBackend(std::vector<std::string> responses): _responses(std::move(responses))
{
}

ScriptedBackend::ScriptedBackend(Generator generator): _generator(std::move(generator))
{
}

auto ScriptedBackend::respond(std::span<Turn const> history) const -> std::string
{
    if (_generator)
        return _generator(history);
    // The reply index is the number of assistant turns already in the history.
    auto const index = static_cast<std::size_t>(
        std::count_if(history.begin(), history.end(), [](auto const& t) { return t.role == Role::Assistant; }));
    if (index >= _responses.size())
        throw ProviderExhaustedError(fmt::format("scripted provider exhausted after {} responses", _responses.size()));
    return _responses[index];
}

auto loadTranscript(fs::path const& path) -> std::vector<TranscriptRecord>
{
    auto in = std::ifstream(path);
    if (!in)
        throw ProviderError(fmt::format("cannot read replay transcript {}", path.string()));
    auto records = std::vector<TranscriptRecord> {};
    auto lineNo = 0;
    for (auto line = std::string {}; std::getline(in, line);)
    {
        ++lineNo;
        if (line.empty())
            continue;
        try
        {
            auto const j = json::parse(line);
            auto const role = j.at("role").get<std::string>();
            if (role != "user" && role != "assistant")
                throw ProviderError("bad role");
            records.push_back({ j.at("turn_index").get<std::size_t>(),
                                role == "user" ? Role::User : Role::Assistant,
                                j.at("text").get<std::string>() });
        }
        catch (std::exception const& e)
        {
            throw ProviderError(fmt::format("{}:{}: malformed transcript record: {}", path.string(), lineNo, e.what()));
        }
    }
    return records;
}

void writeTranscript(fs::path const& path, std::span<TranscriptRecord const> records)
{
    auto out = std::ofstream(path, std::ios::trunc);
    if (!out)
        throw ProviderError(fmt::format("cannot write replay transcript {}", path.string()));
    for (auto const& r: records)
        out << json { { "turn_index", r.turnIndex }, { "role", toString(r.role) }, { "text", r.text } }.dump() << '\n';
}

ReplayBackend::ReplayBackend(std::vector<TranscriptRecord> records): _records(std::move(records))
{
}

auto ReplayBackend::respond(std::span<Turn const> history) const -> std::string
{
    auto const userIndex = history.size(); // 1-based index of the new user turn
    auto const find = [&](std::size_t index) -> TranscriptRecord const* {
        for (auto const& r: _records)
            if (r.turnIndex == index)
                return &r;
        return nullptr;
    };

    auto const* recordedUser = find(userIndex);
    if (!recordedUser)
        throw ProviderExhaustedError(fmt::format("replay transcript has no turn {}", userIndex));
    if (recordedUser->role != Role::User || recordedUser->text != history.back().text)
        throw ReplayDivergenceError(userIndex, fmt::format("replay diverged at turn {}", userIndex));
    auto const* reply = find(userIndex + 1);
    if (!reply || reply->role != Role::Assistant)
        throw ProviderExhaustedError(fmt::format("replay transcript has no reply at turn {}", userIndex + 1));
    return reply->text;
}

auto backoffDelaySeconds(double base, int attempt, double unitJitter) -> double
{
    return base * std::pow(2.0, attempt) * (1.0 + 0.2 * std::clamp(unitJitter, -1.0, 1.0));
}

RemoteBackend::RemoteBackend(ProviderConfig config): _config(std::move(config))
{
    _config.validate();
    auto const* credential = std::getenv(_config.authEnvVar.c_str());
    if (!credential || *credential == '\0')
        throw ProviderError(fmt::format("environment variable {} is not set", _config.authEnvVar));
    _credential = credential;

    static auto const url = std::regex(R"(^(https?://[^/]+)(/.*)?$)");
    auto match = std::smatch {};
    if (!std::regex_match(_config.endpoint, match, url))
        throw ProviderError(fmt::format("malformed endpoint URL \"{}\"", _config.endpoint));
    _origin = match[1].str();
    _path = match[2].matched ? match[2].str() : "/";
}

auto RemoteBackend::requestBody(std::span<Turn const> history) const -> json
{
    auto body = _config.samplingParameters.is_object() ? _config.samplingParameters : json::object();
    body["model"] = _config.modelName;
    body["messages"] = json::array();
    for (auto const& turn: history)
        body["messages"].push_back({ { "role", toString(turn.role) }, { "content", turn.text } });
    return body;
}

auto RemoteBackend::respond(std::span<Turn const> history) const -> std::string
{
    auto const payload = requestBody(history).dump();
    auto rng = std::mt19937_64(std::random_device {}());
    auto jitter = std::uniform_real_distribution<double>(-1.0, 1.0);
    auto lastError = std::string {};

    for (auto attempt = 0; attempt <= _config.maxRetries; ++attempt)
    {
        if (attempt > 0)
        {
            auto const delay = backoffDelaySeconds(_config.backoffBaseSeconds, attempt - 1, jitter(rng));
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }

        auto client = httplib::Client(_origin);
        auto const timeout = std::chrono::duration<double>(_config.requestTimeoutSeconds);
        client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

        auto const headers = httplib::Headers { { "Authorization", "Bearer " + _credential } };
        auto const result = client.Post(_path, headers, payload, "application/json");
        if (!result)
        {
            lastError = fmt::format("transport error: {}", httplib::to_string(result.error()));
            continue;
        }
        if (result->status == 429 || result->status >= 500)
        {
            lastError = fmt::format("HTTP {}", result->status);
            continue;
        }
        if (result->status != 200)
            throw ProviderError(fmt::format("HTTP {}: {}", result->status, result->body));

        try
        {
            auto const reply = json::parse(result->body);
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        }
        catch (json::exception const& e)
        {
            throw ProviderError(fmt::format("unexpected response body: {}", e.what()));
        }
    }
    throw ProviderError(fmt::format("request failed after {} retries: {}", _config.maxRetries, lastError));
}

auto makeBackend(ProviderConfig const& config) -> std::shared_ptr<Backend const>
{
    config.validate();
    switch (config.kind)
    {
        case ProviderKind::Remote: return std::make_shared<RemoteBackend>(config);
        case ProviderKind::Replay: return std::make_shared<ReplayBackend>(loadTranscript(config.transcriptPath));
        case ProviderKind::Scripted: return std::make_shared<ScriptedBackend>(config.scriptedResponses);
    }
    throw ProviderError("unknown provider kind");
}

ChatSession::ChatSession(std::string sessionId, std::shared_ptr<Backend const> backend, std::vector<Turn> history):
    _sessionId(std::move(sessionId)), _backend(std::move(backend)), _turns(std::move(history))
{
    for (auto i = std::size_t { 0 }; i < _turns.size(); ++i)
        if (_turns[i].role != (i % 2 == 0 ? Role::User : Role::Assistant))
            throw ProviderError(fmt::format("session history breaks role alternation at turn {}", i + 1));
    if (!_turns.empty() && _turns.back().role != Role::Assistant)
        throw ProviderError("session history must end with an assistant turn");
}

auto ChatSession::send(std::string const& userText) -> std::string
{
    auto pending = _turns;
    pending.push_back({ Role::User, userText });
    auto reply = _backend->respond(pending);
    pending.push_back({ Role::Assistant, reply });
    _turns = std::move(pending);
    return reply;
}

auto ChatSession::userTurnCount() const -> std::size_t
{
    return static_cast<std::size_t>(
        std::count_if(_turns.begin(), _turns.end(), [](auto const& t) { return t.role == Role::User; }));
}

auto openSession(ProviderConfig const& config, std::string sessionId, std::vector<Turn> history) -> ChatSession
{
    return ChatSession(std::move(sessionId), makeBackend(config), std::move(history));
}

} // namespace tddloop
