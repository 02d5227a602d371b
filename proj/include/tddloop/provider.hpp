// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tddloop
{

enum class Role
{
    User,
    Assistant,
};

[[nodiscard]] auto toString(Role role) -> std::string_view;

struct Turn
{
    Role role {};
    std::string text;

    auto operator==(Turn const&) const -> bool = default;
};

enum class ProviderKind
{
    Remote,
    Replay,
    Scripted,
};

[[nodiscard]] auto toString(ProviderKind kind) -> std::string_view;
[[nodiscard]] auto parseProviderKind(std::string_view s) -> ProviderKind;

struct ProviderConfig
{
    ProviderKind kind = ProviderKind::Scripted;

    // remote
    std::string endpoint; // full URL of the chat-completion endpoint
    std::string modelName;
    std::string authEnvVar;
    double requestTimeoutSeconds = 120.0;
    int maxRetries = 3;
    double backoffBaseSeconds = 2.0;
    nlohmann::json samplingParameters = nlohmann::json::object(); // passed through verbatim

    // replay
    std::filesystem::path transcriptPath;

    // scripted
    std::vector<std::string> scriptedResponses;

    /// Throws ProviderError when required fields for `kind` are missing.
    void validate() const;

    /// Reads the JSON form used by the CLI (`--provider-config`).
    [[nodiscard]] static auto fromJson(nlohmann::json const& j) -> ProviderConfig;
};

/// Produces the assistant reply for a history whose last turn is the new
/// user message. Implementations hold no per-session state, so one backend
/// may serve many sessions concurrently.
class Backend
{
  public:
    virtual ~Backend() = default;
    [[nodiscard]] virtual auto respond(std::span<Turn const> history) const -> std::string = 0;
    [[nodiscard]] virtual auto tag() const -> std::string = 0;
};

class ScriptedBackend final: public Backend
{
  public:
    using Generator = std::function<std::string(std::span<Turn const>)>;

    explicit ScriptedBackend(std::vector<std::string> responses);
    explicit ScriptedBackend(Generator generator);

    [[nodiscard]] auto respond(std::span<Turn const> history) const -> std::string override;
    [[nodiscard]] auto tag() const -> std::string override { return "scripted"; }

  private:
    std::vector<std::string> _responses;
    Generator _generator;
};

/// One line of a replay transcript. turn_index is 1-based over all turns.
struct TranscriptRecord
{
    std::size_t turnIndex = 0;
    Role role {};
    std::string text;

    auto operator==(TranscriptRecord const&) const -> bool = default;
};

[[nodiscard]] auto loadTranscript(std::filesystem::path const& path) -> std::vector<TranscriptRecord>;
void writeTranscript(std::filesystem::path const& path, std::span<TranscriptRecord const> records);

class ReplayBackend final: public Backend
{
  public:
    explicit ReplayBackend(std::vector<TranscriptRecord> records);

    [[nodiscard]] auto respond(std::span<Turn const> history) const -> std::string override;
    [[nodiscard]] auto tag() const -> std::string override { return "replay"; }

  private:
    std::vector<TranscriptRecord> _records;
};

/// Chat-completion client. The credential is resolved once, at construction.
class RemoteBackend final: public Backend
{
  public:
    explicit RemoteBackend(ProviderConfig config);

    [[nodiscard]] auto respond(std::span<Turn const> history) const -> std::string override;
    [[nodiscard]] auto tag() const -> std::string override { return "remote:" + _config.modelName; }

    [[nodiscard]] auto requestBody(std::span<Turn const> history) const -> nlohmann::json;

  private:
    ProviderConfig _config;
    std::string _credential;
    std::string _origin; // scheme://host[:port]
    std::string _path;
};

/// Delay before retry number `attempt` (0-based): base * 2^attempt, +-20% jitter.
[[nodiscard]] auto backoffDelaySeconds(double base, int attempt, double unitJitter) -> double;

/// Builds the backend for a config. Validation and credential lookup happen
/// here so misconfiguration fails before any prompt is sent.
[[nodiscard]] auto makeBackend(ProviderConfig const& config) -> std::shared_ptr<Backend const>;

/// Single-owner conversation. Turns strictly alternate, starting with user.
class ChatSession
{
  public:
    ChatSession(std::string sessionId, std::shared_ptr<Backend const> backend, std::vector<Turn> history = {});

    /// Appends the user turn and the reply. On error nothing is appended.
    auto send(std::string const& userText) -> std::string;

    [[nodiscard]] auto turns() const noexcept -> std::vector<Turn> const& { return _turns; }
    [[nodiscard]] auto sessionId() const noexcept -> std::string const& { return _sessionId; }
    [[nodiscard]] auto providerTag() const -> std::string { return _backend->tag(); }
    [[nodiscard]] auto userTurnCount() const -> std::size_t;

  private:
    std::string _sessionId;
    std::shared_ptr<Backend const> _backend;
    std::vector<Turn> _turns;
};

[[nodiscard]] auto openSession(ProviderConfig const& config, std::string sessionId, std::vector<Turn> history = {})
    -> ChatSession;

} // namespace tddloop
