// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tddloop/harness.hpp>
#include <tddloop/journal.hpp>
#include <tddloop/provider.hpp>
#include <tddloop/session.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace tddloop
{

/// Executes candidate code against tests. The harness-backed implementation
/// is the production path; tests substitute in-memory executors.
class TestExecutor
{
  public:
    virtual ~TestExecutor() = default;
    virtual auto runDriving(CandidateCode const& code, std::vector<TestCase> const& activeTests) -> TestReport = 0;
    virtual auto runOracle(CandidateCode const& code, TestSuite const& oracle) -> TestReport = 0;
};

/// Keeps one workspace for the driving suite and uses a fresh one for the
/// oracle run.
class HarnessExecutor final: public TestExecutor
{
  public:
    HarnessExecutor(RunnerAdapter adapter,
                    std::filesystem::path workspaceParent,
                    LanguageProfile profile = pythonProfile());

    auto runDriving(CandidateCode const& code, std::vector<TestCase> const& activeTests) -> TestReport override;
    auto runOracle(CandidateCode const& code, TestSuite const& oracle) -> TestReport override;

  private:
    RunnerAdapter _adapter;
    std::filesystem::path _parent;
    LanguageProfile _profile;
    std::optional<Workspace> _workspace;
};

class HintSource
{
  public:
    virtual ~HintSource() = default;
    /// nullopt when no hint can be given.
    virtual auto nextHint(SessionState const& state) -> std::optional<std::string> = 0;
    [[nodiscard]] virtual auto name() const -> std::string = 0;
};

/// Batch mode: the manifest's hint bank, consumed in order.
class ManifestHints final: public HintSource
{
  public:
    auto nextHint(SessionState const& state) -> std::optional<std::string> override;
    [[nodiscard]] auto name() const -> std::string override { return "manifest"; }
};

/// Interactive mode: asks a person (console, service request).
class CallbackHints final: public HintSource
{
  public:
    using Callback = std::function<std::optional<std::string>(SessionState const&)>;
    explicit CallbackHints(Callback callback): _callback(std::move(callback)) {}
    auto nextHint(SessionState const& state) -> std::optional<std::string> override { return _callback(state); }
    [[nodiscard]] auto name() const -> std::string override { return "human"; }

  private:
    Callback _callback;
};

/// Stands in for a provider that could not be constructed; every send fails
/// with the original error so the failure is journaled like any other.
class FailingBackend final: public Backend
{
  public:
    explicit FailingBackend(std::string message): _message(std::move(message)) {}
    [[nodiscard]] auto respond(std::span<Turn const>) const -> std::string override;
    [[nodiscard]] auto tag() const -> std::string override { return "unavailable"; }

  private:
    std::string _message;
};

struct RunnerHooks
{
    std::function<void(JournalEntry const&)> onEntry;
    /// Step-confirmation gate; returning false aborts the session.
    std::function<bool(SessionState const&, action::SendPrompt const&)> beforePrompt;
    std::function<bool()> abortRequested;
    std::function<void(SessionState const&)> onState;
};

/// Drives one session: performs each action step() asks for and journals
/// every prompt, response, report and decision before acting on it.
class SessionRunner
{
  public:
    SessionRunner(std::shared_ptr<ProblemManifest const> problem,
                  SessionSettings settings,
                  std::shared_ptr<Backend const> backend,
                  TestExecutor& executor,
                  HintSource& hints,
                  JournalWriter& journal,
                  RunnerHooks hooks = {},
                  bool interactive = false);

    /// Continues a session folded back from its journal.
    SessionRunner(FoldedSession folded,
                  std::shared_ptr<Backend const> backend,
                  TestExecutor& executor,
                  HintSource& hints,
                  JournalWriter& journal,
                  RunnerHooks hooks = {});

    /// Runs until the session reaches a terminal status.
    auto run() -> SessionState const&;

    [[nodiscard]] auto state() const -> SessionState const& { return _state; }
    [[nodiscard]] auto chat() const -> ChatSession const& { return _chat; }

  private:
    void journal(EntryKind kind, nlohmann::json payload);
    void apply(Event const& event);
    void journalRevision(std::size_t revisionsBefore);

    SessionState _state;
    ChatSession _chat;
    TestExecutor& _executor;
    HintSource& _hints;
    JournalWriter& _journal;
    RunnerHooks _hooks;
    bool _fresh = true;
    bool _interactive = false;
    std::optional<std::string> _unansweredPrompt;
    std::optional<SessionHeader> _header; // rides on the first entry written
};

[[nodiscard]] auto candidateJson(CandidateCode const& code) -> nlohmann::json;

} // namespace tddloop
