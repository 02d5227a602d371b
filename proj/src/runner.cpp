// SPDX-License-Identifier: Apache-2.0
#include <tddloop/errors.hpp>
#include <tddloop/runner.hpp>

#include <fmt/format.h>

using nlohmann::json;

namespace tddloop
{

HarnessExecutor::HarnessExecutor(RunnerAdapter adapter, std::filesystem::path workspaceParent, LanguageProfile profile):
    _adapter(std::move(adapter)), _parent(std::move(workspaceParent)), _profile(std::move(profile))
{
    _adapter.validate();
}

auto HarnessExecutor::runDriving(CandidateCode const& code, std::vector<TestCase> const& activeTests) -> TestReport
{
    if (!_workspace)
        _workspace = Workspace::create(_parent, _profile);
    _workspace->materialize(code, activeTests);
    auto ids = std::vector<std::string> {};
    for (auto const& t: activeTests)
        ids.push_back(t.id);
    return _workspace->run(_adapter, ids);
}

auto HarnessExecutor::runOracle(CandidateCode const& code, TestSuite const& oracle) -> TestReport
{
    auto workspace = Workspace::create(_parent, _profile);
    workspace.materialize(code, oracle.tests);
    auto ids = std::vector<std::string> {};
    for (auto const& t: oracle.tests)
        ids.push_back(t.id);
    return workspace.run(_adapter, ids);
}

auto ManifestHints::nextHint(SessionState const& state) -> std::optional<std::string>
{
    auto const& hints = state.problem->hints;
    auto const cursor = static_cast<std::size_t>(state.hintCursor);
    if (cursor >= hints.size())
        return std::nullopt;
    return hints[cursor];
}

auto FailingBackend::respond(std::span<Turn const>) const -> std::string
{
    throw ProviderError(_message);
}

auto candidateJson(CandidateCode const& code) -> json
{
    return json {
        { "code", code.codeText },
        { "target_name_present", code.targetNamePresent },
        { "incomplete", code.incomplete },
        { "content_hash", code.contentHash },
        { "token_count", code.normalized.size() },
    };
}

SessionRunner::SessionRunner(std::shared_ptr<ProblemManifest const> problem,
                             SessionSettings settings,
                             std::shared_ptr<Backend const> backend,
                             TestExecutor& executor,
                             HintSource& hints,
                             JournalWriter& journal,
                             RunnerHooks hooks,
                             bool interactive):
    _state(makeSession(std::move(problem), settings)),
    _chat(journal.sessionId(), std::move(backend)),
    _executor(executor),
    _hints(hints),
    _journal(journal),
    _hooks(std::move(hooks)),
    _fresh(true),
    _interactive(interactive)
{
    if (journal.lastSeq() != 0)
        throw JournalError(fmt::format("journal {} already holds a session", journal.path().string()));
}

SessionRunner::SessionRunner(FoldedSession folded,
                             std::shared_ptr<Backend const> backend,
                             TestExecutor& executor,
                             HintSource& hints,
                             JournalWriter& journal,
                             RunnerHooks hooks):
    _state(std::move(folded.state)),
    _chat(journal.sessionId(), std::move(backend), std::move(folded.turns)),
    _executor(executor),
    _hints(hints),
    _journal(journal),
    _hooks(std::move(hooks)),
    _fresh(false),
    _interactive(folded.header.interactive),
    _unansweredPrompt(std::move(folded.unanswered))
{
}

void SessionRunner::journal(EntryKind kind, json payload)
{
    if (_header)
    {
        payload["header"] = _header->toJson();
        _header.reset();
    }
    auto const& entry = _journal.append(kind, std::move(payload));
    if (_hooks.onEntry)
        _hooks.onEntry(entry);
}

void SessionRunner::apply(Event const& event)
{
    _state = step(_state, event).state;
    if (_hooks.onState)
        _hooks.onState(_state);
}

void SessionRunner::journalRevision(std::size_t revisionsBefore)
{
    for (auto i = revisionsBefore; i < _state.revisions.size(); ++i)
    {
        auto const& revision = _state.revisions[i];
        journal(EntryKind::Outcome,
                json {
                    { "iteration", revision.iteration },
                    { "outcome", toString(revision.outcome.kind) },
                    { "failing_prev_ids", revision.outcome.failingPrevIds },
                    { "consecutive_repeats", _state.consecutiveRepeats },
                });
    }
}

auto SessionRunner::run() -> SessionState const&
{
    if (_fresh)
    {
        auto const& problem = *_state.problem;
        _header = SessionHeader {
            .problemId = problem.id,
            .difficulty = std::string(toString(problem.difficulty)),
            .ioDatatypes = problem.ioDatatypeKey(),
            .settings = _state.settings,
            .testCount = _state.drivingTests().size(),
            .interactive = _interactive,
        };
        apply(event::Start {});
        _fresh = false;
    }

    while (true)
    {
        if (auto const* stopAction = std::get_if<action::Stop>(&_state.pendingAction))
        {
            journal(EntryKind::StatusChange,
                    json {
                        { "status", toString(stopAction->status) },
                        { "reason", stopAction->reason },
                        { "oracle_outcome", toString(_state.oracleOutcome) },
                        { "prompts_sent", _state.promptsSent },
                    });
            return _state;
        }
        if (_hooks.abortRequested && _hooks.abortRequested())
        {
            apply(event::Abort { "aborted" });
            continue;
        }

        if (auto const* prompt = std::get_if<action::SendPrompt>(&_state.pendingAction))
        {
            if (_hooks.beforePrompt && !_hooks.beforePrompt(_state, *prompt))
            {
                apply(event::Abort { "aborted" });
                continue;
            }
            if (!_unansweredPrompt)
                journal(EntryKind::PromptSent,
                        json {
                            { "kind", toString(prompt->kind) },
                            { "text", prompt->text },
                            { "prompt_index", _state.promptsSent },
                        });
            _unansweredPrompt.reset();

            auto reply = std::string {};
            try
            {
                reply = _chat.send(prompt->text);
            }
            catch (ProviderError const& e)
            {
                apply(event::Abort { "provider_error" });
                journal(EntryKind::StatusChange,
                        json {
                            { "status", toString(_state.status) },
                            { "reason", _state.stopReason },
                            { "message", e.what() },
                            { "oracle_outcome", toString(_state.oracleOutcome) },
                            { "prompts_sent", _state.promptsSent },
                        });
                return _state;
            }
            journal(EntryKind::ResponseReceived, json { { "text", reply } });

            auto const before = _state.revisions.size();
            apply(event::LLMResponse { reply });
            if (auto const* run = std::get_if<action::RunTests>(&_state.pendingAction))
                journal(EntryKind::CodeExtracted, candidateJson(run->candidate));
            else if (_state.revisions.size() > before)
            {
                journal(EntryKind::CodeExtracted, json { { "no_code", true } });
                journalRevision(before);
            }
            continue;
        }

        if (auto const* run = std::get_if<action::RunTests>(&_state.pendingAction))
        {
            auto report = TestReport {};
            try
            {
                report = _executor.runDriving(run->candidate, _state.activeTests());
            }
            catch (HarnessError const& e)
            {
                apply(event::Abort { "harness_error" });
                journal(EntryKind::StatusChange,
                        json {
                            { "status", toString(_state.status) },
                            { "reason", _state.stopReason },
                            { "message", e.what() },
                            { "oracle_outcome", toString(_state.oracleOutcome) },
                            { "prompts_sent", _state.promptsSent },
                        });
                return _state;
            }
            journal(EntryKind::TestReport, json { { "suite", "driving" }, { "report", report.toJson() } });
            auto const before = _state.revisions.size();
            apply(event::TestsCompleted { std::move(report) });
            journalRevision(before);
            continue;
        }

        if (std::holds_alternative<action::RequestHint>(_state.pendingAction))
        {
            journal(EntryKind::HintRequested,
                    json { { "hint_cursor", _state.hintCursor }, { "consecutive_repeats", _state.consecutiveRepeats } });
            auto const hint = _hints.nextHint(_state);
            if (_hooks.abortRequested && _hooks.abortRequested())
            {
                apply(event::Abort { "aborted" });
                continue;
            }
            if (hint)
            {
                journal(EntryKind::HintProvided, json { { "text", *hint }, { "source", _hints.name() } });
                apply(event::HintProvided { *hint });
            }
            else
                apply(event::HintUnavailable {});
            continue;
        }

        if (auto const* verify = std::get_if<action::VerifyOracle>(&_state.pendingAction))
        {
            auto report = TestReport {};
            try
            {
                report = _executor.runOracle(verify->candidate, _state.problem->oracleSuite->suite);
            }
            catch (HarnessError const& e)
            {
                apply(event::Abort { "harness_error" });
                journal(EntryKind::StatusChange,
                        json {
                            { "status", toString(_state.status) },
                            { "reason", _state.stopReason },
                            { "message", e.what() },
                            { "oracle_outcome", toString(_state.oracleOutcome) },
                            { "prompts_sent", _state.promptsSent },
                        });
                return _state;
            }
            journal(EntryKind::TestReport, json { { "suite", "oracle" }, { "report", report.toJson() } });
            apply(event::OracleCompleted { report.allPass() });
            continue;
        }

        throw StateMachineError("session has no pending action");
    }
}

} // namespace tddloop
