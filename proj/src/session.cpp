// SPDX-License-Identifier: Apache-2.0
#include <tddloop/errors.hpp>
#include <tddloop/session.hpp>

#include <algorithm>

#include <fmt/format.h>

namespace tddloop
{

namespace
{

    template <typename... Ts>
    struct Overloaded: Ts...
    {
        using Ts::operator()...;
    };
    template <typename... Ts>
    Overloaded(Ts...) -> Overloaded<Ts...>;

    // Text standing in for [test] when test number `index` is presented.
    auto presentTest(SessionState const& s, int index) -> std::string
    {
        auto const& tests = s.drivingTests();
        auto const& test = tests.at(static_cast<std::size_t>(index));
        auto const& signature = s.problem->sanitizedSignature;
        switch (s.settings.promptFormat)
        {
            case PromptFormat::Default: return test.body;
            case PromptFormat::PlainText:
                try
                {
                    return renderPlainTextTest(test, signature);
                }
                catch (FormatError const&)
                {
                    return test.body;
                }
            case PromptFormat::MetaTest:
                try
                {
                    auto const prefix = std::vector<TestCase>(tests.begin(), tests.begin() + index + 1);
                    return renderMetaTest(prefix, signature);
                }
                catch (RenderError const&)
                {
                    return test.body;
                }
        }
        return test.body;
    }

    auto sendPrompt(SessionState& s, PromptKind kind, PromptContext ctx) -> Action
    {
        auto text = render(kind, ctx);
        if (kind == PromptKind::Initial && s.settings.includeDescription && s.problem->description)
            text = fmt::format("Problem description: {}\n\n{}", *s.problem->description, text);
        ++s.promptsSent;
        if (kind == PromptKind::ImplementationHint)
            ++s.hintPromptsSent;
        else if (kind != PromptKind::Initial && kind != PromptKind::NextTest && kind != PromptKind::MetaTestUpdate)
            ++s.feedbackPromptsSent;
        return action::SendPrompt { kind, std::move(ctx), std::move(text) };
    }

    auto stop(SessionState& s, SessionStatus status, std::string reason) -> Action
    {
        s.status = status;
        s.stopReason = reason;
        return action::Stop { status, std::move(reason) };
    }

    auto feedbackBudget(SessionState const& s) -> int
    {
        return s.settings.feedbackPromptsPerTest * static_cast<int>(s.drivingTests().size());
    }

    // Feedback prompt, unless the session has used up its allowance.
    auto sendFeedback(SessionState& s, PromptKind kind, PromptContext ctx) -> Action
    {
        if (s.feedbackPromptsSent >= feedbackBudget(s))
            return stop(s, SessionStatus::Unsolved, "prompt_budget_exhausted");
        return sendPrompt(s, kind, std::move(ctx));
    }

    auto failingIds(SessionState const& s, TestReport const& report) -> std::vector<std::string>
    {
        auto ids = std::vector<std::string> {};
        for (auto const& id: s.activeTestIds())
            if (!report.passes(id))
                ids.push_back(id);
        return ids;
    }

    auto lastCodeRevision(SessionState const& s) -> CodeRevision const*
    {
        for (auto it = s.revisions.rbegin(); it != s.revisions.rend(); ++it)
            if (it->candidate)
                return &*it;
        return nullptr;
    }

    auto previouslyPassing(SessionState const& s) -> std::set<std::string>
    {
        auto ids = std::set<std::string> {};
        if (s.lastReport)
            for (auto const& [id, r]: s.lastReport->results)
                if (r.status == TestStatus::Pass)
                    ids.insert(id);
        return ids;
    }

    auto illegal(SessionState const& s, Event const& e) -> StateMachineError
    {
        return StateMachineError(fmt::format("event {} is illegal in status {}", eventName(e), toString(s.status)));
    }

    auto completenessPrompt(SessionState& s, std::vector<std::string> ids) -> Action
    {
        if (ids.empty())
            ids.push_back(s.drivingTests().at(static_cast<std::size_t>(s.activeTestIndex)).id);
        auto ctx = PromptContext {};
        ctx.failingTestIds = std::move(ids);
        ctx.requestCompleteCode = true;
        return sendFeedback(s, PromptKind::TestFailure, std::move(ctx));
    }

    auto onStart(SessionState& s) -> Action
    {
        s.started = true;
        s.activeTestIndex = 0;
        auto ctx = PromptContext {};
        ctx.sanitizedSignature = s.problem->sanitizedSignature;
        ctx.testBody = presentTest(s, 0);
        return sendPrompt(s, PromptKind::Initial, std::move(ctx));
    }

    auto onResponse(SessionState& s, std::string const& text) -> Action
    {
        try
        {
            auto candidate = extract(text, s.problem->sanitizedSignature);
            s.pendingCandidate = candidate;
            return action::RunTests { std::move(candidate), s.activeTestIds() };
        }
        catch (NoCodeFoundError const&)
        {
            s.revisions.push_back({ .iteration = static_cast<int>(s.revisions.size()) + 1,
                                    .candidate = std::nullopt,
                                    .report = {},
                                    .outcome = { OutcomeKind::NoCode, {} } });
            return completenessPrompt(s, {});
        }
    }

    auto onTestsCompleted(SessionState& s, TestReport const& report) -> Action
    {
        auto const candidate = *s.pendingCandidate;
        s.pendingCandidate.reset();

        auto const* previous = lastCodeRevision(s);
        auto const outcome = classify(previouslyPassing(s), report, previous, candidate, s.settings.similarityThreshold);
        auto const repeated = previous && isRepeat(*previous->candidate, candidate, s.settings.similarityThreshold);

        s.revisions.push_back({ .iteration = static_cast<int>(s.revisions.size()) + 1,
                                .candidate = candidate,
                                .report = report,
                                .outcome = outcome });
        s.lastReport = report;

        switch (outcome.kind)
        {
            case OutcomeKind::AllPass:
            {
                s.consecutiveRepeats = 0;
                auto const n = static_cast<int>(s.drivingTests().size());
                if (s.activeTestIndex + 1 < n)
                {
                    ++s.activeTestIndex;
                    auto ctx = PromptContext {};
                    if (s.settings.promptFormat == PromptFormat::MetaTest)
                    {
                        ctx.metaTestBody = presentTest(s, s.activeTestIndex);
                        return sendPrompt(s, PromptKind::MetaTestUpdate, std::move(ctx));
                    }
                    ctx.testBody = presentTest(s, s.activeTestIndex);
                    return sendPrompt(s, PromptKind::NextTest, std::move(ctx));
                }
                if (s.problem->oracleSuite)
                    return action::VerifyOracle { candidate };
                s.oracleOutcome = OracleOutcome::OracleAbsent;
                return stop(s, SessionStatus::Solved, "solved");
            }
            case OutcomeKind::NewTestFails:
            case OutcomeKind::RegressionFails:
            {
                s.consecutiveRepeats = 0;
                auto ctx = PromptContext {};
                ctx.failingTestIds = failingIds(s, report);
                return sendFeedback(s, PromptKind::TestFailure, std::move(ctx));
            }
            case OutcomeKind::RepeatedCode:
                ++s.consecutiveRepeats;
                if (s.consecutiveRepeats == 1)
                    return sendFeedback(s, PromptKind::RepetitionNotice, {});
                if (s.consecutiveRepeats == 2)
                {
                    s.status = SessionStatus::AwaitingHint;
                    return action::RequestHint {};
                }
                return stop(s, SessionStatus::Unsolved, "repetition_limit");
            case OutcomeKind::IncompleteCode:
                if (!repeated)
                    s.consecutiveRepeats = 0;
                return completenessPrompt(s, failingIds(s, report));
            case OutcomeKind::NoCode: break;
        }
        return completenessPrompt(s, {});
    }

} // namespace

auto toString(PromptFormat f) -> std::string_view
{
    switch (f)
    {
        case PromptFormat::Default: return "default";
        case PromptFormat::PlainText: return "plain-text";
        case PromptFormat::MetaTest: return "meta-test";
    }
    return "default";
}

auto toString(SessionStatus s) -> std::string_view
{
    switch (s)
    {
        case SessionStatus::Running: return "Running";
        case SessionStatus::AwaitingHint: return "AwaitingHint";
        case SessionStatus::Solved: return "Solved";
        case SessionStatus::Unsolved: return "Unsolved";
        case SessionStatus::Aborted: return "Aborted";
    }
    return "Running";
}

auto toString(OutcomeKind k) -> std::string_view
{
    switch (k)
    {
        case OutcomeKind::AllPass: return "AllPass";
        case OutcomeKind::NewTestFails: return "NewTestFails";
        case OutcomeKind::RegressionFails: return "RegressionFails";
        case OutcomeKind::RepeatedCode: return "RepeatedCode";
        case OutcomeKind::IncompleteCode: return "IncompleteCode";
        case OutcomeKind::NoCode: return "NoCode";
    }
    return "NoCode";
}

auto toString(OracleOutcome o) -> std::string_view
{
    switch (o)
    {
        case OracleOutcome::Pending: return "pending";
        case OracleOutcome::Passed: return "passed";
        case OracleOutcome::OracleFailed: return "oracle_failed";
        case OracleOutcome::OracleAbsent: return "oracle_absent";
    }
    return "pending";
}

auto parsePromptFormat(std::string_view s) -> PromptFormat
{
    for (auto const f: { PromptFormat::Default, PromptFormat::PlainText, PromptFormat::MetaTest })
        if (toString(f) == s)
            return f;
    throw Error(fmt::format("unknown prompt format \"{}\"", s));
}

auto parseSessionStatus(std::string_view s) -> SessionStatus
{
    for (auto const v: { SessionStatus::Running,
                         SessionStatus::AwaitingHint,
                         SessionStatus::Solved,
                         SessionStatus::Unsolved,
                         SessionStatus::Aborted })
        if (toString(v) == s)
            return v;
    throw Error(fmt::format("unknown session status \"{}\"", s));
}

auto parseOutcomeKind(std::string_view s) -> OutcomeKind
{
    for (auto const v: { OutcomeKind::AllPass,
                         OutcomeKind::NewTestFails,
                         OutcomeKind::RegressionFails,
                         OutcomeKind::RepeatedCode,
                         OutcomeKind::IncompleteCode,
                         OutcomeKind::NoCode })
        if (toString(v) == s)
            return v;
    throw Error(fmt::format("unknown outcome \"{}\"", s));
}

auto parseOracleOutcome(std::string_view s) -> OracleOutcome
{
    for (auto const v:
         { OracleOutcome::Pending, OracleOutcome::Passed, OracleOutcome::OracleFailed, OracleOutcome::OracleAbsent })
        if (toString(v) == s)
            return v;
    throw Error(fmt::format("unknown oracle outcome \"{}\"", s));
}

auto isTerminal(SessionStatus s) -> bool
{
    return s == SessionStatus::Solved || s == SessionStatus::Unsolved || s == SessionStatus::Aborted;
}

auto eventName(Event const& e) -> std::string_view
{
    return std::visit(Overloaded {
                          [](event::Start const&) { return std::string_view("Start"); },
                          [](event::LLMResponse const&) { return std::string_view("LLMResponse"); },
                          [](event::TestsCompleted const&) { return std::string_view("TestsCompleted"); },
                          [](event::HintProvided const&) { return std::string_view("HintProvided"); },
                          [](event::HintUnavailable const&) { return std::string_view("HintUnavailable"); },
                          [](event::OracleCompleted const&) { return std::string_view("OracleCompleted"); },
                          [](event::Abort const&) { return std::string_view("Abort"); },
                      },
                      e);
}

auto SessionState::drivingTests() const -> std::vector<TestCase> const&
{
    return problem->suiteFor(settings.suiteVariant)->tests;
}

auto SessionState::activeTests() const -> std::vector<TestCase>
{
    auto const& all = drivingTests();
    auto const count = std::min(all.size(), static_cast<std::size_t>(activeTestIndex + 1));
    return { all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count) };
}

auto SessionState::activeTestIds() const -> std::vector<std::string>
{
    auto ids = std::vector<std::string> {};
    for (auto const& t: activeTests())
        ids.push_back(t.id);
    return ids;
}

auto SessionState::promptBound() const -> int
{
    auto const n = static_cast<int>(drivingTests().size());
    return n + settings.feedbackPromptsPerTest * n + hintPromptsSent;
}

auto SessionState::operator==(SessionState const& other) const -> bool
{
    auto const sameProblem = (problem == other.problem) || (problem && other.problem && *problem == *other.problem);
    return sameProblem && settings == other.settings && started == other.started
           && activeTestIndex == other.activeTestIndex && revisions == other.revisions
           && consecutiveRepeats == other.consecutiveRepeats && hintCursor == other.hintCursor
           && promptsSent == other.promptsSent && feedbackPromptsSent == other.feedbackPromptsSent
           && hintPromptsSent == other.hintPromptsSent && status == other.status && lastReport == other.lastReport
           && pendingCandidate == other.pendingCandidate && oracleOutcome == other.oracleOutcome
           && stopReason == other.stopReason && pendingAction == other.pendingAction;
}

auto makeSession(std::shared_ptr<ProblemManifest const> problem, SessionSettings settings) -> SessionState
{
    if (!problem)
        throw StateMachineError("session requires a problem");
    auto const* suite = problem->suiteFor(settings.suiteVariant);
    if (!suite || suite->tests.empty())
        throw StateMachineError(
            fmt::format("problem {} has no {} suite", problem->id, toString(settings.suiteVariant)));
    if (settings.similarityThreshold < 0.0 || settings.similarityThreshold > 1.0)
        throw StateMachineError("similarity threshold must lie in [0, 1]");
    auto state = SessionState {};
    state.problem = std::move(problem);
    state.settings = settings;
    return state;
}

auto step(SessionState const& state, Event const& ev) -> StepResult
{
    auto s = state;
    if (isTerminal(s.status))
        throw illegal(state, ev);

    auto const awaiting = [&]<typename A>() { return std::holds_alternative<A>(s.pendingAction); };

    auto next = std::visit(
        Overloaded {
            [&](event::Start const&) -> Action {
                if (s.started)
                    throw illegal(state, ev);
                return onStart(s);
            },
            [&](event::LLMResponse const& e) -> Action {
                if (s.status != SessionStatus::Running || !awaiting.template operator()<action::SendPrompt>())
                    throw illegal(state, ev);
                return onResponse(s, e.text);
            },
            [&](event::TestsCompleted const& e) -> Action {
                if (!awaiting.template operator()<action::RunTests>() || !s.pendingCandidate)
                    throw illegal(state, ev);
                return onTestsCompleted(s, e.report);
            },
            [&](event::HintProvided const& e) -> Action {
                if (s.status != SessionStatus::AwaitingHint)
                    throw illegal(state, ev);
                s.status = SessionStatus::Running;
                ++s.hintCursor;
                auto ctx = PromptContext {};
                ctx.hintText = e.text;
                return sendPrompt(s, PromptKind::ImplementationHint, std::move(ctx));
            },
            [&](event::HintUnavailable const&) -> Action {
                if (s.status != SessionStatus::AwaitingHint)
                    throw illegal(state, ev);
                return stop(s, SessionStatus::Unsolved, "hints_exhausted");
            },
            [&](event::OracleCompleted const& e) -> Action {
                if (!awaiting.template operator()<action::VerifyOracle>())
                    throw illegal(state, ev);
                if (e.passed)
                {
                    s.oracleOutcome = OracleOutcome::Passed;
                    return stop(s, SessionStatus::Solved, "solved");
                }
                s.oracleOutcome = OracleOutcome::OracleFailed;
                return stop(s, SessionStatus::Unsolved, "oracle_failed");
            },
            [&](event::Abort const& e) -> Action {
                s.pendingCandidate.reset();
                return stop(s, SessionStatus::Aborted, e.reason);
            },
        },
        ev);

    s.pendingAction = next;
    return { std::move(s), std::move(next) };
}

auto similarityRatio(std::vector<std::string> const& a, std::vector<std::string> const& b) -> double
{
    if (a.empty() && b.empty())
        return 1.0;
    // Two-row dynamic program over the shorter sequence.
    auto const& outer = a.size() >= b.size() ? a : b;
    auto const& inner = a.size() >= b.size() ? b : a;
    auto prev = std::vector<std::size_t>(inner.size() + 1, 0);
    auto curr = prev;
    for (auto const& x: outer)
    {
        for (auto j = std::size_t { 1 }; j <= inner.size(); ++j)
            curr[j] = x == inner[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], curr[j - 1]);
        std::swap(prev, curr);
    }
    auto const lcs = prev[inner.size()];
    return 2.0 * static_cast<double>(lcs) / static_cast<double>(a.size() + b.size());
}

auto isRepeat(CandidateCode const& previous, CandidateCode const& next, double threshold) -> bool
{
    if (previous.normalized == next.normalized)
        return true;
    return similarityRatio(previous.normalized, next.normalized) >= threshold;
}

auto classify(std::set<std::string> const& previouslyPassing,
              TestReport const& report,
              CodeRevision const* previousRevision,
              std::optional<CandidateCode> const& candidate,
              double threshold) -> OutcomeClass
{
    if (!candidate)
        return { OutcomeKind::NoCode, {} };
    if (candidate->incomplete)
        return { OutcomeKind::IncompleteCode, {} };
    if (report.allPass())
        return { OutcomeKind::AllPass, {} };
    if (previousRevision && previousRevision->candidate && isRepeat(*previousRevision->candidate, *candidate, threshold))
        return { OutcomeKind::RepeatedCode, {} };

    auto regressed = std::vector<std::string> {};
    for (auto const& [id, result]: report.results)
        if (result.status != TestStatus::Pass && previouslyPassing.contains(id))
            regressed.push_back(id);
    if (!regressed.empty())
        return { OutcomeKind::RegressionFails, std::move(regressed) };
    return { OutcomeKind::NewTestFails, {} };
}

auto verifyOracle(SessionState const& state,
                  RunnerAdapter const& adapter,
                  std::filesystem::path const& workspaceParent,
                  LanguageProfile const& profile) -> std::optional<TestReport>
{
    if (!state.problem->oracleSuite)
        return std::nullopt;
    auto const* revision = [&]() -> CodeRevision const* {
        for (auto it = state.revisions.rbegin(); it != state.revisions.rend(); ++it)
            if (it->candidate)
                return &*it;
        return nullptr;
    }();
    if (!revision)
        throw StateMachineError("no candidate code to verify");

    auto const& tests = state.problem->oracleSuite->suite.tests;
    auto ids = std::vector<std::string> {};
    for (auto const& t: tests)
        ids.push_back(t.id);
    auto workspace = Workspace::create(workspaceParent, profile);
    workspace.materialize(*revision->candidate, tests);
    return workspace.run(adapter, ids);
}

} // namespace tddloop
