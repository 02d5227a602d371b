// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tddloop/corpus.hpp>
#include <tddloop/extract.hpp>
#include <tddloop/harness.hpp>
#include <tddloop/prompt.hpp>

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tddloop
{

enum class PromptFormat
{
    Default,
    PlainText,
    MetaTest,
};

enum class SessionStatus
{
    Running,
    AwaitingHint,
    Solved,
    Unsolved,
    Aborted,
};

enum class OutcomeKind
{
    AllPass,
    NewTestFails,
    RegressionFails,
    RepeatedCode,
    IncompleteCode,
    NoCode,
};

enum class OracleOutcome
{
    Pending,
    Passed,
    OracleFailed,
    OracleAbsent,
};

[[nodiscard]] auto toString(PromptFormat f) -> std::string_view;
[[nodiscard]] auto toString(SessionStatus s) -> std::string_view;
[[nodiscard]] auto toString(OutcomeKind k) -> std::string_view;
[[nodiscard]] auto toString(OracleOutcome o) -> std::string_view;
[[nodiscard]] auto parsePromptFormat(std::string_view s) -> PromptFormat;
[[nodiscard]] auto parseSessionStatus(std::string_view s) -> SessionStatus;
[[nodiscard]] auto parseOutcomeKind(std::string_view s) -> OutcomeKind;
[[nodiscard]] auto parseOracleOutcome(std::string_view s) -> OracleOutcome;
[[nodiscard]] auto isTerminal(SessionStatus s) -> bool;

struct OutcomeClass
{
    OutcomeKind kind = OutcomeKind::AllPass;
    std::vector<std::string> failingPrevIds; // RegressionFails only

    auto operator==(OutcomeClass const&) const -> bool = default;
};

struct CodeRevision
{
    int iteration = 0;
    std::optional<CandidateCode> candidate; // absent when no code was found
    TestReport report;
    OutcomeClass outcome;

    auto operator==(CodeRevision const&) const -> bool = default;
};

struct SessionSettings
{
    Provenance suiteVariant = Provenance::Manual;
    PromptFormat promptFormat = PromptFormat::Default;
    double similarityThreshold = 0.95;
    // One presentation prompt plus this many feedback prompts per test, on
    // average over the session; hint prompts are not counted.
    int feedbackPromptsPerTest = 3;
    bool includeDescription = false;

    auto operator==(SessionSettings const&) const -> bool = default;
};

namespace action
{
    struct SendPrompt
    {
        PromptKind kind {};
        PromptContext context;
        std::string text;
        auto operator==(SendPrompt const&) const -> bool = default;
    };

    struct RunTests
    {
        CandidateCode candidate;
        std::vector<std::string> testIds;
        auto operator==(RunTests const&) const -> bool = default;
    };

    struct RequestHint
    {
        auto operator==(RequestHint const&) const -> bool = default;
    };

    struct VerifyOracle
    {
        CandidateCode candidate;
        auto operator==(VerifyOracle const&) const -> bool = default;
    };

    struct Stop
    {
        SessionStatus status {};
        std::string reason;
        auto operator==(Stop const&) const -> bool = default;
    };
} // namespace action

using Action = std::variant<std::monostate,
                            action::SendPrompt,
                            action::RunTests,
                            action::RequestHint,
                            action::VerifyOracle,
                            action::Stop>;

namespace event
{
    struct Start
    {
    };

    struct LLMResponse
    {
        std::string text;
    };

    struct TestsCompleted
    {
        TestReport report;
    };

    struct HintProvided
    {
        std::string text;
    };

    /// Batch mode ran out of manifest hints.
    struct HintUnavailable
    {
    };

    struct OracleCompleted
    {
        bool passed = false;
    };

    /// External stop: operator abort or an infrastructure failure.
    struct Abort
    {
        std::string reason = "aborted";
    };
} // namespace event

using Event = std::variant<event::Start,
                           event::LLMResponse,
                           event::TestsCompleted,
                           event::HintProvided,
                           event::HintUnavailable,
                           event::OracleCompleted,
                           event::Abort>;

[[nodiscard]] auto eventName(Event const& e) -> std::string_view;

/// The loop's complete state. Advanced only through step().
struct SessionState
{
    std::shared_ptr<ProblemManifest const> problem;
    SessionSettings settings;
    bool started = false;
    int activeTestIndex = 0; // tests [0, activeTestIndex] have been presented
    std::vector<CodeRevision> revisions;
    int consecutiveRepeats = 0;
    int hintCursor = 0;
    int promptsSent = 0;
    int feedbackPromptsSent = 0;
    int hintPromptsSent = 0;
    SessionStatus status = SessionStatus::Running;
    std::optional<TestReport> lastReport;
    std::optional<CandidateCode> pendingCandidate;
    OracleOutcome oracleOutcome = OracleOutcome::Pending;
    std::string stopReason;
    Action pendingAction; // the action returned by the last step

    [[nodiscard]] auto drivingTests() const -> std::vector<TestCase> const&;
    [[nodiscard]] auto activeTests() const -> std::vector<TestCase>;
    [[nodiscard]] auto activeTestIds() const -> std::vector<std::string>;

    /// Upper bound on prompts: one per test, the feedback allowance, and
    /// one per hint supplied.
    [[nodiscard]] auto promptBound() const -> int;

    auto operator==(SessionState const& other) const -> bool;
};

/// Throws StateMachineError when the problem lacks a suite for the variant.
[[nodiscard]] auto makeSession(std::shared_ptr<ProblemManifest const> problem, SessionSettings settings) -> SessionState;

struct StepResult
{
    SessionState state;
    Action action;
};

/// One transition of the loop. Pure: the same state and event always give
/// the same result. Throws StateMachineError for an event that is illegal in
/// the current state; the input state is never modified.
[[nodiscard]] auto step(SessionState const& state, Event const& event) -> StepResult;

/// Token-level similarity 2*|LCS| / (|a| + |b|); 1.0 for two empty sequences.
[[nodiscard]] auto similarityRatio(std::vector<std::string> const& a, std::vector<std::string> const& b) -> double;

[[nodiscard]] auto isRepeat(CandidateCode const& previous, CandidateCode const& next, double threshold) -> bool;

/// Outcome precedence: NoCode > IncompleteCode > RepeatedCode > RegressionFails
/// > NewTestFails > AllPass. A repeat only counts while some test still fails.
[[nodiscard]] auto classify(std::set<std::string> const& previouslyPassing,
                            TestReport const& report,
                            CodeRevision const* previousRevision,
                            std::optional<CandidateCode> const& candidate,
                            double threshold) -> OutcomeClass;

/// Runs the final candidate against the oracle suite in a fresh workspace
/// under `workspaceParent`. Returns nullopt when the manifest has no oracle.
[[nodiscard]] auto verifyOracle(SessionState const& state,
                                RunnerAdapter const& adapter,
                                std::filesystem::path const& workspaceParent,
                                LanguageProfile const& profile = pythonProfile()) -> std::optional<TestReport>;

} // namespace tddloop
