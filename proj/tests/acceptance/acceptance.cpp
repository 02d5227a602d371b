// SPDX-License-Identifier: Apache-2.0
// Acceptance checks, one PASS/FAIL line each. Exits non-zero on any failure.
#include <tddloop/bench.hpp>
#include <tddloop/errors.hpp>
#include <tddloop/extract.hpp>
#include <tddloop/journal.hpp>
#include <tddloop/prompt.hpp>
#include <tddloop/runner.hpp>
#include <tddloop/session.hpp>

#include <fmt/format.h>

#include "testkit.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <stdexcept>

using namespace tddloop;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace
{
struct Failed: std::runtime_error
{
    using std::runtime_error::runtime_error;
};

void expect(bool condition, std::string const& what)
{
    if (!condition)
        throw Failed(what);
}

auto seconds(Clock::time_point since) -> double
{
    return std::chrono::duration<double>(Clock::now() - since).count();
}

auto replaceAll(std::string text, std::string const& from, std::string const& to) -> std::string
{
    for (auto at = text.find(from); at != std::string::npos; at = text.find(from, at + to.size()))
        text.replace(at, from.size(), to);
    return text;
}

auto templateFile(std::string const& name) -> std::string
{
    return testkit::readText(testkit::sourceDir() / "data" / "templates" / (name + ".txt"));
}

auto promptEntries(std::vector<JournalEntry> const& entries) -> std::vector<JournalEntry>
{
    return testkit::entriesOf(entries, EntryKind::PromptSent);
}

auto promptKinds(std::vector<JournalEntry> const& entries) -> std::vector<std::string>
{
    auto out = std::vector<std::string> {};
    for (auto const& e: promptEntries(entries))
        out.push_back(e.payload["kind"].get<std::string>());
    return out;
}

auto const fixtureRuns = std::vector<std::pair<std::string, std::string>> {
    { "1", "worked_example_1" },
    { "301", "regression_301" },
    { "1", "repetition_1" },
    { "9", "overfit_9" },
};

// 1
auto workedExample() -> std::string
{
    auto const dir = testkit::TempDir {};
    auto const started = Clock::now();
    auto const run = testkit::runScripted("1", testkit::fixtureScript("worked_example_1"), dir.path());
    auto const elapsed = seconds(started);

    expect(run.state.status == SessionStatus::Solved, "status is " + std::string(toString(run.state.status)));
    auto const prompts = promptEntries(run.entries);
    expect(prompts.size() == 2, fmt::format("{} prompts", prompts.size()));
    expect(run.entries.back().payload["prompts_sent"] == 2, "terminal entry does not record 2 prompts");
    expect(promptKinds(run.entries) == std::vector<std::string> { "Initial", "NextTest" }, "prompt kinds differ");

    auto const initial = replaceAll(replaceAll(templateFile("initial"), "[function signature]", "code1(x, y)"),
                                    "[test]",
                                    "def test_add_positives():\n    assert code1(2, 3) == 5");
    auto const next = replaceAll(templateFile("next_test"), "[test]", "def test_add_mixed():\n    assert code1(-2, 3) == 1");
    expect(prompts[0].payload["text"] == initial, "initial prompt differs from its template");
    expect(prompts[1].payload["text"] == next, "next-test prompt differs from its template");
    expect(elapsed < 5.0, fmt::format("took {:.2f} s", elapsed));
    return fmt::format("{:.2f} s", elapsed);
}

// 2
auto regressionPath() -> std::string
{
    auto const dir = testkit::TempDir {};
    auto const run = testkit::runScripted("301", testkit::fixtureScript("regression_301"), dir.path());

    auto regression = std::optional<JournalEntry> {};
    for (auto const& e: testkit::entriesOf(run.entries, EntryKind::Outcome))
        if (e.payload["outcome"] == "RegressionFails")
            regression = e;
    expect(regression.has_value(), "no RegressionFails outcome");
    expect(regression->payload["failing_prev_ids"] == json { "test_parentheses_with_letters" },
           "regressed ids are " + regression->payload["failing_prev_ids"].dump());

    // The prompt right after the regression.
    auto followUp = std::optional<JournalEntry> {};
    for (auto const& e: run.entries)
        if (e.seq > regression->seq && e.kind == EntryKind::PromptSent)
        {
            followUp = e;
            break;
        }
    expect(followUp && followUp->payload["kind"] == "TestFailure", "no TestFailure prompt after the regression");
    auto const expected = replaceAll(templateFile("test_failure"), "[testid]", "test_parentheses_with_letters");
    expect(followUp->payload["text"] == expected, "failure prompt does not name exactly the regressed test");

    auto const result = resultFromJournal(run.entries);
    expect(result.behaviors.contains(BehaviorFlag::NewCodeFailsPrev), "new_code_fails_prev not set");
    return "regressed test_parentheses_with_letters";
}

// 3
auto repetitionPath() -> std::string
{
    auto const dir = testkit::TempDir {};
    auto const run = testkit::runScripted("1", testkit::fixtureScript("repetition_1"), dir.path());

    auto repeats = std::vector<int> {};
    for (auto const& e: run.entries)
    {
        if (e.kind == EntryKind::Outcome && e.payload["outcome"] == "RepeatedCode")
        {
            repeats.push_back(e.payload["consecutive_repeats"].get<int>());
            auto const next = std::find_if(run.entries.begin(), run.entries.end(), [&](auto const& x) {
                return x.seq > e.seq && (x.kind == EntryKind::PromptSent || x.kind == EntryKind::HintRequested
                                         || x.kind == EntryKind::StatusChange);
            });
            expect(next != run.entries.end(), "nothing follows a repeat");
            auto const n = repeats.back();
            if (n == 1)
                expect(next->kind == EntryKind::PromptSent && next->payload["kind"] == "RepetitionNotice",
                       "repeat 1 did not send a repetition notice");
            else if (n == 2)
                expect(next->kind == EntryKind::HintRequested, "repeat 2 did not request a hint");
            else if (n == 3)
                expect(next->kind == EntryKind::StatusChange && next->payload["status"] == "Unsolved"
                           && next->payload["reason"] == "repetition_limit",
                       "repeat 3 did not stop with repetition_limit");
        }
    }
    expect(repeats == std::vector<int> { 1, 2, 3 }, "repeat counts are not 1, 2, 3");
    expect(run.state.status == SessionStatus::Unsolved && run.state.stopReason == "repetition_limit",
           "final state is not Unsolved(repetition_limit)");

    auto const sent = static_cast<int>(promptEntries(run.entries).size());
    // Bound: one prompt per test, three feedback prompts per test, one per hint.
    auto const tests = static_cast<int>(testkit::fixtureProblem("1")->suiteFor(Provenance::Manual)->tests.size());
    auto const hints = static_cast<int>(testkit::entriesOf(run.entries, EntryKind::HintProvided).size());
    auto const bound = tests + 3 * tests + hints;
    expect(run.entries.back().payload["prompts_sent"] == sent, "prompts_sent disagrees with the journal");
    expect(run.state.promptBound() == bound, fmt::format("state bound {} != {}", run.state.promptBound(), bound));
    expect(sent <= bound, fmt::format("{} prompts exceed the bound {}", sent, bound));
    return fmt::format("{} prompts, bound {}", sent, bound);
}

// 4
auto metricsFidelity() -> std::string
{
    auto const started = Clock::now();

    auto rate = std::vector<ProblemResult> {};
    for (auto i = 0; i < 70; ++i)
        rate.push_back(testkit::result(fmt::format("p{}", i), Difficulty::Easy, 3, 5, i < 62));
    auto const m1 = computeMetrics(rate);
    expect(std::abs(m1.successRate - 0.885) <= 0.001, fmt::format("success rate {}", m1.successRate));
    expect(m1.successRate == 62.0 / 70.0, "success rate is not 62/70");

    auto uniform = std::vector<ProblemResult> {};
    for (auto i = 0; i < 70; ++i)
        uniform.push_back(testkit::result(fmt::format("p{}", i), Difficulty::Medium, 5, 8));
    auto const m2 = computeMetrics(uniform);
    expect(m2.testsToPrompts.str() == "5:8", "ratio is " + m2.testsToPrompts.str());

    // Chart-shaped: published manual counts, automated counts at 2x overall
    // and 2.5x on the hard problems (9-15).
    auto const manual = testkit::publishedComparisonCounts().manual;
    auto const automated = std::vector<int> { 3, 1, 4, 2, 12, 1, 4, 12, 5, 3, 42, 10, 12, 10, 23 };
    auto a = std::vector<ProblemResult> {};
    auto b = std::vector<ProblemResult> {};
    auto sums = std::array<double, 4> {}; // all a, all b, hard a, hard b
    for (auto i = 0; i < 15; ++i)
    {
        auto const d = i < 4 ? Difficulty::Easy : i < 8 ? Difficulty::Medium : Difficulty::Hard;
        a.push_back(testkit::result(std::to_string(i + 1), d, 3, manual[static_cast<std::size_t>(i)]));
        b.push_back(testkit::result(std::to_string(i + 1), d, 3, automated[static_cast<std::size_t>(i)]));
        sums[0] += manual[static_cast<std::size_t>(i)];
        sums[1] += automated[static_cast<std::size_t>(i)];
        if (d == Difficulty::Hard)
        {
            sums[2] += manual[static_cast<std::size_t>(i)];
            sums[3] += automated[static_cast<std::size_t>(i)];
        }
    }
    expect(sums[1] / sums[0] == 2.0 && sums[3] / sums[2] == 2.5, "fixture does not encode 2.0 and 2.5");
    auto const rows = compareVariants(a, b, GroupBy::Difficulty);
    auto factor = [&](std::string const& group) {
        for (auto const& r: rows)
            if (r.group == group)
                return r.factor;
        throw Failed("no row for " + group);
    };
    expect(std::abs(factor("all") - 2.0) < 1e-9, fmt::format("overall factor {}", factor("all")));
    expect(std::abs(factor("hard") - 2.5) < 1e-9, fmt::format("hard factor {}", factor("hard")));

    auto const elapsed = seconds(started);
    expect(elapsed < 1.0, fmt::format("took {:.3f} s", elapsed));
    return fmt::format("rate {:.4f}, ratio {}, factors {:.1f}/{:.1f}, {:.3f} s",
                       m1.successRate,
                       m2.testsToPrompts.str(),
                       factor("all"),
                       factor("hard"),
                       elapsed);
}

// 5a
auto mutationProperty(std::mt19937& rng) -> int
{
    auto const base = std::vector<std::string> {
        "def code7(nums, k):",
        "    seen = {}",
        "    for i, n in enumerate(nums):",
        "        if k - n in seen:",
        "            return [seen[k - n], i]",
        "        seen[n] = i",
        "    return []",
    };
    auto const join = [](std::vector<std::string> const& lines) {
        auto out = std::string {};
        for (auto const& l: lines)
            out += l + "\n";
        return out;
    };
    auto const reference = extract(testkit::fenced(join(base)), "code7(nums, k)");
    auto const comments = std::vector<std::string> { "# check", "# k - n", "#", "# 'x' \"y\"", "# return nums" };
    auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t> { 0, n - 1 }(rng); };

    auto cases = 0;
    for (; cases < 1000; ++cases)
    {
        auto lines = base;
        for (auto e = pick(4) + 1; e > 0; --e)
        {
            auto const at = pick(lines.size());
            auto const indent = lines[at].find_first_not_of(' ');
            auto const pad = std::string(indent == std::string::npos ? 0 : indent, ' ');
            switch (pick(4))
            {
                case 0: lines[at] += "  " + comments[pick(comments.size())]; break;
                case 1: lines.insert(lines.begin() + static_cast<std::ptrdiff_t>(at) + 1, ""); break;
                case 2: lines.insert(lines.begin() + static_cast<std::ptrdiff_t>(at) + 1, pad + comments[pick(comments.size())]); break;
                case 3: lines[at] = replaceAll(lines[at], ", ", ",  "); break;
            }
        }
        auto const mutated = extract(testkit::fenced(join(lines)), "code7(nums, k)");
        expect(isRepeat(reference, mutated, 0.95), "mutation not detected as a repeat:\n" + join(lines));
    }
    return cases;
}

auto syntheticProblem(int nTests, bool oracle, int nHints) -> std::shared_ptr<ProblemManifest const>
{
    auto p = ProblemManifest {};
    p.id = "5";
    p.sanitizedSignature = "code5(n)";
    auto suite = TestSuite {};
    for (auto k = 1; k <= nTests; ++k)
        suite.tests.push_back(
            { .id = fmt::format("test_{}", k), .name = fmt::format("test_{}", k), .body = fmt::format("def test_{0}():\n    assert code5({0}) == {0}", k) });
    p.suites.push_back({ "tests_manual", suite });
    if (oracle)
        p.oracleSuite = SuiteRef { "oracle", TestSuite { { { .id = "test_o", .name = "test_o", .body = "def test_o():\n    assert code5(0) == 0" } }, Provenance::Manual, SuiteRole::Oracle } };
    for (auto k = 0; k < nHints; ++k)
        p.hints.push_back(fmt::format("hint {}", k));
    return std::make_shared<ProblemManifest const>(std::move(p));
}

// 5b
auto terminationProperty(std::mt19937& rng) -> int
{
    auto coin = [&](double p) { return std::bernoulli_distribution { p }(rng); };
    auto const bodies = std::vector<std::string> {
        "    return n", "    return 1", "    return n - 1", "    return n  # same", "    # TODO\n    return n",
    };
    auto sessions = 0;
    for (; sessions < 500; ++sessions)
    {
        auto const n = std::uniform_int_distribution { 1, 6 }(rng);
        auto r = step(makeSession(syntheticProblem(n, coin(0.5), std::uniform_int_distribution { 0, 2 }(rng)), {}),
                      event::Start {});
        auto steps = 0;
        while (!std::holds_alternative<action::Stop>(r.action))
        {
            expect(++steps < 10'000, "session did not terminate");
            auto ev = Event {};
            if (std::holds_alternative<action::SendPrompt>(r.action))
                ev = coin(0.05) ? event::LLMResponse { "no code" }
                                : event::LLMResponse { testkit::fenced("def code5(n):\n" + bodies[std::uniform_int_distribution<std::size_t> { 0, bodies.size() - 1 }(rng)]) };
            else if (auto const* run = std::get_if<action::RunTests>(&r.action))
            {
                auto report = TestReport {};
                for (auto const& id: run->testIds)
                    report.results[id] = { coin(0.7) ? TestStatus::Pass : TestStatus::Fail, "" };
                ev = event::TestsCompleted { report };
            }
            else if (std::holds_alternative<action::RequestHint>(r.action))
                ev = r.state.hintCursor < static_cast<int>(r.state.problem->hints.size()) ? Event { event::HintProvided { "h" } }
                                                                                         : Event { event::HintUnavailable {} };
            else
                ev = event::OracleCompleted { coin(0.5) };
            r = step(r.state, ev);
            expect(r.state.promptsSent <= r.state.promptBound(),
                   fmt::format("{} prompts exceed bound {}", r.state.promptsSent, r.state.promptBound()));
        }
        expect(isTerminal(r.state.status), "stopped in a non-terminal status");
    }
    return sessions;
}

// 5c
auto foldProperty() -> int
{
    auto checked = 0;
    for (auto const& [problem, script]: fixtureRuns)
    {
        auto const dir = testkit::TempDir {};
        auto const run = testkit::runScripted(problem, testkit::fixtureScript(script), dir.path());
        auto const folded = foldJournal(loadJournal(run.journal), testkit::fixtureLookup());
        expect(folded.state == run.state, "fold differs from live state for " + script);
        ++checked;
    }
    return checked;
}

// 5d
auto placeholderProperty(std::mt19937& rng) -> int
{
    auto const placeholders = std::vector<std::string> {
        "[function signature]", "[test]", "[testid]", "[hint text]", "[meta test]", "[name]", "[inputs]", "[output]",
    };
    auto const kinds = std::vector<PromptKind> {
        PromptKind::Initial,          PromptKind::NextTest,      PromptKind::TestFailure,    PromptKind::RepetitionNotice,
        PromptKind::ImplementationHint, PromptKind::PlainTextTest, PromptKind::MetaTestUpdate,
    };
    auto word = [&] {
        auto const alphabet = std::string("abcdefghijklmnopqrstuvwxyz_0123456789 ()=,'\"\n[]{}");
        auto s = std::string {};
        for (auto n = std::uniform_int_distribution { 1, 40 }(rng); n > 0; --n)
            s += alphabet[std::uniform_int_distribution<std::size_t> { 0, alphabet.size() - 1 }(rng)];
        return s;
    };
    auto renders = 0;
    for (auto round = 0; round < 300; ++round)
        for (auto const kind: kinds)
        {
            auto ctx = PromptContext {};
            ctx.sanitizedSignature = word();
            ctx.testBody = word();
            ctx.failingTestIds = { word(), word() };
            ctx.hintText = word();
            ctx.metaTestBody = word();
            ctx.testName = word();
            ctx.inputs = word();
            ctx.expectedOutput = word();
            ctx.requestCompleteCode = round % 2 == 0;
            auto const text = render(kind, ctx);
            for (auto const& p: placeholders)
                expect(text.find(p) == std::string::npos, fmt::format("{} left in a {} prompt", p, toString(kind)));
            ++renders;
        }
    return renders;
}

auto properties() -> std::string
{
    auto rng = std::mt19937 { 2024 };
    auto const a = mutationProperty(rng);
    auto const b = terminationProperty(rng);
    auto const c = foldProperty();
    auto const d = placeholderProperty(rng);
    return fmt::format("{} mutations, {} sessions, {} folds, {} renders", a, b, c, d);
}

// 6
auto oracleGate() -> std::string
{
    auto const dir = testkit::TempDir {};
    auto const run = testkit::runScripted("9", testkit::fixtureScript("overfit_9"), dir.path());
    auto const reports = testkit::entriesOf(run.entries, EntryKind::TestReport);
    expect(reports.size() >= 2, "missing test reports");
    auto const driving = TestReport::fromJson(reports[reports.size() - 2].payload["report"]);
    auto const oracle = TestReport::fromJson(reports.back().payload["report"]);
    expect(reports[reports.size() - 2].payload["suite"] == "driving" && driving.allPass(),
           "final code does not pass the driving suite");
    expect(reports.back().payload["suite"] == "oracle" && !oracle.allPass(), "oracle suite did not fail");
    expect(run.state.status == SessionStatus::Unsolved && run.state.stopReason == "oracle_failed",
           fmt::format("finalized {}({})", toString(run.state.status), run.state.stopReason));
    auto const result = resultFromJournal(run.entries);
    expect(!result.solved && result.oracleOutcome == OracleOutcome::OracleFailed, "result does not record the oracle failure");
    return "Unsolved(oracle_failed)";
}

// 7
auto replayDeterminism() -> std::string
{
    auto compared = 0;
    for (auto const& [problem, script]: fixtureRuns)
    {
        auto const dir = testkit::TempDir {};
        auto const original = testkit::runScripted(problem, testkit::fixtureScript(script), dir.path() / "live");
        auto const transcriptPath = dir.path() / "transcript.jsonl";
        writeTranscript(transcriptPath, journalToTranscript(original.entries));

        auto config = ProviderConfig {};
        config.kind = ProviderKind::Replay;
        config.transcriptPath = transcriptPath;
        std::filesystem::create_directories(dir.path() / "replay" / "ws");
        auto executor = HarnessExecutor(RunnerAdapter::pythonReference(), dir.path() / "replay" / "ws");
        auto const replayed = testkit::runWith(testkit::fixtureProblem(problem), makeBackend(config), executor, dir.path() / "replay");
        expect(testkit::timestampFree(replayed.entries) == testkit::timestampFree(original.entries),
               "replayed journal differs for " + script);
        ++compared;
    }
    return fmt::format("{} journals identical", compared);
}
} // namespace

int main()
{
    auto const criteria = std::vector<std::pair<std::string, std::function<std::string()>>> {
        { "worked example end-to-end", workedExample },
        { "regression path", regressionPath },
        { "repetition and abort", repetitionPath },
        { "metrics fidelity", metricsFidelity },
        { "property suites", properties },
        { "oracle gate", oracleGate },
        { "replay determinism", replayDeterminism },
    };

    auto failures = 0;
    for (auto i = std::size_t { 0 }; i < criteria.size(); ++i)
    {
        auto const& [name, check] = criteria[i];
        try
        {
            auto const detail = check();
            std::cout << fmt::format("PASS {} {} ({})\n", i + 1, name, detail);
        }
        catch (std::exception const& e)
        {
            ++failures;
            std::cout << fmt::format("FAIL {} {}: {}\n", i + 1, name, e.what());
        }
        std::cout.flush();
    }
    return failures == 0 ? 0 : 1;
}
