// SPDX-License-Identifier: Apache-2.0
#include <tddloop/bench.hpp>
#include <tddloop/journal.hpp>

#include <catch_amalgamated.hpp>
#include <fmt/format.h>

#include "testkit.hpp"

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

using namespace tddloop;
using nlohmann::json;
namespace fs = std::filesystem;

namespace
{
struct Outcome
{
    int exitCode = -1;
    std::string output;
};

auto cli(std::string const& args, fs::path const& scratch) -> Outcome
{
    auto const log = scratch / "cli.log";
    auto const command = fmt::format("'{}' {} > '{}' 2>&1", testkit::cliPath().string(), args, log.string());
    auto const status = std::system(command.c_str());
    auto out = Outcome {};
    out.exitCode = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    out.output = testkit::readText(log);
    return out;
}

auto corpusArg() -> std::string
{
    return fmt::format("--corpus '{}'", (testkit::fixturesDir() / "corpus").string());
}

auto scriptFile(fs::path const&, std::string const& name) -> fs::path
{
    return testkit::fixturesDir() / "scripts" / (name + ".json");
}
} // namespace

TEST_CASE("run exits 0 when solved and 1 otherwise")
{
    auto const dir = testkit::TempDir {};
    auto const solved = cli(fmt::format("run {} --problem 1 --out '{}' --script '{}'",
                                        corpusArg(),
                                        dir.path().string(),
                                        scriptFile(dir.path(), "worked_example_1").string()),
                            dir.path());
    INFO(solved.output);
    CHECK(solved.exitCode == 0);
    CHECK(fs::exists(journalPath(dir.path(), "1-manual-default")));

    auto const stuck = cli(fmt::format("run {} --problem 1 --out '{}' --session-id rep --script '{}'",
                                       corpusArg(),
                                       dir.path().string(),
                                       scriptFile(dir.path(), "repetition_1").string()),
                           dir.path());
    INFO(stuck.output);
    CHECK(stuck.exitCode == 1);
    CHECK(resultFromJournal(loadJournal(journalPath(dir.path(), "rep"))).stopReason == "repetition_limit");
}

TEST_CASE("configuration errors exit 2")
{
    auto const dir = testkit::TempDir {};
    auto const script = scriptFile(dir.path(), "worked_example_1").string();
    CHECK(cli(fmt::format("run {} --problem 404 --out '{}' --script '{}'", corpusArg(), dir.path().string(), script),
              dir.path())
              .exitCode
          == 2);
    CHECK(cli(fmt::format("run --corpus /nonexistent --problem 1 --out '{}'", dir.path().string()), dir.path()).exitCode
          == 2);
    CHECK(cli(fmt::format("run {} --problem 1 --out '{}' --provider remote", corpusArg(), dir.path().string()),
              dir.path())
              .exitCode
          == 2);
    CHECK(cli("frobnicate", dir.path()).exitCode == 2);

    // A second run must not overwrite an existing journal.
    auto const args = fmt::format("run {} --problem 1 --out '{}' --script '{}'", corpusArg(), dir.path().string(), script);
    CHECK(cli(args, dir.path()).exitCode == 0);
    auto const again = cli(args, dir.path());
    CHECK(again.exitCode == 2);
    CHECK_THAT(again.output, Catch::Matchers::ContainsSubstring("exists"));
}

TEST_CASE("resume finishes an open journal and refuses a finished one")
{
    auto const dir = testkit::TempDir {};
    auto const script = scriptFile(dir.path(), "worked_example_1").string();
    REQUIRE(cli(fmt::format("run {} --problem 1 --out '{}' --script '{}'", corpusArg(), dir.path().string(), script),
                dir.path())
                .exitCode
            == 0);
    auto const journal = journalPath(dir.path(), "1-manual-default");

    auto const finished = cli(fmt::format("resume {} --journal '{}' --out '{}' --script '{}'",
                                          corpusArg(),
                                          journal.string(),
                                          dir.path().string(),
                                          script),
                              dir.path());
    CHECK(finished.exitCode == 2);
    CHECK_THAT(finished.output, Catch::Matchers::ContainsSubstring("already finished"));

    // Keep only the first prompt and response.
    auto const entries = loadJournal(journal);
    auto const open = journalPath(dir.path(), "open");
    {
        auto out = std::ofstream(open);
        for (auto const& e: entries)
        {
            auto copy = e;
            copy.sessionId = "open";
            out << copy.toJson().dump() << "\n";
            if (e.kind == EntryKind::ResponseReceived)
                break;
        }
    }
    auto const resumed = cli(fmt::format("resume {} --journal '{}' --out '{}' --script '{}'",
                                         corpusArg(),
                                         open.string(),
                                         dir.path().string(),
                                         script),
                             dir.path());
    INFO(resumed.output);
    CHECK(resumed.exitCode == 0);
    auto const result = resultFromJournal(loadJournal(open));
    CHECK(result.solved);
    CHECK(result.nPrompts == 2);
}

TEST_CASE("report recomputes metrics and compares variants")
{
    auto const a = testkit::TempDir {};
    auto const b = testkit::TempDir {};
    auto const scripts = a.path() / "scripts.json";
    testkit::writeText(scripts,
                       json { { "1", testkit::fixtureScript("worked_example_1") },
                              { "9", testkit::fixtureScript("overfit_9") },
                              { "301", testkit::fixtureScript("regression_301") } }
                           .dump());
    for (auto const* dir: { &a, &b })
    {
        auto const r = cli(fmt::format("bench {} --out '{}' --script '{}'", corpusArg(), dir->path().string(), scripts.string()),
                           dir->path());
        INFO(r.output);
        CHECK(r.exitCode == 0);
    }
    fs::remove(a.path() / "metrics.json");

    auto const report = cli(fmt::format("report --out '{}' --compare-with '{}' --group-by difficulty",
                                        a.path().string(),
                                        b.path().string()),
                            a.path());
    INFO(report.output);
    CHECK(report.exitCode == 0);
    auto const metrics = json::parse(testkit::readText(a.path() / "metrics.json"));
    CHECK(metrics["total"] == 3);
    CHECK(metrics["success_rate"] == Catch::Approx(2.0 / 3.0));
    auto const csv = testkit::readText(a.path() / "comparison.csv");
    CHECK(csv.starts_with("group,mean_a,mean_b,factor\nall,"));
    CHECK_THAT(csv, Catch::Matchers::ContainsSubstring("\nhard,"));
}

TEST_CASE("bench runs many problems in parallel")
{
    auto const dir = testkit::TempDir {};
    auto problems = std::vector<ProblemManifest> {};
    auto scripts = json::object();
    for (auto k = 1; k <= 8; ++k)
    {
        auto p = ProblemManifest {};
        p.id = std::to_string(100 + k);
        p.difficulty = k % 2 ? Difficulty::Easy : Difficulty::Medium;
        p.sanitizedSignature = fmt::format("code{}(n)", 100 + k);
        p.inputDatatypes = { DataType::Int };
        p.outputDatatype = DataType::Int;
        auto suite = TestSuite {};
        for (auto t = 1; t <= 2; ++t)
            suite.tests.push_back({ .id = fmt::format("test_{}", t),
                                    .name = fmt::format("test_{}", t),
                                    .body = fmt::format("def test_{0}():\n    assert code{1}({0}) == {0} * {2}", t, 100 + k, k) });
        p.suites.push_back({ "tests_manual", suite });
        problems.push_back(p);
        auto const code = fmt::format("def code{}(n):\n    return n * {}", 100 + k, k);
        scripts[p.id] = { testkit::fenced(code), testkit::fenced(code) };
    }
    writeCorpus(dir.path() / "corpus", problems);
    testkit::writeText(dir.path() / "scripts.json", scripts.dump());

    auto const r = cli(fmt::format("bench --corpus '{}' --out '{}' --parallelism 4 --script '{}'",
                                   (dir.path() / "corpus").string(),
                                   (dir.path() / "out").string(),
                                   (dir.path() / "scripts.json").string()),
                       dir.path());
    INFO(r.output);
    CHECK(r.exitCode == 0);
    auto const results = loadResults(dir.path() / "out" / "results.json");
    CHECK(results.size() == 8);
    for (auto const& result: results)
    {
        CHECK(result.solved);
        CHECK(result.nPrompts == 2);
        CHECK(result.oracleOutcome == OracleOutcome::OracleAbsent);
    }
}

TEST_CASE("a replayed transcript reproduces the journal")
{
    auto const dir = testkit::TempDir {};
    auto const first = dir.path() / "first";
    auto const second = dir.path() / "second";
    REQUIRE(cli(fmt::format("run {} --problem 301 --out '{}' --script '{}'",
                            corpusArg(),
                            first.string(),
                            scriptFile(dir.path(), "regression_301").string()),
                dir.path())
                .exitCode
            == 0);
    auto const original = loadJournal(journalPath(first, "301-manual-default"));
    auto const transcript = dir.path() / "301.jsonl";
    writeTranscript(transcript, journalToTranscript(original));

    auto const replay = cli(fmt::format("run {} --problem 301 --out '{}' --provider replay --transcript '{}'",
                                        corpusArg(),
                                        second.string(),
                                        transcript.string()),
                            dir.path());
    INFO(replay.output);
    CHECK(replay.exitCode == 0);
    CHECK(testkit::timestampFree(loadJournal(journalPath(second, "301-manual-default")))
          == testkit::timestampFree(original));
}
