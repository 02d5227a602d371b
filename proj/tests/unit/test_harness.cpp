// SPDX-License-Identifier: Apache-2.0
#include <tddloop/errors.hpp>
#include <tddloop/extract.hpp>
#include <tddloop/harness.hpp>

#include <catch_amalgamated.hpp>

#include "testkit.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>

using namespace tddloop;
namespace fs = std::filesystem;

namespace
{
auto candidate(std::string const& code) -> CandidateCode
{
    return extract(testkit::fenced(code), "code1(x, y)");
}

auto manualTests() -> std::vector<TestCase>
{
    return testkit::fixtureProblem("1")->suiteFor(Provenance::Manual)->tests;
}

auto ids(std::vector<TestCase> const& tests) -> std::vector<std::string>
{
    auto out = std::vector<std::string> {};
    for (auto const& t: tests)
        out.push_back(t.id);
    return out;
}

using Snapshot = std::map<std::string, std::pair<std::string, fs::file_time_type>>;

auto snapshot(fs::path const& root) -> Snapshot
{
    auto out = Snapshot {};
    for (auto const& e: fs::recursive_directory_iterator(root))
        // Dot files are the runner's own report and log.
        if (e.is_regular_file() && !e.path().filename().string().starts_with("."))
            out[fs::relative(e.path(), root).string()] = { testkit::readText(e.path()), e.last_write_time() };
    return out;
}
} // namespace

TEST_CASE("materialize writes one implementation file and one file per test")
{
    auto const parent = testkit::TempDir {};
    auto ws = Workspace::create(parent.path());
    ws.materialize(candidate("def code1(x, y):\n    return x + y"), manualTests());

    CHECK(fs::exists(ws.implFile()));
    auto const files = ws.testFiles();
    REQUIRE(files.size() == 2);
    CHECK(files[0].filename() == "test_add_mixed.py");
    CHECK(files[1].filename() == "test_add_positives.py");
    CHECK_THAT(testkit::readText(ws.implFile()), Catch::Matchers::ContainsSubstring("return x + y"));
}

TEST_CASE("materialize is idempotent and drops stale tests")
{
    auto const parent = testkit::TempDir {};
    auto ws = Workspace::create(parent.path());
    auto const code = candidate("def code1(x, y):\n    return x + y");
    ws.materialize(code, manualTests());
    auto const first = snapshot(ws.root());
    ws.materialize(code, manualTests());
    CHECK(snapshot(ws.root()) == first);

    auto const one = std::vector<TestCase> { manualTests().front() };
    ws.materialize(code, one);
    CHECK(ws.testFiles().size() == 1);

    ws.materialize(code, {});
    CHECK(ws.testFiles().empty());
    CHECK(fs::exists(ws.implFile()));
}

TEST_CASE("workspace is removed unless kept")
{
    auto const parent = testkit::TempDir {};
    auto removed = fs::path {};
    auto kept = fs::path {};
    {
        auto ws = Workspace::create(parent.path());
        removed = ws.root();
        auto other = Workspace::create(parent.path());
        other.keep();
        kept = other.root();
        CHECK(removed != kept);
    }
    CHECK_FALSE(fs::exists(removed));
    CHECK(fs::exists(kept));
}

TEST_CASE("running the reference adapter")
{
    auto const parent = testkit::TempDir {};
    auto ws = Workspace::create(parent.path());
    auto const adapter = RunnerAdapter::pythonReference();
    auto const tests = manualTests();

    SECTION("correct code passes every test")
    {
        ws.materialize(candidate("def code1(x, y):\n    return x + y"), tests);
        auto const report = ws.run(adapter, ids(tests));
        CHECK(report.results.size() == 2);
        CHECK(report.allPass());
        CHECK(report.startedMs <= report.finishedMs);
    }
    SECTION("a constant stub passes only the matching test")
    {
        ws.materialize(candidate("def code1(x, y):\n    return 5"), tests);
        auto const report = ws.run(adapter, ids(tests));
        CHECK(report.passes("test_add_positives"));
        CHECK(report.results.at("test_add_mixed").status == TestStatus::Fail);
        CHECK_FALSE(report.allPass());
    }
    SECTION("a raising implementation is an error")
    {
        ws.materialize(candidate("def code1(x, y):\n    raise ValueError('no')"), tests);
        auto const report = ws.run(adapter, ids(tests));
        CHECK(report.results.at("test_add_positives").status == TestStatus::Error);
        CHECK_THAT(report.results.at("test_add_positives").message, Catch::Matchers::ContainsSubstring("ValueError"));
    }
    SECTION("a syntax error fails every test without a crash")
    {
        ws.materialize(candidate("def code1(x, y):\n    return (x +"), tests);
        auto const report = ws.run(adapter, ids(tests));
        CHECK(report.results.size() == 2);
        CHECK_FALSE(report.allPass());
    }
    SECTION("an empty active set gives an empty report")
    {
        ws.materialize(candidate("def code1(x, y):\n    return x + y"), {});
        auto const report = ws.run(adapter, {});
        CHECK(report.results.empty());
    }
    SECTION("a requested test without a record is an error")
    {
        ws.materialize(candidate("def code1(x, y):\n    return x + y"), tests);
        auto const report = ws.run(adapter, { "test_add_positives", "test_not_there" });
        CHECK(report.passes("test_add_positives"));
        CHECK(report.results.at("test_not_there").status == TestStatus::Error);
    }
    SECTION("running does not modify the workspace")
    {
        ws.materialize(candidate("def code1(x, y):\n    return x + y"), tests);
        auto const before = snapshot(ws.root());
        (void)ws.run(adapter, ids(tests));
        (void)ws.run(adapter, ids(tests));
        CHECK(snapshot(ws.root()) == before);
    }
}

TEST_CASE("a nonterminating implementation times out")
{
    auto const parent = testkit::TempDir {};
    auto ws = Workspace::create(parent.path());
    auto adapter = RunnerAdapter::pythonReference();
    adapter.perRunTimeoutSeconds = 1.0;
    auto const tests = manualTests();
    ws.materialize(candidate("def code1(x, y):\n    while True:\n        pass"), tests);

    auto const started = std::chrono::steady_clock::now();
    auto const report = ws.run(adapter, ids(tests));
    auto const elapsed = std::chrono::steady_clock::now() - started;

    CHECK(elapsed < std::chrono::seconds(10));
    REQUIRE(report.results.size() == 2);
    for (auto const& [id, r]: report.results)
        CHECK(r.status == TestStatus::Timeout);
}

TEST_CASE("adapter validation")
{
    auto adapter = RunnerAdapter::pythonReference();
    CHECK_NOTHROW(adapter.validate());
    adapter.commandTemplate = "python3 {shim} --report {report}";
    CHECK_THROWS_AS(adapter.validate(), HarnessError);
    adapter = RunnerAdapter::pythonReference();
    adapter.perRunTimeoutSeconds = 0;
    CHECK_THROWS_AS(adapter.validate(), HarnessError);
}

TEST_CASE("adapter config file matches the reference")
{
    auto const j = nlohmann::json::parse(testkit::readText(testkit::sourceDir() / "config" / "runner.python.json"));
    auto const fromFile = RunnerAdapter::fromJson(j);
    auto const reference = RunnerAdapter::pythonReference();
    CHECK(fromFile.commandTemplate == reference.commandTemplate);
    CHECK(fromFile.reportPath == reference.reportPath);
    CHECK(fromFile.perRunTimeoutSeconds == reference.perRunTimeoutSeconds);
    CHECK(fromFile.envAllowlist == reference.envAllowlist);
}

TEST_CASE("a missing report is a harness error")
{
    auto const parent = testkit::TempDir {};
    auto ws = Workspace::create(parent.path());
    auto adapter = RunnerAdapter::pythonReference();
    adapter.commandTemplate = "true {workspace} {report}";
    ws.materialize(candidate("def code1(x, y):\n    return x + y"), manualTests());
    CHECK_THROWS_AS((void)ws.run(adapter, ids(manualTests())), HarnessError);
}

TEST_CASE("report JSON round trip")
{
    auto report = TestReport {};
    report.results["a"] = { TestStatus::Pass, "" };
    report.results["b"] = { TestStatus::Timeout, "killed" };
    report.startedMs = 10;
    report.finishedMs = 20;
    CHECK(TestReport::fromJson(report.toJson()) == report);
    CHECK(TestReport {}.allPass());
    CHECK(parseTestStatus("timeout") == TestStatus::Timeout);
}
