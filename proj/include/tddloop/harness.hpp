// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tddloop/corpus.hpp>
#include <tddloop/extract.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace tddloop
{

enum class TestStatus
{
    Pass,
    Fail,
    Error,
    Timeout,
};

[[nodiscard]] auto toString(TestStatus s) -> std::string_view;
[[nodiscard]] auto parseTestStatus(std::string_view s) -> TestStatus;

struct TestResult
{
    TestStatus status = TestStatus::Error;
    std::string message;

    auto operator==(TestResult const&) const -> bool = default;
};

struct TestReport
{
    std::map<std::string, TestResult> results;
    std::int64_t startedMs = 0; // unix epoch milliseconds
    std::int64_t finishedMs = 0;

    auto operator==(TestReport const&) const -> bool = default;

    [[nodiscard]] auto allPass() const -> bool;
    [[nodiscard]] auto passes(std::string const& testId) const -> bool;

    [[nodiscard]] auto toJson() const -> nlohmann::json;
    [[nodiscard]] static auto fromJson(nlohmann::json const& j) -> TestReport;
};

/// How to invoke a test runner. The command template must carry {workspace}
/// and {report}; {shim} expands to the bundled Python runner shim.
struct RunnerAdapter
{
    std::string commandTemplate;
    std::filesystem::path reportPath = ".report.jsonl"; // relative paths resolve inside the workspace
    double perRunTimeoutSeconds = 30.0;
    std::vector<std::string> envAllowlist = { "PATH", "HOME", "LANG", "LC_ALL", "PYTHONPATH" };
    std::map<std::string, std::string> extraEnv = { { "PYTHONDONTWRITEBYTECODE", "1" } };
    std::filesystem::path shimPath = TDDLOOP_DEFAULT_SHIM;

    void validate() const;

    /// Reference configuration: the bundled shim under python3.
    [[nodiscard]] static auto pythonReference() -> RunnerAdapter;
    [[nodiscard]] static auto fromJson(nlohmann::json const& j) -> RunnerAdapter;
};

/// A session-private directory holding the implementation file and one file
/// per active test. Removed on destruction unless kept.
class Workspace
{
  public:
    /// Creates a fresh uniquely named directory under `parent`.
    [[nodiscard]] static auto create(std::filesystem::path const& parent,
                                     LanguageProfile const& profile = pythonProfile()) -> Workspace;

    Workspace(Workspace&& other) noexcept;
    auto operator=(Workspace&& other) noexcept -> Workspace&;
    Workspace(Workspace const&) = delete;
    auto operator=(Workspace const&) -> Workspace& = delete;
    ~Workspace();

    [[nodiscard]] auto root() const -> std::filesystem::path const& { return _root; }
    [[nodiscard]] auto implFile() const -> std::filesystem::path;
    [[nodiscard]] auto testDir() const -> std::filesystem::path;
    [[nodiscard]] auto testFiles() const -> std::vector<std::filesystem::path>;

    void keep() noexcept { _keep = true; }

    /// Writes the candidate and one file per test; deletes stale test files.
    void materialize(CandidateCode const& code, std::vector<TestCase> const& tests);

    /// Runs the adapter command and parses its report. Tests without a
    /// record are "error: missing from report", or "timeout" if the run was
    /// killed. Throws HarnessError when the report cannot be read.
    [[nodiscard]] auto run(RunnerAdapter const& adapter, std::vector<std::string> const& activeTests) const
        -> TestReport;

  private:
    Workspace(std::filesystem::path root, LanguageProfile profile);

    std::filesystem::path _root;
    LanguageProfile _profile;
    bool _keep = false;
};

[[nodiscard]] auto nowMs() -> std::int64_t;

} // namespace tddloop
