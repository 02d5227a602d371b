// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tddloop/corpus.hpp>
#include <tddloop/harness.hpp>
#include <tddloop/journal.hpp>
#include <tddloop/provider.hpp>
#include <tddloop/session.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace tddloop
{

enum class BehaviorFlag
{
    UniqueCode,
    RepeatedCode,
    NewCodePassesPrev,
    NewCodeFailsPrev,
};

[[nodiscard]] auto toString(BehaviorFlag f) -> std::string_view;
[[nodiscard]] auto parseBehaviorFlag(std::string_view s) -> BehaviorFlag;

struct ProblemResult
{
    std::string problemId;
    Difficulty difficulty = Difficulty::Easy;
    std::string ioDatatypes; // "int,int->int"
    bool solved = false;
    OracleOutcome oracleOutcome = OracleOutcome::Pending;
    int nTests = 0;
    int nPrompts = 0;
    std::set<BehaviorFlag> behaviors;
    std::string stopReason;

    auto operator==(ProblemResult const&) const -> bool = default;

    [[nodiscard]] auto toJson() const -> nlohmann::json;
    [[nodiscard]] static auto fromJson(nlohmann::json const& j) -> ProblemResult;
};

/// Derives a problem's result from its journal alone.
[[nodiscard]] auto resultFromJournal(std::vector<JournalEntry> const& entries) -> ProblemResult;

struct Rational
{
    std::int64_t numerator = 0;
    std::int64_t denominator = 1;

    auto operator==(Rational const&) const -> bool = default;

    /// Reduced to lowest terms; a zero denominator is kept as n:0.
    [[nodiscard]] static auto reduced(std::int64_t n, std::int64_t d) -> Rational;
    [[nodiscard]] auto str() const -> std::string; // "5:8"
    [[nodiscard]] auto value() const -> double;
};

struct AggregateMetrics
{
    int total = 0;
    int solvedCount = 0;
    double successRate = 0.0;
    std::int64_t totalTests = 0;
    std::int64_t totalPrompts = 0;
    Rational testsToPrompts;
    double meanOfRatios = 0.0; // per-problem tests/prompts, averaged
    // flag -> difficulty -> count; each flag also carries a "total" entry
    std::map<std::string, std::map<std::string, int>> behaviorFrequencies;
    std::map<std::string, double> meanPromptsByDifficulty;

    [[nodiscard]] auto toJson() const -> nlohmann::json;
};

/// Throws std::invalid_argument on an empty result list.
[[nodiscard]] auto computeMetrics(std::vector<ProblemResult> const& results) -> AggregateMetrics;

enum class GroupBy
{
    None,
    Difficulty,
    IoDatatypes,
};

[[nodiscard]] auto parseGroupBy(std::string_view s) -> GroupBy;

struct ComparisonRow
{
    std::string group; // "all" for the overall row
    int count = 0;
    double meanA = 0.0;
    double meanB = 0.0;
    double factor = 0.0;       // meanB / meanA
    double meanOfRatios = 0.0; // mean of per-problem b/a
};

/// The overall row comes first, then one row per group in sorted order.
/// Throws ComparisonError naming ids present in only one set.
[[nodiscard]] auto compareVariants(std::vector<ProblemResult> const& a,
                                   std::vector<ProblemResult> const& b,
                                   GroupBy groupBy) -> std::vector<ComparisonRow>;

/// Columns: group,mean_a,mean_b,factor
[[nodiscard]] auto comparisonCsv(std::vector<ComparisonRow> const& rows) -> std::string;

using BackendFactory = std::function<std::shared_ptr<Backend const>(ProblemManifest const&)>;

/// Per-problem backends from a provider config: scripted responses keyed by
/// problem id, or replay transcripts found in a directory as <id>.jsonl.
[[nodiscard]] auto backendFactory(ProviderConfig const& config,
                                  std::map<std::string, std::vector<std::string>> scripts = {})
    -> BackendFactory;

struct BenchOptions
{
    std::filesystem::path outDir;
    SessionSettings settings;
    int parallelism = 1;
    RunnerAdapter adapter = RunnerAdapter::pythonReference();
    LanguageProfile profile = pythonProfile();
};

[[nodiscard]] auto benchSessionId(std::string_view problemId, SessionSettings const& settings) -> std::string;

/// One journaled session per problem. A finished journal for the same
/// session id is reused as-is; an unfinished one is resumed.
[[nodiscard]] auto runBench(std::vector<ProblemManifest> const& corpus,
                            BackendFactory const& backends,
                            BenchOptions const& options) -> std::vector<ProblemResult>;

/// Results recomputed from every journal under <outDir>/sessions.
[[nodiscard]] auto resultsFromJournals(std::filesystem::path const& outDir) -> std::vector<ProblemResult>;

[[nodiscard]] auto resultsToJson(std::vector<ProblemResult> const& results) -> nlohmann::json;
[[nodiscard]] auto loadResults(std::filesystem::path const& path) -> std::vector<ProblemResult>;

/// Writes results.json and metrics.json into outDir.
void writeBenchOutputs(std::filesystem::path const& outDir, std::vector<ProblemResult> const& results);

} // namespace tddloop
