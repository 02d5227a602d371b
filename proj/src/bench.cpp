// SPDX-License-Identifier: Apache-2.0
#include <tddloop/bench.hpp>
#include <tddloop/errors.hpp>
#include <tddloop/runner.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

namespace tddloop
{

namespace
{
    constexpr std::array<std::pair<BehaviorFlag, std::string_view>, 4> behaviorNames { {
        { BehaviorFlag::UniqueCode, "unique_code" },
        { BehaviorFlag::RepeatedCode, "repeated_code" },
        { BehaviorFlag::NewCodePassesPrev, "new_code_passes_prev" },
        { BehaviorFlag::NewCodeFailsPrev, "new_code_fails_prev" },
    } };

    auto writeFile(fs::path const& path, std::string const& text)
    {
        auto out = std::ofstream(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error(fmt::format("cannot write {}", path.string()));
        out << text;
    }

    // Summed in sorted order so the result does not depend on input order.
    auto mean(std::vector<double> values) -> double
    {
        if (values.empty())
            return 0.0;
        std::sort(values.begin(), values.end());
        return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    }

    auto groupKey(ProblemResult const& r, GroupBy groupBy) -> std::string
    {
        switch (groupBy)
        {
            case GroupBy::None: return "all";
            case GroupBy::Difficulty: return std::string(toString(r.difficulty));
            case GroupBy::IoDatatypes: return r.ioDatatypes;
        }
        return "all";
    }
} // namespace

auto toString(BehaviorFlag f) -> std::string_view
{
    for (auto const& [flag, name]: behaviorNames)
        if (flag == f)
            return name;
    return "unknown";
}

auto parseBehaviorFlag(std::string_view s) -> BehaviorFlag
{
    for (auto const& [flag, name]: behaviorNames)
        if (name == s)
            return flag;
    throw std::invalid_argument(fmt::format("unknown behavior flag '{}'", s));
}

auto ProblemResult::toJson() const -> json
{
    auto flags = json::array();
    for (auto const f: behaviors)
        flags.push_back(toString(f));
    return json {
        { "problem_id", problemId },
        { "difficulty", toString(difficulty) },
        { "io_datatypes", ioDatatypes },
        { "solved", solved },
        { "oracle_outcome", toString(oracleOutcome) },
        { "n_tests", nTests },
        { "n_prompts", nPrompts },
        { "behaviors", flags },
        { "stop_reason", stopReason },
    };
}

auto ProblemResult::fromJson(json const& j) -> ProblemResult
{
    auto r = ProblemResult {};
    r.problemId = j.at("problem_id").get<std::string>();
    r.difficulty = parseDifficulty(j.at("difficulty").get<std::string>());
    r.ioDatatypes = j.value("io_datatypes", "");
    r.solved = j.at("solved").get<bool>();
    r.oracleOutcome = parseOracleOutcome(j.value("oracle_outcome", "pending"));
    r.nTests = j.at("n_tests").get<int>();
    r.nPrompts = j.at("n_prompts").get<int>();
    for (auto const& f: j.value("behaviors", json::array()))
        r.behaviors.insert(parseBehaviorFlag(f.get<std::string>()));
    r.stopReason = j.value("stop_reason", "");
    return r;
}

auto resultFromJournal(std::vector<JournalEntry> const& entries) -> ProblemResult
{
    auto const header = readHeader(entries);
    auto r = ProblemResult {};
    r.problemId = header.problemId;
    r.difficulty = parseDifficulty(header.difficulty);
    r.ioDatatypes = header.ioDatatypes;
    r.nTests = static_cast<int>(header.testCount);
    r.stopReason = "incomplete";

    auto repeated = false;
    for (auto const& e: entries)
    {
        switch (e.kind)
        {
            case EntryKind::PromptSent: ++r.nPrompts; break;
            case EntryKind::Outcome:
            {
                auto const kind = parseOutcomeKind(e.payload.at("outcome").get<std::string>());
                auto const iteration = e.payload.at("iteration").get<int>();
                if (kind == OutcomeKind::RepeatedCode)
                    repeated = true;
                else if (kind == OutcomeKind::RegressionFails)
                    r.behaviors.insert(BehaviorFlag::NewCodeFailsPrev);
                else if ((kind == OutcomeKind::AllPass || kind == OutcomeKind::NewTestFails) && iteration > 1)
                    r.behaviors.insert(BehaviorFlag::NewCodePassesPrev);
                break;
            }
            case EntryKind::StatusChange:
                if (isTerminalEntry(e))
                {
                    auto const status = parseSessionStatus(e.payload.at("status").get<std::string>());
                    r.solved = status == SessionStatus::Solved;
                    r.stopReason = e.payload.value("reason", "");
                    r.oracleOutcome = parseOracleOutcome(e.payload.value("oracle_outcome", "pending"));
                }
                break;
            default: break;
        }
    }
    r.behaviors.insert(repeated ? BehaviorFlag::RepeatedCode : BehaviorFlag::UniqueCode);
    return r;
}

auto Rational::reduced(std::int64_t n, std::int64_t d) -> Rational
{
    if (d == 0)
        return { n, 0 };
    auto const g = std::gcd(n, d);
    return { n / g, d / g };
}

auto Rational::str() const -> std::string
{
    return fmt::format("{}:{}", numerator, denominator);
}

auto Rational::value() const -> double
{
    return denominator == 0 ? 0.0 : static_cast<double>(numerator) / static_cast<double>(denominator);
}

auto AggregateMetrics::toJson() const -> json
{
    return json {
        { "total", total },
        { "solved", solvedCount },
        { "success_rate", successRate },
        { "tests_to_prompts_ratio",
          {
              { "tests", totalTests },
              { "prompts", totalPrompts },
              { "ratio", testsToPrompts.str() },
              { "decimal", testsToPrompts.value() },
          } },
        { "mean_of_ratios", meanOfRatios },
        { "behavior_frequencies", behaviorFrequencies },
        { "mean_prompts_by_difficulty", meanPromptsByDifficulty },
    };
}

auto computeMetrics(std::vector<ProblemResult> const& results) -> AggregateMetrics
{
    if (results.empty())
        throw std::invalid_argument("no results to aggregate");

    auto m = AggregateMetrics {};
    m.total = static_cast<int>(results.size());
    auto ratios = std::vector<double> {};
    auto promptsByDifficulty = std::map<std::string, std::vector<double>> {};
    for (auto const& [flag, name]: behaviorNames)
        m.behaviorFrequencies[std::string(name)]["total"] = 0;

    for (auto const& r: results)
    {
        if (r.solved)
            ++m.solvedCount;
        m.totalTests += r.nTests;
        m.totalPrompts += r.nPrompts;
        if (r.nPrompts > 0)
            ratios.push_back(static_cast<double>(r.nTests) / r.nPrompts);
        auto const difficulty = std::string(toString(r.difficulty));
        promptsByDifficulty[difficulty].push_back(r.nPrompts);
        for (auto const flag: r.behaviors)
        {
            auto& counts = m.behaviorFrequencies[std::string(toString(flag))];
            ++counts[difficulty];
            ++counts["total"];
        }
    }
    m.successRate = static_cast<double>(m.solvedCount) / m.total;
    m.testsToPrompts = Rational::reduced(m.totalTests, m.totalPrompts);
    m.meanOfRatios = mean(ratios);
    for (auto const& [difficulty, prompts]: promptsByDifficulty)
        m.meanPromptsByDifficulty[difficulty] = mean(prompts);
    return m;
}

auto parseGroupBy(std::string_view s) -> GroupBy
{
    if (s == "none")
        return GroupBy::None;
    if (s == "difficulty")
        return GroupBy::Difficulty;
    if (s == "io_datatypes")
        return GroupBy::IoDatatypes;
    throw std::invalid_argument(fmt::format("unknown grouping '{}'", s));
}

auto compareVariants(std::vector<ProblemResult> const& a, std::vector<ProblemResult> const& b, GroupBy groupBy)
    -> std::vector<ComparisonRow>
{
    auto byIdA = std::map<std::string, ProblemResult const*> {};
    auto byIdB = std::map<std::string, ProblemResult const*> {};
    for (auto const& r: a)
        byIdA[r.problemId] = &r;
    for (auto const& r: b)
        byIdB[r.problemId] = &r;

    auto missing = std::vector<std::string> {};
    for (auto const& [id, _]: byIdA)
        if (!byIdB.contains(id))
            missing.push_back(id + " (absent from b)");
    for (auto const& [id, _]: byIdB)
        if (!byIdA.contains(id))
            missing.push_back(id + " (absent from a)");
    if (!missing.empty())
        throw ComparisonError(fmt::format("result sets differ: {}", fmt::join(missing, ", ")));

    struct Accumulator
    {
        std::vector<double> promptsA, promptsB, ratios;
    };
    auto overall = Accumulator {};
    auto groups = std::map<std::string, Accumulator> {};
    for (auto const& [id, ra]: byIdA)
    {
        auto const* rb = byIdB.at(id);
        auto add = [&](Accumulator& acc) {
            acc.promptsA.push_back(ra->nPrompts);
            acc.promptsB.push_back(rb->nPrompts);
            if (ra->nPrompts > 0)
                acc.ratios.push_back(static_cast<double>(rb->nPrompts) / ra->nPrompts);
        };
        add(overall);
        if (groupBy != GroupBy::None)
            add(groups[groupKey(*ra, groupBy)]);
    }

    auto row = [](std::string group, Accumulator const& acc) {
        auto r = ComparisonRow {};
        r.group = std::move(group);
        r.count = static_cast<int>(acc.promptsA.size());
        r.meanA = mean(acc.promptsA);
        r.meanB = mean(acc.promptsB);
        r.factor = r.meanA == 0.0 ? 0.0 : r.meanB / r.meanA;
        r.meanOfRatios = mean(acc.ratios);
        return r;
    };
    auto rows = std::vector<ComparisonRow> { row("all", overall) };
    for (auto const& [group, acc]: groups)
        rows.push_back(row(group, acc));
    return rows;
}

auto comparisonCsv(std::vector<ComparisonRow> const& rows) -> std::string
{
    auto out = std::string("group,mean_a,mean_b,factor\n");
    for (auto const& r: rows)
    {
        auto group = r.group;
        if (group.find_first_of(",\"") != std::string::npos)
        {
            auto quoted = std::string("\"");
            for (auto const c: group)
                quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
            group = quoted + "\"";
        }
        out += fmt::format("{},{:.6g},{:.6g},{:.6g}\n", group, r.meanA, r.meanB, r.factor);
    }
    return out;
}

auto backendFactory(ProviderConfig const& config, std::map<std::string, std::vector<std::string>> scripts)
    -> BackendFactory
{
    return [config, scripts = std::move(scripts)](ProblemManifest const& problem) -> std::shared_ptr<Backend const> {
        switch (config.kind)
        {
            case ProviderKind::Scripted:
            {
                if (auto const it = scripts.find(problem.id); it != scripts.end())
                    return std::make_shared<ScriptedBackend>(it->second);
                if (!config.scriptedResponses.empty())
                    return std::make_shared<ScriptedBackend>(config.scriptedResponses);
                throw ProviderError(fmt::format("no scripted responses for problem {}", problem.id));
            }
            case ProviderKind::Replay:
            {
                auto path = config.transcriptPath;
                if (fs::is_directory(path))
                    path /= problem.id + ".jsonl";
                return std::make_shared<ReplayBackend>(loadTranscript(path));
            }
            default: return makeBackend(config);
        }
    };
}

auto benchSessionId(std::string_view problemId, SessionSettings const& settings) -> std::string
{
    return fmt::format("{}-{}-{}", problemId, toString(settings.suiteVariant), toString(settings.promptFormat));
}

namespace
{
    auto runOne(ProblemManifest const& problem,
                std::map<std::string, std::shared_ptr<ProblemManifest const>> const& byId,
                BackendFactory const& backends,
                BenchOptions const& options) -> ProblemResult
    {
        auto const sessionId = benchSessionId(problem.id, options.settings);
        auto const path = journalPath(options.outDir, sessionId);

        auto backend = std::shared_ptr<Backend const> {};
        try
        {
            backend = backends(problem);
        }
        catch (Error const& e)
        {
            backend = std::make_shared<FailingBackend>(e.what());
        }

        auto executor = HarnessExecutor(options.adapter, options.outDir / "workspaces", options.profile);
        auto hints = ManifestHints {};
        auto lookup = [&](std::string const& id) -> std::shared_ptr<ProblemManifest const> {
            auto const it = byId.find(id);
            return it == byId.end() ? nullptr : it->second;
        };

        if (fs::exists(path) && fs::file_size(path) > 0)
        {
            auto const entries = loadJournal(path);
            if (!entries.empty() && isTerminalEntry(entries.back()))
                return resultFromJournal(entries);
            auto writer = JournalWriter(path, sessionId);
            auto runner = SessionRunner(foldJournal(entries, lookup), backend, executor, hints, writer);
            runner.run();
        }
        else
        {
            auto writer = JournalWriter(path, sessionId);
            auto runner = SessionRunner(byId.at(problem.id), options.settings, backend, executor, hints, writer);
            runner.run();
        }
        return resultFromJournal(loadJournal(path));
    }
} // namespace

auto runBench(std::vector<ProblemManifest> const& corpus, BackendFactory const& backends, BenchOptions const& options)
    -> std::vector<ProblemResult>
{
    if (corpus.empty())
        throw CorpusError("corpus is empty");
    fs::create_directories(options.outDir / "sessions");
    fs::create_directories(options.outDir / "workspaces");

    auto byId = std::map<std::string, std::shared_ptr<ProblemManifest const>> {};
    for (auto const& p: corpus)
        byId[p.id] = std::make_shared<ProblemManifest const>(p);

    auto results = std::vector<ProblemResult>(corpus.size());
    auto next = std::atomic<std::size_t> { 0 };
    auto worker = [&] {
        for (auto i = next++; i < corpus.size(); i = next++)
        {
            auto const& problem = corpus[i];
            try
            {
                results[i] = runOne(problem, byId, backends, options);
            }
            catch (std::exception const& e)
            {
                // Failures that prevent a journal from being written at all.
                auto r = ProblemResult {};
                r.problemId = problem.id;
                r.difficulty = problem.difficulty;
                r.ioDatatypes = problem.ioDatatypeKey();
                if (auto const* suite = problem.suiteFor(options.settings.suiteVariant))
                    r.nTests = static_cast<int>(suite->tests.size());
                r.stopReason = fmt::format("error: {}", e.what());
                r.behaviors.insert(BehaviorFlag::UniqueCode);
                results[i] = std::move(r);
            }
        }
    };

    auto const threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(options.parallelism, 1)), 1,
                                                 corpus.size());
    auto pool = std::vector<std::jthread> {};
    for (auto t = std::size_t { 1 }; t < threads; ++t)
        pool.emplace_back(worker);
    worker();
    pool.clear();
    return results;
}

auto resultsFromJournals(fs::path const& outDir) -> std::vector<ProblemResult>
{
    auto paths = std::vector<fs::path> {};
    auto const dir = outDir / "sessions";
    if (!fs::is_directory(dir))
        throw JournalError(fmt::format("no journals under {}", dir.string()));
    for (auto const& entry: fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
            paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());

    auto results = std::vector<ProblemResult> {};
    for (auto const& p: paths)
        results.push_back(resultFromJournal(loadJournal(p)));
    return results;
}

auto resultsToJson(std::vector<ProblemResult> const& results) -> json
{
    auto out = json::array();
    for (auto const& r: results)
        out.push_back(r.toJson());
    return out;
}

auto loadResults(fs::path const& path) -> std::vector<ProblemResult>
{
    auto in = std::ifstream(path);
    if (!in)
        throw Error(fmt::format("cannot read {}", path.string()));
    auto const j = json::parse(in);
    auto results = std::vector<ProblemResult> {};
    for (auto const& item: j)
        results.push_back(ProblemResult::fromJson(item));
    return results;
}

void writeBenchOutputs(fs::path const& outDir, std::vector<ProblemResult> const& results)
{
    fs::create_directories(outDir);
    writeFile(outDir / "results.json", resultsToJson(results).dump(2) + "\n");
    writeFile(outDir / "metrics.json", computeMetrics(results).toJson().dump(2) + "\n");
}

} // namespace tddloop
