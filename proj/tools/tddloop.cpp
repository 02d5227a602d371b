// SPDX-License-Identifier: Apache-2.0
// tddloop: run, benchmark, report on and serve test-driven LLM sessions.
#include <tddloop/bench.hpp>
#include <tddloop/errors.hpp>
#include <tddloop/runner.hpp>
#include <tddloop/service.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tddloop;

namespace
{

constexpr int exitSolved = 0;
constexpr int exitUnsolved = 1;
constexpr int exitConfig = 2;

/// Raised for bad flags or inputs; maps to exit code 2.
struct ConfigError: std::runtime_error
{
    using std::runtime_error::runtime_error;
};

auto readJson(fs::path const& path) -> json
{
    auto in = std::ifstream(path);
    if (!in)
        throw ConfigError(fmt::format("cannot read {}", path.string()));
    auto j = json::parse(in, nullptr, false);
    if (j.is_discarded())
        throw ConfigError(fmt::format("{} is not valid JSON", path.string()));
    return j;
}

struct ProviderFlags
{
    std::string kind;
    std::string configFile;
    std::string script;
    std::string transcript;

    void add(CLI::App* cmd)
    {
        cmd->add_option("--provider", kind, "Provider kind")->check(CLI::IsMember({ "remote", "replay", "scripted" }));
        cmd->add_option("--provider-config", configFile, "Provider configuration (JSON)");
        cmd->add_option("--script", script, "Scripted replies file: a JSON array, or an object keyed by problem id");
        cmd->add_option("--transcript", transcript, "Replay transcript file, or a directory of <problem>.jsonl");
    }

    [[nodiscard]] auto config() const -> ProviderConfig
    {
        auto c = configFile.empty() ? ProviderConfig {} : ProviderConfig::fromJson(readJson(configFile));
        if (!kind.empty())
            c.kind = parseProviderKind(kind);
        if (!transcript.empty())
            c.transcriptPath = transcript;
        if (!script.empty())
        {
            auto const j = readJson(script);
            if (j.is_array())
                c.scriptedResponses = j.get<std::vector<std::string>>();
        }
        return c;
    }

    [[nodiscard]] auto scripts() const -> std::map<std::string, std::vector<std::string>>
    {
        if (script.empty())
            return {};
        auto const j = readJson(script);
        if (!j.is_object())
            return {};
        return j.get<std::map<std::string, std::vector<std::string>>>();
    }
};

struct SessionFlags
{
    std::string suite = "manual";
    std::string format = "default";
    double threshold = 0.95;
    bool includeDescription = false;

    void add(CLI::App* cmd)
    {
        cmd->add_option("--suite", suite, "Driving suite variant")->check(CLI::IsMember({ "manual", "automated" }));
        cmd->add_option("--format", format, "Test prompt format")
            ->check(CLI::IsMember({ "default", "plain-text", "meta-test" }));
        cmd->add_option("--threshold", threshold, "Repeat similarity threshold")->check(CLI::Range(0.0, 1.0));
        cmd->add_flag("--include-description", includeDescription, "Add the problem description to the first prompt");
    }

    [[nodiscard]] auto settings() const -> SessionSettings
    {
        auto s = SessionSettings {};
        s.suiteVariant = parseProvenance(suite);
        s.promptFormat = parsePromptFormat(format);
        s.similarityThreshold = threshold;
        s.includeDescription = includeDescription;
        return s;
    }
};

auto loadAdapter(std::string const& path) -> RunnerAdapter
{
    auto adapter = path.empty() ? RunnerAdapter::pythonReference() : RunnerAdapter::fromJson(readJson(path));
    adapter.validate();
    return adapter;
}

auto consoleHints() -> CallbackHints
{
    return CallbackHints([](SessionState const& state) -> std::optional<std::string> {
        std::cerr << fmt::format("[{}] repeated code {} times; enter a hint (empty line to give up):\n> ",
                                 state.problem->id,
                                 state.consecutiveRepeats);
        auto line = std::string {};
        if (!std::getline(std::cin, line) || line.empty())
            return std::nullopt;
        return line;
    });
}

auto consoleGate(SessionState const&, action::SendPrompt const& prompt) -> bool
{
    std::cerr << fmt::format("--- {} prompt ---\n{}\n--- send? [Y/n] ", toString(prompt.kind), prompt.text);
    auto line = std::string {};
    if (!std::getline(std::cin, line))
        return false;
    return line.empty() || line == "y" || line == "Y";
}

auto printSummary(SessionState const& state, fs::path const& journal) -> int
{
    std::cout << fmt::format("{}: {} ({}), prompts {}, oracle {}\njournal: {}\n",
                             state.problem->id,
                             toString(state.status),
                             state.stopReason,
                             state.promptsSent,
                             toString(state.oracleOutcome),
                             journal.string());
    return state.status == SessionStatus::Solved ? exitSolved : exitUnsolved;
}

auto problemLookup(std::vector<ProblemManifest> const& corpus) -> ProblemLookup
{
    auto byId = std::make_shared<std::map<std::string, std::shared_ptr<ProblemManifest const>>>();
    for (auto const& p: corpus)
        (*byId)[p.id] = std::make_shared<ProblemManifest const>(p);
    return [byId](std::string const& id) -> std::shared_ptr<ProblemManifest const> {
        auto const it = byId->find(id);
        return it == byId->end() ? nullptr : it->second;
    };
}

auto makeBackendFor(ProviderFlags const& flags, ProblemManifest const& problem) -> std::shared_ptr<Backend const>
{
    auto const config = flags.config();
    auto scripts = flags.scripts();
    if (config.kind == ProviderKind::Remote)
        config.validate();
    return backendFactory(config, std::move(scripts))(problem);
}

extern "C" void onSignal(int)
{
    // The service's stop() is not async-signal-safe; exit directly instead.
    std::_Exit(130);
}

} // namespace

auto main(int argc, char** argv) -> int
{
    auto app = CLI::App { "Test-driven code generation sessions with chat LLMs" };
    app.require_subcommand(1);

    auto corpusDir = std::string {};
    auto outDir = std::string { "out" };
    auto runnerConfig = std::string {};
    auto providerFlags = ProviderFlags {};
    auto sessionFlags = SessionFlags {};

    // run
    auto* run = app.add_subcommand("run", "Run one problem to completion");
    auto problemId = std::string {};
    auto sessionId = std::string {};
    auto interactive = false;
    auto stepConfirm = false;
    run->add_option("--corpus", corpusDir, "Corpus root")->required();
    run->add_option("--problem", problemId, "Problem id")->required();
    run->add_option("--out", outDir, "Output directory");
    run->add_option("--runner-config", runnerConfig, "Test runner adapter (JSON)");
    run->add_option("--session-id", sessionId, "Session id (default <problem>-<suite>-<format>)");
    run->add_flag("--interactive", interactive, "Ask on the console for hints");
    run->add_flag("--confirm", stepConfirm, "Confirm each prompt before it is sent");
    providerFlags.add(run);
    sessionFlags.add(run);

    // bench
    auto* bench = app.add_subcommand("bench", "Run every problem in a corpus");
    auto parallelism = 1;
    bench->add_option("--corpus", corpusDir, "Corpus root")->required();
    bench->add_option("--out", outDir, "Output directory");
    bench->add_option("--parallelism", parallelism, "Concurrent sessions")->check(CLI::PositiveNumber);
    bench->add_option("--runner-config", runnerConfig, "Test runner adapter (JSON)");
    providerFlags.add(bench);
    sessionFlags.add(bench);

    // report
    auto* report = app.add_subcommand("report", "Recompute results and metrics from journals");
    auto compareWith = std::string {};
    auto groupBy = std::string { "none" };
    report->add_option("--out", outDir, "Directory holding sessions/");
    report->add_option("--compare-with", compareWith, "Second output directory (variant b) to compare against");
    report->add_option("--group-by", groupBy, "Comparison grouping")
        ->check(CLI::IsMember({ "none", "difficulty", "io_datatypes" }));

    // resume
    auto* resumeCmd = app.add_subcommand("resume", "Continue an interrupted session");
    auto journalFile = std::string {};
    resumeCmd->add_option("--corpus", corpusDir, "Corpus root")->required();
    resumeCmd->add_option("--journal", journalFile, "Session journal")->required();
    resumeCmd->add_option("--out", outDir, "Output directory (workspaces)");
    resumeCmd->add_option("--runner-config", runnerConfig, "Test runner adapter (JSON)");
    providerFlags.add(resumeCmd);

    // serve
    auto* serve = app.add_subcommand("serve", "Serve the session API and event stream");
    auto bind = std::string { "127.0.0.1:8080" };
    serve->add_option("--corpus", corpusDir, "Corpus root")->required();
    serve->add_option("--out", outDir, "Output directory");
    serve->add_option("--bind", bind, "host:port");
    serve->add_option("--runner-config", runnerConfig, "Test runner adapter (JSON)");
    providerFlags.add(serve);

    try
    {
        app.parse(argc, argv);
    }
    catch (CLI::ParseError const& e)
    {
        return app.exit(e) == 0 ? 0 : exitConfig;
    }

    try
    {
        if (*run)
        {
            auto const corpus = loadCorpus(corpusDir);
            auto const lookup = problemLookup(corpus);
            auto problem = lookup(problemId);
            if (!problem)
                throw ConfigError(fmt::format("unknown problem '{}'", problemId));
            auto const settings = sessionFlags.settings();
            if (!problem->suiteFor(settings.suiteVariant))
                throw ConfigError(fmt::format("problem {} has no {} suite", problemId, toString(settings.suiteVariant)));
            auto const adapter = loadAdapter(runnerConfig);
            auto backend = makeBackendFor(providerFlags, *problem);

            auto const id = sessionId.empty() ? benchSessionId(problemId, settings) : sessionId;
            auto const path = journalPath(outDir, id);
            if (fs::exists(path) && fs::file_size(path) > 0)
                throw ConfigError(fmt::format("journal {} already exists; use resume or another --session-id", path.string()));
            auto writer = JournalWriter(path, id);
            auto executor = HarnessExecutor(adapter, fs::path(outDir) / "workspaces");
            auto human = consoleHints();
            auto manifest = ManifestHints {};
            HintSource& hints = interactive ? static_cast<HintSource&>(human) : static_cast<HintSource&>(manifest);
            auto hooks = RunnerHooks {};
            if (stepConfirm)
                hooks.beforePrompt = consoleGate;
            auto runner = SessionRunner(problem, settings, backend, executor, hints, writer, hooks, interactive);
            return printSummary(runner.run(), path);
        }

        if (*bench)
        {
            auto const corpus = loadCorpus(corpusDir);
            auto options = BenchOptions {};
            options.outDir = outDir;
            options.settings = sessionFlags.settings();
            options.parallelism = parallelism;
            options.adapter = loadAdapter(runnerConfig);
            auto const config = providerFlags.config();
            auto const results = runBench(corpus, backendFactory(config, providerFlags.scripts()), options);
            writeBenchOutputs(outDir, results);
            auto const metrics = computeMetrics(results);
            std::cout << fmt::format("{} problems, {} solved ({:.1f}%), tests:prompts {} ({:.3f})\n",
                                     metrics.total,
                                     metrics.solvedCount,
                                     metrics.successRate * 100.0,
                                     metrics.testsToPrompts.str(),
                                     metrics.testsToPrompts.value());
            return 0;
        }

        if (*report)
        {
            auto const results = resultsFromJournals(outDir);
            if (results.empty())
                throw ConfigError(fmt::format("no journals under {}", outDir));
            writeBenchOutputs(outDir, results);
            auto const metrics = computeMetrics(results);
            std::cout << metrics.toJson().dump(2) << "\n";
            if (!compareWith.empty())
            {
                auto const rows = compareVariants(results, resultsFromJournals(compareWith), parseGroupBy(groupBy));
                auto const csv = comparisonCsv(rows);
                auto out = std::ofstream(fs::path(outDir) / "comparison.csv", std::ios::trunc);
                out << csv;
                std::cout << csv;
            }
            return 0;
        }

        if (*resumeCmd)
        {
            auto const corpus = loadCorpus(corpusDir);
            auto const lookup = problemLookup(corpus);
            auto folded = resume(journalFile, lookup);
            auto const adapter = loadAdapter(runnerConfig);
            auto backend = makeBackendFor(providerFlags, *folded.state.problem);
            auto const entries = loadJournal(journalFile);
            auto writer = JournalWriter(journalFile, entries.front().sessionId);
            auto executor = HarnessExecutor(adapter, fs::path(outDir) / "workspaces");
            auto human = consoleHints();
            auto manifest = ManifestHints {};
            HintSource& hints = folded.header.interactive ? static_cast<HintSource&>(human)
                                                          : static_cast<HintSource&>(manifest);
            auto runner = SessionRunner(std::move(folded), backend, executor, hints, writer);
            return printSummary(runner.run(), journalFile);
        }

        if (*serve)
        {
            auto options = ServiceOptions {};
            options.corpus = loadCorpus(corpusDir);
            options.outDir = outDir;
            options.provider = providerFlags.config();
            options.scripts = providerFlags.scripts();
            options.adapter = loadAdapter(runnerConfig);
            auto const colon = bind.rfind(':');
            if (colon == std::string::npos)
                throw ConfigError("--bind expects host:port");
            auto const host = bind.substr(0, colon);
            auto const port = std::stoi(bind.substr(colon + 1));
            auto service = Service(std::move(options));
            std::signal(SIGINT, onSignal);
            std::signal(SIGTERM, onSignal);
            std::cerr << fmt::format("listening on {}\n", bind);
            if (!service.listen(host, port))
                throw ConfigError(fmt::format("cannot bind {}", bind));
            return 0;
        }
    }
    catch (AlreadyFinishedError const& e)
    {
        std::cerr << "already finished: " << e.what() << "\n";
        return exitConfig;
    }
    catch (std::exception const& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return exitConfig;
    }
    return exitConfig;
}
