// SPDX-License-Identifier: Apache-2.0
#include <tddloop/errors.hpp>
#include <tddloop/harness.hpp>

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace tddloop
{

namespace
{

    auto shellQuote(std::string_view s) -> std::string
    {
        auto out = std::string("'");
        for (auto const c: s)
        {
            if (c == '\'')
                out += "'\\''";
            else
                out += c;
        }
        return out + "'";
    }

    auto replaceAll(std::string text, std::string_view from, std::string_view to) -> std::string
    {
        for (auto pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos + to.size()))
            text.replace(pos, from.size(), to);
        return text;
    }

    void writeFileIfChanged(fs::path const& path, std::string const& content)
    {
        {
            auto in = std::ifstream(path, std::ios::binary);
            if (in)
            {
                auto ss = std::ostringstream {};
                ss << in.rdbuf();
                if (ss.str() == content)
                    return;
            }
        }
        auto out = std::ofstream(path, std::ios::binary | std::ios::trunc);
        if (!out || !(out << content) || !out.flush())
            throw HarnessError(fmt::format("cannot write {}", path.string()));
    }

    struct ProcessOutcome
    {
        bool timedOut = false;
        int exitCode = 0;
    };

    auto runProcess(std::string const& command,
                    fs::path const& workdir,
                    fs::path const& logFile,
                    std::vector<std::string> const& environment,
                    double timeoutSeconds) -> ProcessOutcome
    {
        // Everything the child touches is prepared before fork.
        auto const shell = std::string("/bin/sh");
        auto argv = std::vector<char*> { const_cast<char*>(shell.c_str()),
                                         const_cast<char*>("-c"),
                                         const_cast<char*>(command.c_str()),
                                         nullptr };
        auto envp = std::vector<char*> {};
        for (auto const& e: environment)
            envp.push_back(const_cast<char*>(e.c_str()));
        envp.push_back(nullptr);
        auto const dir = workdir.string();
        auto const log = logFile.string();

        auto const pid = ::fork();
        if (pid < 0)
            throw HarnessError("fork failed");
        if (pid == 0)
        {
            ::setpgid(0, 0);
            if (::chdir(dir.c_str()) != 0)
                ::_exit(126);
            auto const fd = ::open(log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
            if (fd >= 0)
            {
                ::dup2(fd, STDOUT_FILENO);
                ::dup2(fd, STDERR_FILENO);
                ::close(fd);
            }
            auto const devnull = ::open("/dev/null", O_RDONLY);
            if (devnull >= 0)
            {
                ::dup2(devnull, STDIN_FILENO);
                ::close(devnull);
            }
            ::execve(shell.c_str(), argv.data(), envp.data());
            ::_exit(127);
        }
        ::setpgid(pid, pid);

        auto const deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeoutSeconds);
        auto status = 0;
        while (true)
        {
            auto const r = ::waitpid(pid, &status, WNOHANG);
            if (r == pid)
                break;
            if (r < 0 && errno != EINTR)
                throw HarnessError("waitpid failed");
            if (std::chrono::steady_clock::now() >= deadline)
            {
                ::kill(-pid, SIGKILL);
                ::kill(pid, SIGKILL);
                while (::waitpid(pid, &status, 0) < 0 && errno == EINTR)
                {
                }
                return { .timedOut = true, .exitCode = -1 };
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
        }
        // Reap stragglers left in the group.
        ::kill(-pid, SIGKILL);
        return { .timedOut = false, .exitCode = WIFEXITED(status) ? WEXITSTATUS(status) : -1 };
    }

    auto tail(fs::path const& file, std::size_t bytes) -> std::string
    {
        auto in = std::ifstream(file, std::ios::binary);
        if (!in)
            return {};
        auto ss = std::ostringstream {};
        ss << in.rdbuf();
        auto const s = ss.str();
        return s.size() > bytes ? s.substr(s.size() - bytes) : s;
    }

} // namespace

auto toString(TestStatus s) -> std::string_view
{
    switch (s)
    {
        case TestStatus::Pass: return "pass";
        case TestStatus::Fail: return "fail";
        case TestStatus::Error: return "error";
        case TestStatus::Timeout: return "timeout";
    }
    return "error";
}

auto parseTestStatus(std::string_view s) -> TestStatus
{
    for (auto const t: { TestStatus::Pass, TestStatus::Fail, TestStatus::Error, TestStatus::Timeout })
        if (toString(t) == s)
            return t;
    throw HarnessError(fmt::format("unknown test status \"{}\"", s));
}

auto nowMs() -> std::int64_t
{
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

auto TestReport::allPass() const -> bool
{
    return std::all_of(results.begin(), results.end(), [](auto const& kv) { return kv.second.status == TestStatus::Pass; });
}

auto TestReport::passes(std::string const& testId) const -> bool
{
    auto const it = results.find(testId);
    return it != results.end() && it->second.status == TestStatus::Pass;
}

auto TestReport::toJson() const -> json
{
    auto j = json::object();
    j["results"] = json::object();
    for (auto const& [id, r]: results)
        j["results"][id] = { { "status", toString(r.status) }, { "message", r.message } };
    j["started"] = startedMs;
    j["finished"] = finishedMs;
    return j;
}

auto TestReport::fromJson(json const& j) -> TestReport
{
    auto report = TestReport {};
    for (auto const& [id, r]: j.at("results").items())
        report.results[id] = { parseTestStatus(r.at("status").get<std::string>()), r.at("message").get<std::string>() };
    report.startedMs = j.value("started", std::int64_t { 0 });
    report.finishedMs = j.value("finished", std::int64_t { 0 });
    return report;
}

void RunnerAdapter::validate() const
{
    if (commandTemplate.find("{workspace}") == std::string::npos
        || commandTemplate.find("{report}") == std::string::npos)
        throw HarnessError("command_template must contain {workspace} and {report}");
    if (perRunTimeoutSeconds <= 0)
        throw HarnessError("per_run_timeout must be > 0");
}

auto RunnerAdapter::pythonReference() -> RunnerAdapter
{
    auto adapter = RunnerAdapter {};
    adapter.commandTemplate = "python3 {shim} --workspace {workspace} --report {report}";
    return adapter;
}

auto RunnerAdapter::fromJson(json const& j) -> RunnerAdapter
{
    auto adapter = pythonReference();
    adapter.commandTemplate = j.value("command_template", adapter.commandTemplate);
    adapter.reportPath = j.value("report_path", adapter.reportPath.string());
    adapter.perRunTimeoutSeconds = j.value("per_run_timeout", adapter.perRunTimeoutSeconds);
    adapter.envAllowlist = j.value("env_allowlist", adapter.envAllowlist);
    if (j.contains("env"))
        adapter.extraEnv = j.at("env").get<std::map<std::string, std::string>>();
    if (j.contains("shim"))
        adapter.shimPath = j.at("shim").get<std::string>();
    adapter.validate();
    return adapter;
}

Workspace::Workspace(fs::path root, LanguageProfile profile): _root(std::move(root)), _profile(std::move(profile))
{
}

auto Workspace::create(fs::path const& parent, LanguageProfile const& profile) -> Workspace
{
    fs::create_directories(parent);
    auto pattern = (parent / "ws-XXXXXX").string();
    if (::mkdtemp(pattern.data()) == nullptr)
        throw HarnessError(fmt::format("cannot create workspace under {}", parent.string()));
    auto ws = Workspace(fs::absolute(pattern), profile);
    fs::create_directories(ws.testDir());
    return ws;
}

Workspace::Workspace(Workspace&& other) noexcept:
    _root(std::move(other._root)), _profile(std::move(other._profile)), _keep(other._keep)
{
    other._root.clear();
}

auto Workspace::operator=(Workspace&& other) noexcept -> Workspace&
{
    if (this != &other)
    {
        if (!_root.empty() && !_keep)
        {
            auto ec = std::error_code {};
            fs::remove_all(_root, ec);
        }
        _root = std::move(other._root);
        _profile = std::move(other._profile);
        _keep = other._keep;
        other._root.clear();
    }
    return *this;
}

Workspace::~Workspace()
{
    if (!_root.empty() && !_keep)
    {
        auto ec = std::error_code {};
        fs::remove_all(_root, ec);
    }
}

auto Workspace::implFile() const -> fs::path
{
    return _root / _profile.implFileName;
}

auto Workspace::testDir() const -> fs::path
{
    return _root / "tests";
}

auto Workspace::testFiles() const -> std::vector<fs::path>
{
    auto files = std::vector<fs::path> {};
    for (auto const& entry: fs::directory_iterator(testDir()))
        if (entry.is_regular_file())
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    return files;
}

void Workspace::materialize(CandidateCode const& code, std::vector<TestCase> const& tests)
{
    try
    {
        writeFileIfChanged(implFile(), code.codeText + "\n");
        auto keepNames = std::set<std::string> {};
        for (auto const& test: tests)
        {
            auto const name = test.id + _profile.testFileExtension;
            keepNames.insert(name);
            writeFileIfChanged(testDir() / name, _profile.testPrelude + test.body + "\n");
        }
        for (auto const& file: testFiles())
            if (!keepNames.contains(file.filename().string()))
                fs::remove(file);
    }
    catch (fs::filesystem_error const& e)
    {
        throw HarnessError(e.what());
    }
}

auto Workspace::run(RunnerAdapter const& adapter, std::vector<std::string> const& activeTests) const -> TestReport
{
    adapter.validate();
    auto const report = adapter.reportPath.is_absolute() ? adapter.reportPath : _root / adapter.reportPath;
    auto ec = std::error_code {};
    fs::remove(report, ec);

    auto command = replaceAll(adapter.commandTemplate, "{workspace}", shellQuote(_root.string()));
    command = replaceAll(command, "{report}", shellQuote(report.string()));
    command = replaceAll(command, "{shim}", shellQuote(adapter.shimPath.string()));

    auto environment = std::vector<std::string> {};
    for (auto const& name: adapter.envAllowlist)
        if (auto const* value = std::getenv(name.c_str()); value && !adapter.extraEnv.contains(name))
            environment.push_back(name + "=" + value);
    for (auto const& [name, value]: adapter.extraEnv)
        environment.push_back(name + "=" + value);

    auto result = TestReport {};
    result.startedMs = nowMs();
    auto const outcome = runProcess(command, _root, _root / ".runner.log", environment, adapter.perRunTimeoutSeconds);
    result.finishedMs = nowMs();

    auto recorded = std::map<std::string, TestResult> {};
    auto in = std::ifstream(report);
    if (!in && !outcome.timedOut)
        throw HarnessError(fmt::format("runner produced no report (exit {}): {}",
                                       outcome.exitCode,
                                       tail(_root / ".runner.log", 400)));
    auto lineNo = 0;
    for (auto line = std::string {}; in && std::getline(in, line);)
    {
        ++lineNo;
        if (line.empty())
            continue;
        try
        {
            auto const j = json::parse(line);
            recorded[j.at("test_id").get<std::string>()] = {
                parseTestStatus(j.at("status").get<std::string>()),
                j.value("message", std::string {}),
            };
        }
        catch (std::exception const& e)
        {
            // A killed runner may leave a partial last line.
            if (outcome.timedOut && in.peek() == std::char_traits<char>::eof())
                break;
            throw HarnessError(fmt::format("unparsable report line {}: {}", lineNo, e.what()));
        }
    }

    for (auto const& id: activeTests)
    {
        if (auto const it = recorded.find(id); it != recorded.end())
            result.results[id] = it->second;
        else if (outcome.timedOut)
            result.results[id] = { TestStatus::Timeout,
                                   fmt::format("run exceeded {} s", adapter.perRunTimeoutSeconds) };
        else
            result.results[id] = { TestStatus::Error, "missing from report" };
    }
    return result;
}

} // namespace tddloop
