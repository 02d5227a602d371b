// SPDX-License-Identifier: Apache-2.0
#include <tddloop/errors.hpp>
#include <tddloop/runner.hpp>
#include <tddloop/service.hpp>

#include <httplib.h>

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <deque>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace std::chrono_literals;

namespace tddloop
{

auto stateSnapshot(SessionState const& state) -> json
{
    auto revisions = json::array();
    for (auto const& r: state.revisions)
    {
        auto item = json {
            { "iteration", r.iteration },
            { "outcome", toString(r.outcome.kind) },
            { "failing_prev_ids", r.outcome.failingPrevIds },
            { "report", r.report.toJson() },
        };
        item["code"] = r.candidate ? json(r.candidate->codeText) : json(nullptr);
        revisions.push_back(std::move(item));
    }
    auto const& problem = *state.problem;
    return json {
        { "problem_id", problem.id },
        { "status", toString(state.status) },
        { "stop_reason", state.stopReason },
        { "oracle_outcome", toString(state.oracleOutcome) },
        { "suite", toString(state.settings.suiteVariant) },
        { "format", toString(state.settings.promptFormat) },
        { "test_ids",
          [&] {
              auto ids = json::array();
              for (auto const& t: state.drivingTests())
                  ids.push_back(t.id);
              return ids;
          }() },
        { "active_test_index", state.activeTestIndex },
        { "prompts_sent", state.promptsSent },
        { "prompt_bound", state.promptBound() },
        { "consecutive_repeats", state.consecutiveRepeats },
        { "hint_cursor", state.hintCursor },
        { "revisions", revisions },
    };
}

auto sseFrame(JournalEntry const& entry) -> std::string
{
    return fmt::format("id: {}\nevent: {}\ndata: {}\n\n", entry.seq, toString(entry.kind), entry.toJson().dump());
}

struct Service::Live
{
    std::string id;
    std::mutex m;
    std::condition_variable cv;
    std::vector<JournalEntry> events;
    json snapshot = json::object();
    SessionStatus status = SessionStatus::Running;
    bool finished = false;
    bool abortRequested = false;
    bool stepConfirmation = false;
    bool awaitingAdvance = false;
    int advances = 0;
    bool interactive = false;
    std::deque<std::string> hints;
    std::map<std::string, std::pair<int, json>> acknowledged; // "<action>:<seq>" -> response
    std::string error;
    std::jthread thread;

    auto summary() -> json
    {
        auto j = snapshot;
        j["session_id"] = id;
        j["status"] = toString(status);
        j["finished"] = finished;
        j["last_seq"] = events.empty() ? 0 : events.back().seq;
        j["awaiting_advance"] = awaitingAdvance;
        j["step_confirmation"] = stepConfirmation;
        j["interactive"] = interactive;
        if (!error.empty())
            j["error"] = error;
        return j;
    }
};

namespace
{
    void reply(httplib::Response& res, int status, json const& body)
    {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    auto parseBody(httplib::Request const& req) -> json
    {
        if (req.body.empty())
            return json::object();
        auto j = json::parse(req.body, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw std::invalid_argument("request body must be a JSON object");
        return j;
    }

    /// Key for idempotent replays; empty when the client sent no token.
    auto ackKey(std::string_view action, json const& body) -> std::string
    {
        if (!body.contains("seq"))
            return {};
        return fmt::format("{}:{}", action, body.at("seq").dump());
    }
} // namespace

Service::Service(ServiceOptions options): _options(std::move(options)), _server(std::make_unique<httplib::Server>())
{
    for (auto const& p: _options.corpus)
        _problems[p.id] = std::make_shared<ProblemManifest const>(p);
    fs::create_directories(_options.outDir / "sessions");
    loadExisting();
    routes();
}

Service::~Service()
{
    stop();
}

auto Service::lookup(std::string const& problemId) const -> std::shared_ptr<ProblemManifest const>
{
    auto const it = _problems.find(problemId);
    return it == _problems.end() ? nullptr : it->second;
}

void Service::loadExisting()
{
    for (auto const& entry: fs::directory_iterator(_options.outDir / "sessions"))
    {
        if (entry.path().extension() != ".jsonl")
            continue;
        auto live = std::make_shared<Live>();
        live->id = entry.path().stem().string();
        live->finished = true;
        try
        {
            live->events = loadJournal(entry.path());
            auto const folded = foldJournal(live->events, [this](std::string const& id) { return lookup(id); });
            live->snapshot = stateSnapshot(folded.state);
            live->status = folded.state.status;
            live->interactive = folded.header.interactive;
        }
        catch (std::exception const& e)
        {
            live->error = e.what();
        }
        _sessions[live->id] = live;
    }
}

auto Service::find(std::string const& id) -> std::shared_ptr<Live>
{
    auto lock = std::lock_guard(_mutex);
    auto const it = _sessions.find(id);
    return it == _sessions.end() ? nullptr : it->second;
}

auto Service::startSession(json const& params) -> std::pair<int, json>
{
    auto const problemId = params.value("problem", std::string {});
    auto problem = lookup(problemId);
    if (!problem)
        return { 404, json { { "error", fmt::format("unknown problem '{}'", problemId) } } };

    auto settings = SessionSettings {};
    settings.suiteVariant = parseProvenance(params.value("suite", std::string("manual")));
    settings.promptFormat = parsePromptFormat(params.value("format", std::string("default")));
    settings.similarityThreshold = params.value("threshold", settings.similarityThreshold);
    settings.includeDescription = params.value("include_description", false);
    if (!problem->suiteFor(settings.suiteVariant))
        return { 400, json { { "error", fmt::format("problem {} has no {} suite", problemId, toString(settings.suiteVariant)) } } };

    auto backend = std::shared_ptr<Backend const> {};
    try
    {
        if (params.contains("responses"))
            backend = std::make_shared<ScriptedBackend>(params.at("responses").get<std::vector<std::string>>());
        else
        {
            auto config = params.contains("provider") ? ProviderConfig::fromJson(params.at("provider")) : _options.provider;
            backend = backendFactory(config, _options.scripts)(*problem);
        }
    }
    catch (Error const& e)
    {
        backend = std::make_shared<FailingBackend>(e.what());
    }

    auto live = std::make_shared<Live>();
    live->stepConfirmation = params.value("step_confirmation", false);
    live->interactive = params.value("interactive", false);
    {
        auto lock = std::lock_guard(_mutex);
        if (_stopping)
            return { 503, json { { "error", "service is stopping" } } };
        auto id = params.value("session_id", std::string {});
        if (!id.empty())
        {
            if (auto const it = _sessions.find(id); it != _sessions.end())
            {
                auto existing = it->second;
                auto sessionLock = std::lock_guard(existing->m);
                return { 200, existing->summary() };
            }
        }
        else
        {
            auto const base = benchSessionId(problemId, settings);
            id = base;
            for (auto n = 2; _sessions.contains(id) || fs::exists(journalPath(_options.outDir, id)); ++n)
                id = fmt::format("{}-{}", base, n);
        }
        auto const safe = std::all_of(id.begin(), id.end(), [](unsigned char c) {
            return std::isalnum(c) || c == '-' || c == '_' || c == '.';
        });
        if (!safe || id.front() == '.')
            return { 400, json { { "error", "invalid session id" } } };
        live->id = id;
        live->snapshot = stateSnapshot(makeSession(problem, settings));
        _sessions[id] = live;
    }

    auto const path = journalPath(_options.outDir, live->id);
    auto const options = _options;
    live->thread = std::jthread([live, problem, settings, backend, path, options] {
        auto* self = live.get();
        try
        {
            auto writer = JournalWriter(path, self->id);
            auto executor = HarnessExecutor(options.adapter, options.outDir / "workspaces", options.profile);
            auto manifestHints = ManifestHints {};
            auto humanHints = CallbackHints([self](SessionState const&) -> std::optional<std::string> {
                auto lock = std::unique_lock(self->m);
                self->cv.wait(lock, [&] { return !self->hints.empty() || self->abortRequested; });
                if (self->hints.empty())
                    return std::nullopt;
                auto text = std::move(self->hints.front());
                self->hints.pop_front();
                return text;
            });
            auto hooks = RunnerHooks {};
            hooks.onEntry = [self](JournalEntry const& e) {
                {
                    auto lock = std::lock_guard(self->m);
                    self->events.push_back(e);
                }
                self->cv.notify_all();
            };
            hooks.onState = [self](SessionState const& s) {
                {
                    auto lock = std::lock_guard(self->m);
                    self->snapshot = stateSnapshot(s);
                    self->status = s.status;
                }
                self->cv.notify_all();
            };
            hooks.abortRequested = [self] {
                auto lock = std::lock_guard(self->m);
                return self->abortRequested;
            };
            hooks.beforePrompt = [self](SessionState const&, action::SendPrompt const&) {
                auto lock = std::unique_lock(self->m);
                if (!self->stepConfirmation)
                    return true;
                self->awaitingAdvance = true;
                self->cv.notify_all();
                self->cv.wait(lock, [&] { return self->advances > 0 || self->abortRequested; });
                self->awaitingAdvance = false;
                if (self->abortRequested)
                    return false;
                --self->advances;
                return true;
            };
            HintSource& hints = self->interactive ? static_cast<HintSource&>(humanHints)
                                                  : static_cast<HintSource&>(manifestHints);
            auto runner = SessionRunner(problem, settings, backend, executor, hints, writer, hooks, self->interactive);
            runner.run();
        }
        catch (std::exception const& e)
        {
            auto lock = std::lock_guard(self->m);
            self->error = e.what();
            if (!isTerminal(self->status))
                self->status = SessionStatus::Aborted;
        }
        {
            auto lock = std::lock_guard(self->m);
            self->finished = true;
        }
        self->cv.notify_all();
    });

    auto lock = std::lock_guard(live->m);
    return { 201, live->summary() };
}

void Service::routes()
{
    auto& server = *_server;

    server.set_exception_handler([](httplib::Request const&, httplib::Response& res, std::exception_ptr ep) {
        try
        {
            std::rethrow_exception(ep);
        }
        catch (std::exception const& e)
        {
            reply(res, 400, json { { "error", e.what() } });
        }
    });

    server.Get("/sessions", [this](httplib::Request const&, httplib::Response& res) {
        auto sessions = std::vector<std::shared_ptr<Live>> {};
        {
            auto lock = std::lock_guard(_mutex);
            for (auto const& [_, live]: _sessions)
                sessions.push_back(live);
        }
        auto list = json::array();
        for (auto const& live: sessions)
        {
            auto lock = std::lock_guard(live->m);
            auto s = live->summary();
            list.push_back(json {
                { "session_id", s["session_id"] },
                { "problem_id", s.value("problem_id", json(nullptr)) },
                { "status", s["status"] },
                { "stop_reason", s.value("stop_reason", json("")) },
                { "last_seq", s["last_seq"] },
                { "finished", s["finished"] },
            });
        }
        reply(res, 200, list);
    });

    server.Post("/sessions", [this](httplib::Request const& req, httplib::Response& res) {
        auto const [status, body] = startSession(parseBody(req));
        reply(res, status, body);
    });

    server.Get(R"(/sessions/([^/]+))", [this](httplib::Request const& req, httplib::Response& res) {
        auto live = find(req.matches[1]);
        if (!live)
            return reply(res, 404, json { { "error", "unknown session" } });
        auto lock = std::lock_guard(live->m);
        reply(res, 200, live->summary());
    });

    server.Get(R"(/sessions/([^/]+)/events)", [this](httplib::Request const& req, httplib::Response& res) {
        auto live = find(req.matches[1]);
        if (!live)
            return reply(res, 404, json { { "error", "unknown session" } });
        auto from = std::uint64_t { 1 };
        if (req.has_param("from"))
            from = std::stoull(req.get_param_value("from"));
        else if (req.has_header("Last-Event-ID"))
            from = std::stoull(req.get_header_value("Last-Event-ID")) + 1;
        auto cursor = std::make_shared<std::size_t>(from == 0 ? 0 : from - 1);
        auto idle = std::make_shared<int>(0);
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream", [this, live, cursor, idle](std::size_t, httplib::DataSink& sink) {
                auto lock = std::unique_lock(live->m);
                live->cv.wait_for(lock, 200ms, [&] { return live->events.size() > *cursor || live->finished; });
                auto frames = std::string {};
                while (*cursor < live->events.size())
                    frames += sseFrame(live->events[(*cursor)++]);
                auto const done = live->finished && *cursor >= live->events.size();
                lock.unlock();

                if (frames.empty() && !done && ++*idle % 50 == 0)
                    frames = ": keep-alive\n\n";
                if (!frames.empty())
                {
                    *idle = 0;
                    if (!sink.write(frames.data(), frames.size()))
                        return false;
                }
                if (done)
                    sink.done();
                auto stopping = std::lock_guard(_mutex);
                return !_stopping || done;
            });
    });

    server.Post(R"(/sessions/([^/]+)/hint)", [this](httplib::Request const& req, httplib::Response& res) {
        auto live = find(req.matches[1]);
        if (!live)
            return reply(res, 404, json { { "error", "unknown session" } });
        auto const body = parseBody(req);
        auto const key = ackKey("hint", body);
        auto lock = std::lock_guard(live->m);
        if (!key.empty())
            if (auto const it = live->acknowledged.find(key); it != live->acknowledged.end())
                return reply(res, it->second.first, it->second.second);
        if (live->status != SessionStatus::AwaitingHint || live->finished)
            return reply(res, 409, json { { "error", fmt::format("session is {}", toString(live->status)) } });
        if (!live->interactive)
            return reply(res, 409, json { { "error", "session takes hints from its manifest" } });
        if (!body.contains("text") || !body.at("text").is_string() || body.at("text").get<std::string>().empty())
            return reply(res, 400, json { { "error", "hint text required" } });
        live->hints.push_back(body.at("text").get<std::string>());
        live->cv.notify_all();
        auto const response = json { { "accepted", true } };
        if (!key.empty())
            live->acknowledged[key] = { 202, response };
        reply(res, 202, response);
    });

    server.Post(R"(/sessions/([^/]+)/abort)", [this](httplib::Request const& req, httplib::Response& res) {
        auto live = find(req.matches[1]);
        if (!live)
            return reply(res, 404, json { { "error", "unknown session" } });
        auto const body = parseBody(req);
        auto const key = ackKey("abort", body);
        auto lock = std::lock_guard(live->m);
        if (!key.empty())
            if (auto const it = live->acknowledged.find(key); it != live->acknowledged.end())
                return reply(res, it->second.first, it->second.second);
        if (live->finished || isTerminal(live->status))
            return reply(res, 409, json { { "error", fmt::format("session is {}", toString(live->status)) } });
        live->abortRequested = true;
        live->cv.notify_all();
        auto const response = json { { "accepted", true } };
        if (!key.empty())
            live->acknowledged[key] = { 202, response };
        reply(res, 202, response);
    });

    server.Post(R"(/sessions/([^/]+)/advance)", [this](httplib::Request const& req, httplib::Response& res) {
        auto live = find(req.matches[1]);
        if (!live)
            return reply(res, 404, json { { "error", "unknown session" } });
        auto const body = parseBody(req);
        auto const key = ackKey("advance", body);
        auto lock = std::lock_guard(live->m);
        if (!key.empty())
            if (auto const it = live->acknowledged.find(key); it != live->acknowledged.end())
                return reply(res, it->second.first, it->second.second);
        if (!live->awaitingAdvance || live->advances > 0)
            return reply(res, 409, json { { "error", "session is not waiting for confirmation" } });
        ++live->advances;
        live->cv.notify_all();
        auto const response = json { { "accepted", true } };
        if (!key.empty())
            live->acknowledged[key] = { 202, response };
        reply(res, 202, response);
    });
}

auto Service::listen(std::string const& host, int port) -> bool
{
    return _server->listen(host, port);
}

auto Service::start(std::string const& host) -> int
{
    auto const port = _server->bind_to_any_port(host);
    if (port < 0)
        throw Error(fmt::format("cannot bind {}", host));
    _listener = std::jthread([this] { _server->listen_after_bind(); });
    _server->wait_until_ready();
    return port;
}

void Service::stop()
{
    auto sessions = std::vector<std::shared_ptr<Live>> {};
    {
        auto lock = std::lock_guard(_mutex);
        if (_stopping)
            return;
        _stopping = true;
        for (auto const& [_, live]: _sessions)
            sessions.push_back(live);
    }
    for (auto const& live: sessions)
    {
        {
            auto lock = std::lock_guard(live->m);
            if (!live->finished)
                live->abortRequested = true;
        }
        live->cv.notify_all();
    }
    for (auto const& live: sessions)
        if (live->thread.joinable())
            live->thread.join();
    _server->stop();
    if (_listener.joinable())
        _listener.join();
}

} // namespace tddloop
