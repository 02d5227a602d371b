// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tddloop/bench.hpp>
#include <tddloop/corpus.hpp>
#include <tddloop/harness.hpp>
#include <tddloop/journal.hpp>
#include <tddloop/provider.hpp>
#include <tddloop/session.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace httplib
{
class Server;
}

namespace tddloop
{

/// JSON view of a session state, as served by GET /sessions/{id}.
[[nodiscard]] auto stateSnapshot(SessionState const& state) -> nlohmann::json;

/// One server-sent event frame for a journal entry.
[[nodiscard]] auto sseFrame(JournalEntry const& entry) -> std::string;

struct ServiceOptions
{
    std::vector<ProblemManifest> corpus;
    std::filesystem::path outDir;
    ProviderConfig provider;
    std::map<std::string, std::vector<std::string>> scripts; // scripted replies by problem id
    RunnerAdapter adapter = RunnerAdapter::pythonReference();
    LanguageProfile profile = pythonProfile();
};

/// HTTP front end over many concurrently running sessions.
///
///   GET  /sessions                 list with status
///   POST /sessions                 start; body holds run parameters
///   GET  /sessions/{id}            state snapshot
///   GET  /sessions/{id}/events     text/event-stream from ?from=<seq>
///   POST /sessions/{id}/hint       {"text", "seq"}; 409 unless awaiting a hint
///   POST /sessions/{id}/abort      {"seq"}
///   POST /sessions/{id}/advance    {"seq"}; releases a step-confirmation gate
///
/// A mutating request repeated with the same seq token returns the original
/// response without acting twice.
class Service
{
  public:
    explicit Service(ServiceOptions options);
    Service(Service const&) = delete;
    auto operator=(Service const&) -> Service& = delete;
    ~Service();

    /// Blocks until stop(). Returns false when the address cannot be bound.
    auto listen(std::string const& host, int port) -> bool;
    /// Binds to an ephemeral port and serves on a background thread.
    auto start(std::string const& host = "127.0.0.1") -> int;
    void stop();

    struct Live;

  private:
    void routes();
    void loadExisting();
    auto startSession(nlohmann::json const& params) -> std::pair<int, nlohmann::json>;
    auto find(std::string const& id) -> std::shared_ptr<Live>;
    auto lookup(std::string const& problemId) const -> std::shared_ptr<ProblemManifest const>;

    ServiceOptions _options;
    std::map<std::string, std::shared_ptr<ProblemManifest const>> _problems;
    std::unique_ptr<httplib::Server> _server;
    std::mutex _mutex;
    std::map<std::string, std::shared_ptr<Live>> _sessions;
    std::jthread _listener;
    bool _stopping = false;
};

} // namespace tddloop
