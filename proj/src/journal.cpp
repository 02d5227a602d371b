// SPDX-License-Identifier: Apache-2.0
#include <tddloop/errors.hpp>
#include <tddloop/journal.hpp>

#include <unistd.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace tddloop
{

namespace
{

    constexpr auto entryKinds = std::array<std::pair<EntryKind, std::string_view>, 8> { {
        { EntryKind::PromptSent, "PromptSent" },
        { EntryKind::ResponseReceived, "ResponseReceived" },
        { EntryKind::CodeExtracted, "CodeExtracted" },
        { EntryKind::TestReport, "TestReport" },
        { EntryKind::Outcome, "Outcome" },
        { EntryKind::HintRequested, "HintRequested" },
        { EntryKind::HintProvided, "HintProvided" },
        { EntryKind::StatusChange, "StatusChange" },
    } };

    auto mismatch(JournalEntry const& e, std::string_view what) -> JournalError
    {
        return JournalError(fmt::format("journal entry {} ({}) disagrees with the session: {}",
                                        e.seq,
                                        toString(e.kind),
                                        what));
    }

} // namespace

auto toString(EntryKind k) -> std::string_view
{
    for (auto const& [kind, name]: entryKinds)
        if (kind == k)
            return name;
    return "";
}

auto parseEntryKind(std::string_view s) -> EntryKind
{
    for (auto const& [kind, name]: entryKinds)
        if (name == s)
            return kind;
    throw JournalError(fmt::format("unknown journal entry kind \"{}\"", s));
}

auto JournalEntry::toJson() const -> json
{
    return json {
        { "seq", seq }, { "timestamp", timestamp }, { "session_id", sessionId },
        { "kind", toString(kind) }, { "payload", payload },
    };
}

auto JournalEntry::fromJson(json const& j) -> JournalEntry
{
    return JournalEntry {
        .seq = j.at("seq").get<std::uint64_t>(),
        .timestamp = j.at("timestamp").get<std::string>(),
        .sessionId = j.at("session_id").get<std::string>(),
        .kind = parseEntryKind(j.at("kind").get<std::string>()),
        .payload = j.at("payload"),
    };
}

auto utcTimestamp() -> std::string
{
    auto const now = std::chrono::system_clock::now();
    auto const secs = std::chrono::system_clock::to_time_t(now);
    auto const ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    auto tm = std::tm {};
    ::gmtime_r(&secs, &tm);
    return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:03}Z",
                       tm.tm_year + 1900,
                       tm.tm_mon + 1,
                       tm.tm_mday,
                       tm.tm_hour,
                       tm.tm_min,
                       tm.tm_sec,
                       ms);
}

auto journalPath(fs::path const& outDir, std::string_view sessionId) -> fs::path
{
    return outDir / "sessions" / (std::string(sessionId) + ".jsonl");
}

JournalWriter::JournalWriter(fs::path path, std::string sessionId):
    _path(std::move(path)), _sessionId(std::move(sessionId))
{
    if (_path.has_parent_path())
        fs::create_directories(_path.parent_path());
    if (fs::exists(_path))
    {
        auto const existing = loadJournal(_path);
        if (!existing.empty())
        {
            _last = existing.back();
            _lastSeq = _last.seq;
            _closed = isTerminalEntry(_last);
        }
    }
    _file = std::fopen(_path.c_str(), "ab");
    if (!_file)
        throw JournalError(fmt::format("cannot open journal {}", _path.string()));
}

JournalWriter::~JournalWriter()
{
    if (_file)
        std::fclose(_file);
}

void JournalWriter::append(JournalEntry const& entry)
{
    if (_closed)
        throw JournalError(fmt::format("journal {} is closed", _path.string()));
    if (entry.seq != _lastSeq + 1)
        throw JournalError(fmt::format("out-of-order seq {} (expected {})", entry.seq, _lastSeq + 1));
    if (entry.sessionId != _sessionId)
        throw JournalError(fmt::format("entry for session {} written to journal of {}", entry.sessionId, _sessionId));

    auto const line = entry.toJson().dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), _file) != line.size() || std::fflush(_file) != 0
        || ::fsync(::fileno(_file)) != 0)
        throw JournalError(fmt::format("write to journal {} failed", _path.string()));

    _lastSeq = entry.seq;
    _last = entry;
    _closed = isTerminalEntry(entry);
}

auto JournalWriter::append(EntryKind kind, json payload) -> JournalEntry const&
{
    append(JournalEntry {
        .seq = _lastSeq + 1,
        .timestamp = utcTimestamp(),
        .sessionId = _sessionId,
        .kind = kind,
        .payload = std::move(payload),
    });
    return _last;
}

auto loadJournal(fs::path const& path) -> std::vector<JournalEntry>
{
    auto in = std::ifstream(path, std::ios::binary);
    if (!in)
        throw JournalError(fmt::format("cannot read journal {}", path.string()));
    auto ss = std::ostringstream {};
    ss << in.rdbuf();
    auto const data = ss.str();

    auto entries = std::vector<JournalEntry> {};
    auto offset = std::size_t { 0 };
    while (offset < data.size())
    {
        auto const eol = data.find('\n', offset);
        if (eol == std::string::npos)
            throw JournalCorruptError(offset, fmt::format("{}: truncated record at byte offset {}", path.string(), offset));
        auto const line = std::string_view(data).substr(offset, eol - offset);
        try
        {
            auto entry = JournalEntry::fromJson(json::parse(line));
            if (!entries.empty() && entry.seq != entries.back().seq + 1)
                throw JournalError(fmt::format("seq {} does not follow {}", entry.seq, entries.back().seq));
            entries.push_back(std::move(entry));
        }
        catch (std::exception const& e)
        {
            throw JournalCorruptError(offset,
                                      fmt::format("{}: corrupt record at byte offset {}: {}", path.string(), offset, e.what()));
        }
        offset = eol + 1;
    }
    return entries;
}

auto isTerminalEntry(JournalEntry const& entry) -> bool
{
    if (entry.kind != EntryKind::StatusChange)
        return false;
    return isTerminal(parseSessionStatus(entry.payload.at("status").get<std::string>()));
}

auto SessionHeader::toJson() const -> json
{
    return json {
        { "problem_id", problemId },
        { "difficulty", difficulty },
        { "io_datatypes", ioDatatypes },
        { "suite", toString(settings.suiteVariant) },
        { "format", toString(settings.promptFormat) },
        { "threshold", settings.similarityThreshold },
        { "feedback_prompts_per_test", settings.feedbackPromptsPerTest },
        { "include_description", settings.includeDescription },
        { "n_tests", testCount },
        { "interactive", interactive },
    };
}

auto SessionHeader::fromJson(json const& j) -> SessionHeader
{
    auto h = SessionHeader {};
    h.problemId = j.at("problem_id").get<std::string>();
    h.difficulty = j.at("difficulty").get<std::string>();
    h.ioDatatypes = j.value("io_datatypes", std::string {});
    h.settings.suiteVariant = parseProvenance(j.at("suite").get<std::string>());
    h.settings.promptFormat = parsePromptFormat(j.at("format").get<std::string>());
    h.settings.similarityThreshold = j.at("threshold").get<double>();
    h.settings.feedbackPromptsPerTest = j.value("feedback_prompts_per_test", 3);
    h.settings.includeDescription = j.value("include_description", false);
    h.testCount = j.at("n_tests").get<std::size_t>();
    h.interactive = j.value("interactive", false);
    return h;
}

auto readHeader(std::vector<JournalEntry> const& entries) -> SessionHeader
{
    if (entries.empty() || !entries.front().payload.contains("header"))
        throw JournalError("journal does not open with a session header");
    return SessionHeader::fromJson(entries.front().payload.at("header"));
}

auto foldJournal(std::vector<JournalEntry> const& entries, ProblemLookup const& lookup) -> FoldedSession
{
    auto folded = FoldedSession {};
    folded.header = readHeader(entries);
    auto problem = lookup(folded.header.problemId);
    if (!problem)
        throw JournalError(fmt::format("unknown problem {}", folded.header.problemId));
    folded.state = makeSession(std::move(problem), folded.header.settings);

    auto apply = [&](JournalEntry const& e, Event const& ev) {
        try
        {
            folded.state = step(folded.state, ev).state;
        }
        catch (StateMachineError const& err)
        {
            throw mismatch(e, err.what());
        }
    };

    // The session starts when its first entry is written.
    apply(entries.front(), event::Start {});
    for (auto const& e: entries)
    {
        switch (e.kind)
        {
            case EntryKind::StatusChange:
            {
                auto const status = parseSessionStatus(e.payload.at("status").get<std::string>());
                if (!isTerminal(status))
                    break;
                auto const reason = e.payload.value("reason", std::string {});
                if (isTerminal(folded.state.status))
                {
                    if (folded.state.status != status || folded.state.stopReason != reason)
                        throw mismatch(e, "terminal status differs");
                    break;
                }
                if (reason == "hints_exhausted")
                    apply(e, event::HintUnavailable {});
                else
                    apply(e, event::Abort { reason });
                break;
            }
            case EntryKind::PromptSent:
            {
                auto const* prompt = std::get_if<action::SendPrompt>(&folded.state.pendingAction);
                auto const text = e.payload.at("text").get<std::string>();
                if (!prompt || prompt->text != text)
                    throw mismatch(e, "prompt text differs from the state machine's");
                folded.unanswered = text;
                break;
            }
            case EntryKind::ResponseReceived:
            {
                if (!folded.unanswered)
                    throw mismatch(e, "response without a prompt");
                auto const text = e.payload.at("text").get<std::string>();
                folded.turns.push_back({ Role::User, *folded.unanswered });
                folded.turns.push_back({ Role::Assistant, text });
                folded.unanswered.reset();
                apply(e, event::LLMResponse { text });
                break;
            }
            case EntryKind::TestReport:
            {
                auto report = TestReport::fromJson(e.payload.at("report"));
                if (e.payload.value("suite", std::string("driving")) == "oracle")
                    apply(e, event::OracleCompleted { report.allPass() });
                else
                    apply(e, event::TestsCompleted { std::move(report) });
                break;
            }
            case EntryKind::HintProvided: apply(e, event::HintProvided { e.payload.at("text").get<std::string>() }); break;
            case EntryKind::Outcome:
            {
                auto const kind = parseOutcomeKind(e.payload.at("outcome").get<std::string>());
                if (folded.state.revisions.empty() || folded.state.revisions.back().outcome.kind != kind)
                    throw mismatch(e, "outcome differs");
                break;
            }
            case EntryKind::CodeExtracted:
            case EntryKind::HintRequested: break;
        }
    }
    return folded;
}

auto resume(fs::path const& journal, ProblemLookup const& lookup) -> FoldedSession
{
    auto const entries = loadJournal(journal);
    if (!entries.empty() && isTerminalEntry(entries.back()))
        throw AlreadyFinishedError(fmt::format("session in {} already finished ({})",
                                               journal.string(),
                                               entries.back().payload.at("status").get<std::string>()));
    return foldJournal(entries, lookup);
}

auto journalToTranscript(std::vector<JournalEntry> const& entries) -> std::vector<TranscriptRecord>
{
    auto records = std::vector<TranscriptRecord> {};
    auto pending = std::optional<std::string> {};
    for (auto const& e: entries)
    {
        if (e.kind == EntryKind::PromptSent)
            pending = e.payload.at("text").get<std::string>();
        else if (e.kind == EntryKind::ResponseReceived && pending)
        {
            records.push_back({ records.size() + 1, Role::User, *pending });
            records.push_back({ records.size() + 1, Role::Assistant, e.payload.at("text").get<std::string>() });
            pending.reset();
        }
    }
    return records;
}

auto withoutTimestamps(JournalEntry const& entry) -> json
{
    auto j = entry.toJson();
    j.erase("timestamp");
    if (entry.kind == EntryKind::TestReport && j["payload"].contains("report"))
    {
        j["payload"]["report"].erase("started");
        j["payload"]["report"].erase("finished");
    }
    return j;
}

} // namespace tddloop
