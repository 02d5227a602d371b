// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tddloop/provider.hpp>
#include <tddloop/session.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tddloop
{

enum class EntryKind
{
    PromptSent,
    ResponseReceived,
    CodeExtracted,
    TestReport,
    Outcome,
    HintRequested,
    HintProvided,
    StatusChange,
};

[[nodiscard]] auto toString(EntryKind k) -> std::string_view;
[[nodiscard]] auto parseEntryKind(std::string_view s) -> EntryKind;

struct JournalEntry
{
    std::uint64_t seq = 0;
    std::string timestamp; // UTC, ISO-8601 with milliseconds
    std::string sessionId;
    EntryKind kind {};
    nlohmann::json payload = nlohmann::json::object();

    auto operator==(JournalEntry const&) const -> bool = default;

    [[nodiscard]] auto toJson() const -> nlohmann::json;
    [[nodiscard]] static auto fromJson(nlohmann::json const& j) -> JournalEntry;
};

[[nodiscard]] auto utcTimestamp() -> std::string;

/// `<out>/sessions/<id>.jsonl`
[[nodiscard]] auto journalPath(std::filesystem::path const& outDir, std::string_view sessionId)
    -> std::filesystem::path;

/// Append-only writer for one session's journal. Each entry is flushed and
/// fsync'd before append() returns.
class JournalWriter
{
  public:
    /// Opens (creating if needed) the journal; existing entries are scanned
    /// so numbering continues. Throws JournalError.
    JournalWriter(std::filesystem::path path, std::string sessionId);
    JournalWriter(JournalWriter const&) = delete;
    auto operator=(JournalWriter const&) -> JournalWriter& = delete;
    ~JournalWriter();

    /// Requires entry.seq == lastSeq() + 1 and a non-terminal journal.
    void append(JournalEntry const& entry);

    /// Stamps seq, time and session id, then appends.
    auto append(EntryKind kind, nlohmann::json payload) -> JournalEntry const&;

    [[nodiscard]] auto lastSeq() const noexcept -> std::uint64_t { return _lastSeq; }
    [[nodiscard]] auto closed() const noexcept -> bool { return _closed; }
    [[nodiscard]] auto path() const -> std::filesystem::path const& { return _path; }
    [[nodiscard]] auto sessionId() const -> std::string const& { return _sessionId; }

  private:
    std::filesystem::path _path;
    std::string _sessionId;
    std::FILE* _file = nullptr;
    std::uint64_t _lastSeq = 0;
    bool _closed = false;
    JournalEntry _last;
};

/// Reads every entry. A malformed or truncated record raises
/// JournalCorruptError carrying the record's byte offset.
[[nodiscard]] auto loadJournal(std::filesystem::path const& path) -> std::vector<JournalEntry>;

/// Whether a StatusChange payload marks a terminal status.
[[nodiscard]] auto isTerminalEntry(JournalEntry const& entry) -> bool;

/// Session parameters, carried in the payload of the first entry.
struct SessionHeader
{
    std::string problemId;
    std::string difficulty;
    std::string ioDatatypes;
    SessionSettings settings;
    std::size_t testCount = 0;
    bool interactive = false;

    [[nodiscard]] auto toJson() const -> nlohmann::json;
    [[nodiscard]] static auto fromJson(nlohmann::json const& j) -> SessionHeader;
};

[[nodiscard]] auto readHeader(std::vector<JournalEntry> const& entries) -> SessionHeader;

/// Result of folding a journal back into memory.
struct FoldedSession
{
    SessionHeader header;
    SessionState state;
    std::vector<Turn> turns;              // completed prompt/response pairs
    std::optional<std::string> unanswered; // prompt journaled without a response
};

using ProblemLookup = std::function<std::shared_ptr<ProblemManifest const>(std::string const& problemId)>;

/// Replays the journaled events through step(). Works for terminal and
/// non-terminal journals; throws JournalError when the journal disagrees
/// with the state machine.
[[nodiscard]] auto foldJournal(std::vector<JournalEntry> const& entries, ProblemLookup const& lookup)
    -> FoldedSession;

/// foldJournal for a journal that must still be running.
/// Throws AlreadyFinishedError for terminal journals.
[[nodiscard]] auto resume(std::filesystem::path const& journal, ProblemLookup const& lookup) -> FoldedSession;

/// Converts the prompt/response pairs into replay-transcript records.
[[nodiscard]] auto journalToTranscript(std::vector<JournalEntry> const& entries) -> std::vector<TranscriptRecord>;

/// Entry serialization without timestamps (report start/finish included),
/// for comparing journals of repeated runs.
[[nodiscard]] auto withoutTimestamps(JournalEntry const& entry) -> nlohmann::json;

} // namespace tddloop
