// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tddloop/source_text.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tddloop
{

enum class Difficulty
{
    Easy,
    Medium,
    Hard,
};

enum class DataType
{
    Int,
    String,
    List,
    Bool,
    Other,
};

enum class Provenance
{
    Manual,
    Automated,
};

enum class SuiteRole
{
    Driving,
    Oracle,
};

[[nodiscard]] auto toString(Difficulty d) -> std::string_view;
[[nodiscard]] auto toString(DataType t) -> std::string_view;
[[nodiscard]] auto toString(Provenance p) -> std::string_view;
[[nodiscard]] auto toString(SuiteRole r) -> std::string_view;
[[nodiscard]] auto parseDifficulty(std::string_view s) -> Difficulty;
[[nodiscard]] auto parseDataType(std::string_view s) -> DataType;
[[nodiscard]] auto parseProvenance(std::string_view s) -> Provenance;

struct TestCase
{
    std::string id;
    std::string name;
    std::string body; // exactly one test function
    std::vector<std::string> partitionLabels;
    int assertCount = 1;

    auto operator==(TestCase const&) const -> bool = default;
};

struct TestSuite
{
    std::vector<TestCase> tests; // presentation order
    Provenance provenance = Provenance::Manual;
    SuiteRole role = SuiteRole::Driving;

    auto operator==(TestSuite const&) const -> bool = default;
};

/// A named suite file inside a problem directory, parsed on load.
struct SuiteRef
{
    std::string name; // file stem, e.g. "tests_manual"
    TestSuite suite;

    auto operator==(SuiteRef const&) const -> bool = default;
};

struct ProblemManifest
{
    std::string id;
    Difficulty difficulty = Difficulty::Easy;
    std::optional<std::string> originalSignature;
    std::string sanitizedSignature;
    std::vector<DataType> inputDatatypes;
    DataType outputDatatype = DataType::Other;
    std::vector<SuiteRef> suites;
    std::optional<SuiteRef> oracleSuite;
    std::vector<std::string> hints;
    std::optional<std::string> description;

    auto operator==(ProblemManifest const&) const -> bool = default;

    /// First driving suite with the given provenance, or nullptr.
    [[nodiscard]] auto suiteFor(Provenance provenance) const -> TestSuite const*;

    /// e.g. "list,int->int"; used to group results by I/O datatypes.
    [[nodiscard]] auto ioDatatypeKey() const -> std::string;
};

/// Loads `<root>/<id>/manifest.json` for every subdirectory, parsing the
/// referenced suite files. Sorted by id. Throws CorpusError.
[[nodiscard]] auto loadCorpus(std::filesystem::path const& root,
                              LanguageProfile const& profile = pythonProfile()) -> std::vector<ProblemManifest>;

/// Loads a single problem directory. Throws CorpusError.
[[nodiscard]] auto loadProblem(std::filesystem::path const& dir, LanguageProfile const& profile = pythonProfile())
    -> ProblemManifest;

/// Writes manifests and suite files in the layout loadCorpus reads.
void writeCorpus(std::filesystem::path const& root,
                 std::vector<ProblemManifest> const& problems,
                 LanguageProfile const& profile = pythonProfile());

/// Parses a test source file into test cases, one per top-level test function.
[[nodiscard]] auto parseSuiteSource(std::string_view source, LanguageProfile const& profile = pythonProfile())
    -> TestSuite;

[[nodiscard]] auto renderSuiteSource(TestSuite const& suite) -> std::string;

/// Renames the function in a header to "code" + the digits of the problem id
/// (leading zeros stripped). Parameters are left untouched. Throws SanitizeError.
[[nodiscard]] auto sanitizeSignature(std::string_view originalSignature, std::string_view problemId) -> std::string;

/// "code" + digits of the id, e.g. "lc0283" -> "code283".
[[nodiscard]] auto sanitizedName(std::string_view problemId) -> std::string;

enum class LintKind
{
    DescriptiveFunctionName,
    MetaTest,
    DuplicateIO,
    NonDescriptiveTestName,
};

[[nodiscard]] auto toString(LintKind k) -> std::string_view;

struct LintWarning
{
    LintKind kind {};
    std::vector<std::string> testIds;
    std::string message;

    auto operator==(LintWarning const&) const -> bool = default;
};

/// Advisory checks over a suite; never throws for well-formed input.
[[nodiscard]] auto lintSuite(TestSuite const& suite,
                             ProblemManifest const& manifest,
                             LanguageProfile const& profile = pythonProfile()) -> std::vector<LintWarning>;

/// Statements of a test body after its header, dedented.
[[nodiscard]] auto testStatements(std::string_view body) -> std::vector<std::string>;

} // namespace tddloop
