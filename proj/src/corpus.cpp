// SPDX-License-Identifier: Apache-2.0
#include <tddloop/corpus.hpp>
#include <tddloop/errors.hpp>
#include <tddloop/extract.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace tddloop
{

namespace
{

    auto readFile(fs::path const& path) -> std::string
    {
        auto in = std::ifstream(path, std::ios::binary);
        if (!in)
            throw CorpusError(fmt::format("cannot read {}", path.string()));
        auto ss = std::ostringstream {};
        ss << in.rdbuf();
        return ss.str();
    }

    void writeFile(fs::path const& path, std::string_view content)
    {
        auto out = std::ofstream(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw CorpusError(fmt::format("cannot write {}", path.string()));
        out << content;
    }

    auto indentOf(std::string_view line) -> std::size_t
    {
        auto n = std::size_t { 0 };
        while (n < line.size() && (line[n] == ' ' || line[n] == '\t'))
            ++n;
        return n;
    }

    auto countAssertions(std::vector<std::string> const& statements) -> int
    {
        auto n = 0;
        for (auto const& s: statements)
        {
            auto const t = trim(s);
            if (t.starts_with("assert ") || t.starts_with("assert(") || t.starts_with("with pytest.raises"))
                ++n;
        }
        return n;
    }

    auto provenanceFromStem(std::string_view stem) -> Provenance
    {
        return stem.find("auto") != std::string_view::npos ? Provenance::Automated : Provenance::Manual;
    }

    auto findSuiteFile(fs::path const& dir, std::string const& name, LanguageProfile const& profile)
        -> std::optional<fs::path>
    {
        auto const preferred = dir / (name + profile.testFileExtension);
        if (fs::exists(preferred))
            return preferred;
        if (fs::exists(dir / name) && fs::is_regular_file(dir / name))
            return dir / name;
        return std::nullopt;
    }

    auto loadSuiteRef(fs::path const& dir, std::string const& name, SuiteRole role, LanguageProfile const& profile)
        -> SuiteRef
    {
        auto const file = findSuiteFile(dir, name, profile);
        if (!file)
            throw CorpusError(
                fmt::format("{}: suite reference \"{}\" does not resolve to a file", (dir / "manifest.json").string(), name));
        auto ref = SuiteRef { .name = name, .suite = {} };
        try
        {
            ref.suite = parseSuiteSource(readFile(*file), profile);
        }
        catch (CorpusError const& e)
        {
            throw CorpusError(fmt::format("{}: {}", file->string(), e.what()));
        }
        if (ref.suite.tests.empty())
            throw CorpusError(fmt::format("{}: suite \"{}\" has no tests", file->string(), name));
        ref.suite.role = role;
        return ref;
    }

    auto optionalString(json const& j, char const* key) -> std::optional<std::string>
    {
        if (!j.contains(key) || j.at(key).is_null())
            return std::nullopt;
        return j.at(key).get<std::string>();
    }

    const std::set<std::string, std::less<>> callAllowlist = {
        "len",   "sorted", "list",     "set",     "dict", "str",  "int",    "range",     "abs",   "min",
        "max",   "sum",    "any",      "all",     "tuple", "isinstance", "float", "bool", "print", "type",
        "enumerate", "zip", "map",     "filter",  "reversed", "round", "repr", "frozenset", "iter", "next",
        "assert", "not",   "and",      "or",      "in",   "is",   "if",     "return",    "lambda", "raises",
        "approx", "pytest",
    };

    auto callsOtherFunction(TestCase const& test, std::string_view sanitized, LanguageProfile const& profile)
        -> std::vector<std::string>
    {
        auto const tokens = lex(test.body, profile);
        if (!tokens)
            return {};
        auto locals = std::set<std::string, std::less<>> {};
        for (auto i = std::size_t { 0 }; i + 1 < tokens->size(); ++i)
            if ((*tokens)[i].text == profile.definitionKeyword || (*tokens)[i].text == "class")
                locals.insert((*tokens)[i + 1].text);

        auto offenders = std::vector<std::string> {};
        for (auto i = std::size_t { 0 }; i + 1 < tokens->size(); ++i)
        {
            auto const& t = (*tokens)[i];
            if (t.kind != TokenKind::Identifier || (*tokens)[i + 1].text != "(")
                continue;
            if (i > 0 && ((*tokens)[i - 1].text == "." || (*tokens)[i - 1].text == profile.definitionKeyword))
                continue;
            if (t.text == sanitized || locals.contains(t.text) || callAllowlist.contains(t.text))
                continue;
            if (std::isupper(static_cast<unsigned char>(t.text.front())))
                continue;
            if (std::find(offenders.begin(), offenders.end(), t.text) == offenders.end())
                offenders.push_back(t.text);
        }
        return offenders;
    }

} // namespace

auto toString(Difficulty d) -> std::string_view
{
    switch (d)
    {
        case Difficulty::Easy: return "easy";
        case Difficulty::Medium: return "medium";
        case Difficulty::Hard: return "hard";
    }
    return "easy";
}

auto toString(DataType t) -> std::string_view
{
    switch (t)
    {
        case DataType::Int: return "int";
        case DataType::String: return "string";
        case DataType::List: return "list";
        case DataType::Bool: return "bool";
        case DataType::Other: return "other";
    }
    return "other";
}

auto toString(Provenance p) -> std::string_view
{
    return p == Provenance::Manual ? "manual" : "automated";
}

auto toString(SuiteRole r) -> std::string_view
{
    return r == SuiteRole::Driving ? "driving" : "oracle";
}

auto toString(LintKind k) -> std::string_view
{
    switch (k)
    {
        case LintKind::DescriptiveFunctionName: return "DescriptiveFunctionName";
        case LintKind::MetaTest: return "MetaTest";
        case LintKind::DuplicateIO: return "DuplicateIO";
        case LintKind::NonDescriptiveTestName: return "NonDescriptiveTestName";
    }
    return "";
}

auto parseDifficulty(std::string_view s) -> Difficulty
{
    if (s == "easy")
        return Difficulty::Easy;
    if (s == "medium")
        return Difficulty::Medium;
    if (s == "hard")
        return Difficulty::Hard;
    throw CorpusError(fmt::format("unknown difficulty \"{}\"", s));
}

auto parseDataType(std::string_view s) -> DataType
{
    for (auto t: { DataType::Int, DataType::String, DataType::List, DataType::Bool, DataType::Other })
        if (toString(t) == s)
            return t;
    throw CorpusError(fmt::format("unknown datatype \"{}\"", s));
}

auto parseProvenance(std::string_view s) -> Provenance
{
    if (s == "manual")
        return Provenance::Manual;
    if (s == "automated")
        return Provenance::Automated;
    throw CorpusError(fmt::format("unknown provenance \"{}\"", s));
}

auto ProblemManifest::suiteFor(Provenance provenance) const -> TestSuite const*
{
    for (auto const& ref: suites)
        if (ref.suite.provenance == provenance)
            return &ref.suite;
    return nullptr;
}

auto ProblemManifest::ioDatatypeKey() const -> std::string
{
    auto key = std::string {};
    for (auto const t: inputDatatypes)
    {
        if (!key.empty())
            key += ',';
        key += toString(t);
    }
    return key + "->" + std::string(toString(outputDatatype));
}

auto sanitizedName(std::string_view problemId) -> std::string
{
    auto digits = std::string {};
    for (auto const c: problemId)
        if (std::isdigit(static_cast<unsigned char>(c)))
            digits += c;
    if (digits.empty())
        throw SanitizeError(fmt::format("problem id \"{}\" carries no digits", problemId));
    auto const first = digits.find_first_not_of('0');
    digits = first == std::string::npos ? "0" : digits.substr(first);
    return "code" + digits;
}

auto sanitizeSignature(std::string_view originalSignature, std::string_view problemId) -> std::string
{
    auto header = parseFunctionHeader(trim(originalSignature));
    if (!header)
        throw SanitizeError(fmt::format("cannot parse function header \"{}\"", originalSignature));
    header->name = sanitizedName(problemId);
    return header->str();
}

auto testStatements(std::string_view body) -> std::vector<std::string>
{
    auto const lines = splitLines(body);
    auto start = std::size_t { 0 };
    // Skip the (possibly multi-line) header up to the line ending in ':'.
    while (start < lines.size() && !trim(lines[start]).ends_with(":"))
        ++start;
    ++start;

    auto minIndent = std::string_view::npos;
    for (auto i = start; i < lines.size(); ++i)
        if (!trim(lines[i]).empty())
            minIndent = std::min(minIndent, indentOf(lines[i]));

    auto out = std::vector<std::string> {};
    for (auto i = start; i < lines.size(); ++i)
        if (!trim(lines[i]).empty())
            out.emplace_back(lines[i].substr(std::min(minIndent, lines[i].size())));
    return out;
}

auto parseSuiteSource(std::string_view source, LanguageProfile const& profile) -> TestSuite
{
    static auto const provenancePragma = std::regex(R"(^#\s*provenance:\s*(\w+)\s*$)");
    static auto const partitionPragma = std::regex(R"(^#\s*partition:\s*(.*)$)");

    auto suite = TestSuite {};
    auto const lines = splitLines(source);
    auto pendingLabels = std::vector<std::string> {};
    auto seen = std::set<std::string> {};
    auto const keyword = profile.definitionKeyword + " ";

    for (auto i = std::size_t { 0 }; i < lines.size(); ++i)
    {
        auto const line = std::string(lines[i]);
        auto match = std::smatch {};
        if (std::regex_match(line, match, provenancePragma))
        {
            suite.provenance = parseProvenance(match[1].str());
            continue;
        }
        if (std::regex_match(line, match, partitionPragma))
        {
            pendingLabels.clear();
            for (auto const& label: splitTopLevel(match[1].str(), ','))
                if (!trim(label).empty())
                    pendingLabels.emplace_back(trim(label));
            continue;
        }
        if (indentOf(line) != 0 || !line.starts_with(keyword))
        {
            if (!trim(line).empty() && !trim(line).starts_with(profile.lineComment))
                pendingLabels.clear();
            continue;
        }

        auto const header = parseFunctionHeader(std::string_view(line).substr(keyword.size()));
        if (!header)
            throw CorpusError(fmt::format("line {}: cannot parse test header", i + 1));

        auto end = i + 1;
        auto last = i;
        for (; end < lines.size(); ++end)
        {
            if (trim(lines[end]).empty())
                continue;
            if (indentOf(lines[end]) == 0)
                break;
            last = end;
        }

        auto body = std::string {};
        for (auto k = i; k <= last; ++k)
        {
            body.append(lines[k]);
            if (k != last)
                body += '\n';
        }

        auto test = TestCase {
            .id = header->name,
            .name = header->name,
            .body = body,
            .partitionLabels = std::move(pendingLabels),
            .assertCount = 0,
        };
        pendingLabels.clear();
        test.assertCount = countAssertions(testStatements(test.body));
        if (test.assertCount < 1)
            throw CorpusError(fmt::format("test \"{}\" has no assertion", test.id));
        if (!seen.insert(test.id).second)
            throw CorpusError(fmt::format("duplicate test id \"{}\"", test.id));
        suite.tests.push_back(std::move(test));
        i = last;
    }
    return suite;
}

auto renderSuiteSource(TestSuite const& suite) -> std::string
{
    auto out = fmt::format("# provenance: {}\n", toString(suite.provenance));
    for (auto const& test: suite.tests)
    {
        out += "\n\n";
        if (!test.partitionLabels.empty())
        {
            out += "# partition: ";
            for (auto i = std::size_t { 0 }; i < test.partitionLabels.size(); ++i)
                out += (i ? ", " : "") + test.partitionLabels[i];
            out += "\n";
        }
        out += test.body + "\n";
    }
    return out;
}

auto loadProblem(fs::path const& dir, LanguageProfile const& profile) -> ProblemManifest
{
    auto const manifestPath = dir / "manifest.json";
    auto j = json {};
    try
    {
        j = json::parse(readFile(manifestPath));
    }
    catch (json::exception const& e)
    {
        throw CorpusError(fmt::format("{}: unparsable manifest: {}", manifestPath.string(), e.what()));
    }

    try
    {
        auto m = ProblemManifest {};
        m.id = j.at("id").get<std::string>();
        if (m.id.empty())
            throw CorpusError("empty id");
        m.difficulty = parseDifficulty(j.at("difficulty").get<std::string>());
        m.originalSignature = optionalString(j, "original_signature");
        if (auto const s = optionalString(j, "sanitized_signature"))
            m.sanitizedSignature = *s;
        else if (m.originalSignature)
            m.sanitizedSignature = sanitizeSignature(*m.originalSignature, m.id);
        else
            throw CorpusError("neither sanitized_signature nor original_signature given");

        auto const header = parseFunctionHeader(m.sanitizedSignature);
        if (!header || header->name != sanitizedName(m.id))
            throw CorpusError(fmt::format("sanitized_signature \"{}\" must name function {}",
                                          m.sanitizedSignature,
                                          sanitizedName(m.id)));

        for (auto const& t: j.value("input_datatypes", json::array()))
            m.inputDatatypes.push_back(parseDataType(t.get<std::string>()));
        m.outputDatatype = parseDataType(j.value("output_datatype", std::string("other")));

        for (auto const& name: j.at("suites"))
        {
            auto ref = loadSuiteRef(dir, name.get<std::string>(), SuiteRole::Driving, profile);
            auto const text = readFile(*findSuiteFile(dir, ref.name, profile));
            if (text.find("provenance:") == std::string::npos)
                ref.suite.provenance = provenanceFromStem(ref.name);
            m.suites.push_back(std::move(ref));
        }
        if (m.suites.empty())
            throw CorpusError("at least one suite is required");
        if (auto const oracle = optionalString(j, "oracle_suite"))
            m.oracleSuite = loadSuiteRef(dir, *oracle, SuiteRole::Oracle, profile);

        m.hints = j.value("hints", std::vector<std::string> {});
        m.description = optionalString(j, "description");
        return m;
    }
    catch (CorpusError const& e)
    {
        if (std::string_view(e.what()).starts_with(manifestPath.string()))
            throw;
        throw CorpusError(fmt::format("{}: {}", manifestPath.string(), e.what()));
    }
    catch (std::exception const& e)
    {
        throw CorpusError(fmt::format("{}: {}", manifestPath.string(), e.what()));
    }
}

auto loadCorpus(fs::path const& root, LanguageProfile const& profile) -> std::vector<ProblemManifest>
{
    if (!fs::is_directory(root))
        throw CorpusError(fmt::format("corpus root {} is not a directory", root.string()));

    auto problems = std::vector<ProblemManifest> {};
    for (auto const& entry: fs::directory_iterator(root))
    {
        if (!entry.is_directory())
            continue;
        if (!fs::exists(entry.path() / "manifest.json"))
            throw CorpusError(fmt::format("{}: missing manifest", (entry.path() / "manifest.json").string()));
        problems.push_back(loadProblem(entry.path(), profile));
    }
    std::sort(problems.begin(), problems.end(), [](auto const& a, auto const& b) { return a.id < b.id; });
    auto const dup = std::adjacent_find(problems.begin(), problems.end(), [](auto const& a, auto const& b) {
        return a.id == b.id;
    });
    if (dup != problems.end())
        throw CorpusError(fmt::format("duplicate problem id \"{}\"", dup->id));
    return problems;
}

void writeCorpus(fs::path const& root, std::vector<ProblemManifest> const& problems, LanguageProfile const& profile)
{
    for (auto const& m: problems)
    {
        auto const dir = root / m.id;
        fs::create_directories(dir);
        auto j = json::object();
        j["id"] = m.id;
        j["difficulty"] = toString(m.difficulty);
        if (m.originalSignature)
            j["original_signature"] = *m.originalSignature;
        j["sanitized_signature"] = m.sanitizedSignature;
        j["input_datatypes"] = json::array();
        for (auto const t: m.inputDatatypes)
            j["input_datatypes"].push_back(toString(t));
        j["output_datatype"] = toString(m.outputDatatype);
        j["suites"] = json::array();
        for (auto const& ref: m.suites)
        {
            j["suites"].push_back(ref.name);
            writeFile(dir / (ref.name + profile.testFileExtension), renderSuiteSource(ref.suite));
        }
        if (m.oracleSuite)
        {
            j["oracle_suite"] = m.oracleSuite->name;
            writeFile(dir / (m.oracleSuite->name + profile.testFileExtension), renderSuiteSource(m.oracleSuite->suite));
        }
        j["hints"] = m.hints;
        if (m.description)
            j["description"] = *m.description;
        writeFile(dir / "manifest.json", j.dump(2) + "\n");
    }
}

auto lintSuite(TestSuite const& suite, ProblemManifest const& manifest, LanguageProfile const& profile)
    -> std::vector<LintWarning>
{
    static auto const numericName = std::regex(R"(^test_?[0-9]+$)");
    auto const header = parseFunctionHeader(manifest.sanitizedSignature);
    auto const sanitized = header ? header->name : std::string {};

    auto warnings = std::vector<LintWarning> {};
    for (auto const& test: suite.tests)
    {
        for (auto const& name: callsOtherFunction(test, sanitized, profile))
            warnings.push_back({ LintKind::DescriptiveFunctionName,
                                 { test.id },
                                 fmt::format("{} calls {} instead of {}", test.id, name, sanitized) });
        if (test.assertCount > 1)
            warnings.push_back({ LintKind::MetaTest,
                                 { test.id },
                                 fmt::format("{} holds {} assertions", test.id, test.assertCount) });
        if (std::regex_match(test.name, numericName))
            warnings.push_back(
                { LintKind::NonDescriptiveTestName, { test.id }, fmt::format("{} is not descriptive", test.name) });
    }

    // Duplicate I/O compares the normalized statements, ignoring test names.
    auto bodies = std::vector<std::string> {};
    for (auto const& test: suite.tests)
    {
        auto joined = std::string {};
        for (auto const& s: testStatements(test.body))
            joined += s + "\n";
        bodies.push_back(prettyPrint(normalize(joined, profile)));
    }
    for (auto i = std::size_t { 0 }; i < bodies.size(); ++i)
        for (auto k = i + 1; k < bodies.size(); ++k)
            if (bodies[i] == bodies[k])
                warnings.push_back({ LintKind::DuplicateIO,
                                     { suite.tests[i].id, suite.tests[k].id },
                                     fmt::format("{} and {} check identical input/output",
                                                 suite.tests[i].id,
                                                 suite.tests[k].id) });
    return warnings;
}

} // namespace tddloop
