// SPDX-License-Identifier: Apache-2.0
#include <tddloop/errors.hpp>
#include <tddloop/prompt.hpp>

#include <array>
#include <utility>

#include <fmt/format.h>

namespace tddloop
{

namespace templates
{
    std::string_view const initial =
        "You are tasked with solving a coding problem using Test-Driven Development principles. Your goal is to "
        "implement a function/method to satisfy a set of predefined tests. Your function/method should return the "
        "expected output for all tests.\n"
        "The function name is [function signature]:\n"
        "Your task is to iteratively modify this function based on provided tests. If the test case fails, you "
        "should:\n"
        "Suggest code modifications to make the test case pass or ask for clarifications if needed, such as "
        "constraints or edge cases.\n"
        "Continue this process until all the defined test cases pass.\n"
        "During the process, make sure you provide explanations and justifications for code changes.\n"
        "The first test to satisfy is [test]";

    std::string_view const nextTest =
        "The next test to satisfy is [test]. Modify the function so that all tests provided so far pass.";

    std::string_view const testFailure =
        "Unit test [testid] is failing. Modify code to pass all the test cases and provide an explanation for the "
        "modification.";

    std::string_view const repetitionNotice =
        "This is the same code as the previous one you generated. Please carefully review all the tests and modify "
        "the code.";

    std::string_view const implementationHint =
        "Hint: [hint text]. Modify the code accordingly so that all tests pass.";

    std::string_view const plainTextTest = "The first test is: [name] with input [inputs], expected output: [output].";

    std::string_view const metaTestUpdate =
        "The updated test to satisfy is [meta test]. Modify the function so that all tests provided so far pass.";

    std::string_view const completenessClause =
        " Please provide the complete implementation without placeholders or TODO comments.";

    auto forKind(PromptKind kind) -> std::string_view
    {
        switch (kind)
        {
            case PromptKind::Initial: return initial;
            case PromptKind::NextTest: return nextTest;
            case PromptKind::TestFailure: return testFailure;
            case PromptKind::RepetitionNotice: return repetitionNotice;
            case PromptKind::ImplementationHint: return implementationHint;
            case PromptKind::PlainTextTest: return plainTextTest;
            case PromptKind::MetaTestUpdate: return metaTestUpdate;
        }
        return {};
    }
} // namespace templates

namespace
{

    constexpr auto kindNames = std::array<std::pair<PromptKind, std::string_view>, 7> { {
        { PromptKind::Initial, "Initial" },
        { PromptKind::NextTest, "NextTest" },
        { PromptKind::TestFailure, "TestFailure" },
        { PromptKind::RepetitionNotice, "RepetitionNotice" },
        { PromptKind::ImplementationHint, "ImplementationHint" },
        { PromptKind::PlainTextTest, "PlainTextTest" },
        { PromptKind::MetaTestUpdate, "MetaTestUpdate" },
    } };

    auto require(std::optional<std::string> const& value, std::string_view field, PromptKind kind) -> std::string const&
    {
        if (!value)
            throw RenderError(fmt::format("{} prompt requires field {}", toString(kind), field));
        return *value;
    }

    auto joinIds(std::vector<std::string> const& ids) -> std::string
    {
        auto out = std::string {};
        for (auto const& id: ids)
        {
            if (!out.empty())
                out += ", ";
            out += id;
        }
        return out;
    }

    // Single pass: substituted values are never rescanned for placeholders.
    auto substitute(std::string_view tmpl, std::vector<std::pair<std::string_view, std::string>> const& values)
        -> std::string
    {
        auto out = std::string {};
        auto i = std::size_t { 0 };
        while (i < tmpl.size())
        {
            auto matched = false;
            if (tmpl[i] == '[')
            {
                for (auto const& [key, value]: values)
                {
                    if (tmpl.substr(i).starts_with(key))
                    {
                        out += value;
                        i += key.size();
                        matched = true;
                        break;
                    }
                }
            }
            if (!matched)
                out += tmpl[i++];
        }
        return out;
    }

    // Literal grammar accepted in plain-text tests: numbers, strings,
    // True/False/None, and bracketed collections of literals.
    auto isLiteral(std::string_view text) -> bool
    {
        auto const t = trim(text);
        if (t.empty())
            return false;
        if (t == "True" || t == "False" || t == "None")
            return true;
        auto const tokens = lex(t, pythonProfile());
        if (!tokens || tokens->empty())
            return false;
        if (tokens->size() == 1)
            return (*tokens)[0].kind == TokenKind::Number || (*tokens)[0].kind == TokenKind::String;
        if ((*tokens)[0].text == "-" && tokens->size() == 2)
            return (*tokens)[1].kind == TokenKind::Number;

        auto const open = t.front();
        auto const close = t.back();
        auto const bracketed = (open == '[' && close == ']') || (open == '(' && close == ')') || (open == '{' && close == '}');
        if (!bracketed)
            return false;
        auto const inner = t.substr(1, t.size() - 2);
        if (trim(inner).empty())
            return true;
        for (auto const& part: splitTopLevel(inner, ','))
        {
            auto p = trim(part);
            if (p.empty())
                continue; // trailing comma
            if (open == '{')
            {
                auto const kv = splitTopLevel(p, ':');
                if (kv.size() == 2)
                {
                    if (!isLiteral(kv[0]) || !isLiteral(kv[1]))
                        return false;
                    continue;
                }
            }
            if (!isLiteral(p))
                return false;
        }
        return true;
    }

    struct CallAssert
    {
        std::string function;
        std::vector<std::string> arguments;
        std::string expected;
    };

    auto parseCall(std::string_view text) -> std::optional<std::pair<std::string, std::string>>
    {
        auto const t = trim(text);
        auto const open = t.find('(');
        if (open == std::string_view::npos || t.back() != ')')
            return std::nullopt;
        auto const name = trim(t.substr(0, open));
        if (!isIdentifier(name))
            return std::nullopt;
        // The opening parenthesis must match the final one.
        auto depth = 0;
        for (auto i = open; i < t.size(); ++i)
        {
            if (t[i] == '(')
                ++depth;
            else if (t[i] == ')' && --depth == 0 && i != t.size() - 1)
                return std::nullopt;
        }
        return std::pair { std::string(name), std::string(t.substr(open + 1, t.size() - open - 2)) };
    }

    auto parseCallAssert(TestCase const& test) -> CallAssert
    {
        auto const statements = testStatements(test.body);
        if (statements.size() != 1 || !trim(statements[0]).starts_with("assert "))
            throw FormatError(fmt::format("{}: not a single assert statement", test.id));
        auto const expr = trim(std::string_view(statements[0]).substr(7));
        auto const sides = splitTopLevel(expr, '=');
        // "a == b" splits into ["a ", "", " b"].
        if (sides.size() != 3 || !trim(sides[1]).empty())
            throw FormatError(fmt::format("{}: assertion is not an equality", test.id));

        auto call = parseCall(sides[0]);
        auto expected = std::string(trim(sides[2]));
        if (!call)
        {
            call = parseCall(sides[2]);
            expected = std::string(trim(sides[0]));
        }
        if (!call)
            throw FormatError(fmt::format("{}: no function call in assertion", test.id));
        if (!isLiteral(expected))
            throw FormatError(fmt::format("{}: expected value is not a literal", test.id));

        auto result = CallAssert { .function = call->first, .arguments = {}, .expected = expected };
        for (auto const& arg: splitTopLevel(call->second, ','))
            if (!trim(arg).empty())
                result.arguments.emplace_back(trim(arg));
        return result;
    }

    auto startsCollection(std::string_view value) -> bool
    {
        return !value.empty() && (value.front() == '[' || value.front() == '(');
    }

} // namespace

auto toString(PromptKind kind) -> std::string_view
{
    for (auto const& [k, name]: kindNames)
        if (k == kind)
            return name;
    return "";
}

auto parsePromptKind(std::string_view s) -> PromptKind
{
    for (auto const& [k, name]: kindNames)
        if (name == s)
            return k;
    throw RenderError(fmt::format("unknown prompt kind \"{}\"", s));
}

auto render(PromptKind kind, PromptContext const& ctx) -> std::string
{
    auto text = std::string {};
    switch (kind)
    {
        case PromptKind::Initial:
            text = substitute(templates::initial,
                              { { "[function signature]", require(ctx.sanitizedSignature, "sanitized_signature", kind) },
                                { "[test]", require(ctx.testBody, "test_body", kind) } });
            break;
        case PromptKind::NextTest:
            text = substitute(templates::nextTest, { { "[test]", require(ctx.testBody, "test_body", kind) } });
            break;
        case PromptKind::TestFailure:
            if (ctx.failingTestIds.empty())
                throw RenderError("TestFailure prompt requires field failing_test_ids");
            text = substitute(templates::testFailure, { { "[testid]", joinIds(ctx.failingTestIds) } });
            break;
        case PromptKind::RepetitionNotice: text = std::string(templates::repetitionNotice); break;
        case PromptKind::ImplementationHint:
            text = substitute(templates::implementationHint,
                              { { "[hint text]", require(ctx.hintText, "hint_text", kind) } });
            break;
        case PromptKind::PlainTextTest:
            text = substitute(templates::plainTextTest,
                              { { "[name]", require(ctx.testName, "test_name", kind) },
                                { "[inputs]", require(ctx.inputs, "inputs", kind) },
                                { "[output]", require(ctx.expectedOutput, "expected_output", kind) } });
            break;
        case PromptKind::MetaTestUpdate:
            text = substitute(templates::metaTestUpdate,
                              { { "[meta test]", require(ctx.metaTestBody, "meta_test_body", kind) } });
            break;
    }
    if (ctx.requestCompleteCode && kind == PromptKind::TestFailure)
        text += templates::completenessClause;
    return text;
}

auto plainTextContext(TestCase const& test, std::string_view sanitizedSignature) -> PromptContext
{
    auto const call = parseCallAssert(test);
    auto const header = parseFunctionHeader(sanitizedSignature);
    auto const params = header ? header->parameterNames : std::vector<std::string> {};

    auto inputs = std::string {};
    for (auto i = std::size_t { 0 }; i < call.arguments.size(); ++i)
    {
        auto arg = std::string_view(call.arguments[i]);
        auto name = i < params.size() ? params[i] : fmt::format("arg{}", i + 1);
        auto const kw = splitTopLevel(arg, '=');
        if (kw.size() == 2 && isIdentifier(trim(kw[0])))
        {
            name = std::string(trim(kw[0]));
            arg = trim(std::string_view(call.arguments[i]).substr(call.arguments[i].find('=') + 1));
        }
        if (!isLiteral(arg))
            throw FormatError(fmt::format("{}: argument {} is not a literal", test.id, i + 1));
        if (i > 0)
            inputs += " and ";
        if (i == 0)
            inputs += startsCollection(arg) ? fmt::format("array {}", arg) : std::string(arg);
        else
            inputs += fmt::format("{} = {}", name, arg);
    }
    if (inputs.empty())
        throw FormatError(fmt::format("{}: call has no arguments", test.id));

    auto ctx = PromptContext {};
    ctx.testName = test.name;
    ctx.inputs = inputs;
    ctx.expectedOutput = call.expected;
    return ctx;
}

auto renderPlainTextTest(TestCase const& test, std::string_view sanitizedSignature) -> std::string
{
    return render(PromptKind::PlainTextTest, plainTextContext(test, sanitizedSignature));
}

auto renderMetaTest(std::vector<TestCase> const& tests, [[maybe_unused]] std::string_view sanitizedSignature)
    -> std::string
{
    if (tests.empty())
        throw RenderError("meta-test requires at least one test");
    auto out = fmt::format("def {}():", metaTestName);
    for (auto const& test: tests)
    {
        if (test.assertCount != 1)
            throw RenderError(fmt::format("meta-test source {} must hold exactly one assertion", test.id));
        out += fmt::format("\n    # {}", test.id);
        for (auto const& statement: testStatements(test.body))
            out += "\n    " + statement;
    }
    return out;
}

} // namespace tddloop
