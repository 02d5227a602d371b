// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tddloop/corpus.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tddloop
{

enum class PromptKind
{
    Initial,
    NextTest,
    TestFailure,
    RepetitionNotice,
    ImplementationHint,
    PlainTextTest,
    MetaTestUpdate,
};

[[nodiscard]] auto toString(PromptKind kind) -> std::string_view;
[[nodiscard]] auto parsePromptKind(std::string_view s) -> PromptKind;

/// Values substituted into a template. Which fields are required depends on
/// the kind being rendered.
struct PromptContext
{
    std::optional<std::string> sanitizedSignature; // [function signature]
    std::optional<std::string> testBody;           // [test]
    std::vector<std::string> failingTestIds;       // [testid]
    std::optional<std::string> hintText;           // [hint text]
    std::optional<std::string> metaTestBody;       // [meta test]
    // Plain-text test description parts.
    std::optional<std::string> testName;
    std::optional<std::string> inputs;
    std::optional<std::string> expectedOutput;
    // Appended after a failure prompt when the last answer was unusable.
    bool requestCompleteCode = false;

    auto operator==(PromptContext const&) const -> bool = default;
};

namespace templates
{
    extern std::string_view const initial;
    extern std::string_view const nextTest;
    extern std::string_view const testFailure;
    extern std::string_view const repetitionNotice;
    extern std::string_view const implementationHint;
    extern std::string_view const plainTextTest;
    extern std::string_view const metaTestUpdate;
    extern std::string_view const completenessClause;

    [[nodiscard]] auto forKind(PromptKind kind) -> std::string_view;
} // namespace templates

/// Substitutes the context into the template for `kind`.
/// Throws RenderError naming the first missing field.
[[nodiscard]] auto render(PromptKind kind, PromptContext const& ctx) -> std::string;

/// "The first test is: <name> with input <inputs>, expected output: <output>."
/// The first argument is shown bare (lists as "array [..]"), later ones as
/// "<param> = <value>". Throws FormatError when the test is not a single
/// `assert f(<literals>) == <literal>`.
[[nodiscard]] auto renderPlainTextTest(TestCase const& test, std::string_view sanitizedSignature) -> std::string;

/// The plain-text description fields only (name, inputs, output).
[[nodiscard]] auto plainTextContext(TestCase const& test, std::string_view sanitizedSignature) -> PromptContext;

inline constexpr std::string_view metaTestName = "test_meta";

/// Folds single-assert tests into one test function, each statement block
/// preceded by a comment naming its source test. Throws RenderError on an
/// empty list or a multi-assert test.
[[nodiscard]] auto renderMetaTest(std::vector<TestCase> const& tests, std::string_view sanitizedSignature)
    -> std::string;

} // namespace tddloop
