// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tddloop
{

/// Lexical conventions of the language the corpus is written in, plus the
/// file layout the harness uses when materializing a workspace.
struct LanguageProfile
{
    std::string name;
    std::string lineComment;
    std::string blockCommentOpen;
    std::string blockCommentClose;
    // Ordered longest first so triple quotes win over single quotes.
    std::vector<std::string> stringQuotes;
    // Identifier prefixes that may glue onto a string literal (r"", f"", ...).
    std::vector<std::string> stringPrefixes;
    std::string definitionKeyword;
    std::string noopStatement;
    std::string implFileName;
    std::string testFileExtension;
    std::string testPrelude;

    auto operator==(LanguageProfile const&) const -> bool = default;
};

[[nodiscard]] auto pythonProfile() -> LanguageProfile const&;
[[nodiscard]] auto cLikeProfile() -> LanguageProfile const&;

/// Looks a profile up by name ("python", "c"). Throws tddloop::Error.
[[nodiscard]] auto profileByName(std::string_view name) -> LanguageProfile const&;

enum class TokenKind
{
    Identifier,
    Number,
    String,
    Punct,
};

struct Token
{
    TokenKind kind {};
    std::string text;

    auto operator==(Token const&) const -> bool = default;
};

/// Lexes source text, dropping comments and whitespace.
/// Returns nullopt on unterminated strings or block comments.
[[nodiscard]] auto lex(std::string_view source, LanguageProfile const& profile)
    -> std::optional<std::vector<Token>>;

/// A function header such as `def code1(a: int, b) -> int:` or `add(x, y)`.
struct FunctionHeader
{
    std::string prefix;     // text before the name, e.g. "def "
    std::string name;
    std::string parameters; // raw text between the outer parentheses
    std::string suffix;     // text after the closing parenthesis
    std::vector<std::string> parameterNames;

    [[nodiscard]] auto str() const -> std::string;
};

[[nodiscard]] auto parseFunctionHeader(std::string_view text) -> std::optional<FunctionHeader>;

/// Splits on top-level commas, ignoring commas nested in brackets or strings.
[[nodiscard]] auto splitTopLevel(std::string_view text, char separator) -> std::vector<std::string>;

[[nodiscard]] auto trim(std::string_view text) -> std::string_view;
[[nodiscard]] auto splitLines(std::string_view text) -> std::vector<std::string_view>;
[[nodiscard]] auto isIdentifier(std::string_view text) -> bool;

} // namespace tddloop
