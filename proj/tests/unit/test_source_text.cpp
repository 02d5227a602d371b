// SPDX-License-Identifier: Apache-2.0
#include <tddloop/errors.hpp>
#include <tddloop/source_text.hpp>

#include <catch_amalgamated.hpp>

using namespace tddloop;

namespace
{
auto texts(std::vector<Token> const& tokens)
{
    auto out = std::vector<std::string> {};
    for (auto const& t: tokens)
        out.push_back(t.text);
    return out;
}
} // namespace

TEST_CASE("lex drops comments and whitespace")
{
    auto const tokens = lex("x = 1  # note\ny += x", pythonProfile());
    REQUIRE(tokens);
    CHECK(texts(*tokens) == std::vector<std::string> { "x", "=", "1", "y", "+=", "x" });
}

TEST_CASE("lex keeps a hash inside a string literal")
{
    auto const tokens = lex(R"(s = "a # b")", pythonProfile());
    REQUIRE(tokens);
    REQUIRE(tokens->size() == 3);
    CHECK((*tokens)[2].kind == TokenKind::String);
    CHECK((*tokens)[2].text == R"("a # b")");
}

TEST_CASE("lex handles triple quotes and prefixed strings")
{
    auto const tokens = lex("d = \"\"\"doc\nstring\"\"\"\nr = rb'\\d'", pythonProfile());
    REQUIRE(tokens);
    CHECK(texts(*tokens) == std::vector<std::string> { "d", "=", "\"\"\"doc\nstring\"\"\"", "r", "=", "rb'\\d'" });
}

TEST_CASE("lex reports unterminated strings")
{
    CHECK_FALSE(lex("s = 'open", pythonProfile()));
    CHECK_FALSE(lex("int x; /* open", cLikeProfile()));
}

TEST_CASE("lex matches multi-character operators greedily")
{
    auto const tokens = lex("a //= b ** 2 -> c != d", pythonProfile());
    REQUIRE(tokens);
    CHECK(texts(*tokens) == std::vector<std::string> { "a", "//=", "b", "**", "2", "->", "c", "!=", "d" });
}

TEST_CASE("lex classifies numbers")
{
    auto const tokens = lex("1.5e3 0x1F 10", pythonProfile());
    REQUIRE(tokens);
    for (auto const& t: *tokens)
        CHECK(t.kind == TokenKind::Number);
}

TEST_CASE("c-like profile strips block comments")
{
    auto const tokens = lex("int /* gone */ x = 1; // also gone", cLikeProfile());
    REQUIRE(tokens);
    CHECK(texts(*tokens) == std::vector<std::string> { "int", "x", "=", "1", ";" });
}

TEST_CASE("profileByName")
{
    CHECK(profileByName("python").implFileName == "solution.py");
    CHECK_THROWS_AS((void)profileByName("cobol"), Error);
}

TEST_CASE("parseFunctionHeader reads names and parameters")
{
    auto const h = parseFunctionHeader("def removeInvalidParentheses(self, s: str) -> List[str]:");
    REQUIRE(h);
    CHECK(h->prefix == "def ");
    CHECK(h->name == "removeInvalidParentheses");
    CHECK(h->parameterNames == std::vector<std::string> { "s" });
    CHECK(h->suffix == " -> List[str]:");
}

TEST_CASE("parseFunctionHeader handles defaults and star arguments")
{
    auto const h = parseFunctionHeader("f(a, b=(1, 2), *args, c: Dict[str, int] = {}, **kw)");
    REQUIRE(h);
    CHECK(h->parameterNames == std::vector<std::string> { "a", "b", "args", "c", "kw" });
    CHECK(h->str() == "f(a, b=(1, 2), *args, c: Dict[str, int] = {}, **kw)");
}

TEST_CASE("parseFunctionHeader rejects malformed headers")
{
    CHECK_FALSE(parseFunctionHeader("not a header"));
    CHECK_FALSE(parseFunctionHeader("f(a"));
    CHECK_FALSE(parseFunctionHeader("1f(a)"));
}

TEST_CASE("splitTopLevel respects nesting and strings")
{
    CHECK(splitTopLevel("a, [1, 2], 'x,y', (3, 4)", ',')
          == std::vector<std::string> { "a", " [1, 2]", " 'x,y'", " (3, 4)" });
    CHECK(splitTopLevel("", ',').empty());
}

TEST_CASE("trim, splitLines, isIdentifier")
{
    CHECK(trim("  a b \t") == "a b");
    CHECK(trim("   ").empty());
    CHECK(splitLines("a\r\nb\nc").size() == 3);
    CHECK(splitLines("a\r\nb\nc")[0] == "a");
    CHECK(isIdentifier("code283"));
    CHECK(isIdentifier("_x"));
    CHECK_FALSE(isIdentifier("2x"));
    CHECK_FALSE(isIdentifier(""));
    CHECK_FALSE(isIdentifier("a-b"));
}
