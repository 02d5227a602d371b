// SPDX-License-Identifier: Apache-2.0
#include <tddloop/errors.hpp>
#include <tddloop/extract.hpp>

#include <catch_amalgamated.hpp>

#include "testkit.hpp"

using namespace tddloop;

TEST_CASE("single fenced block defining the target")
{
    auto const response = "Here you go:\n\n```python\ndef code283(nums):\n    nums.sort(key=lambda v: v == 0)\n```\n"
                          "This moves zeroes to the end.";
    auto const c = extract(response, "code283(nums)");
    CHECK(c.targetNamePresent);
    CHECK_FALSE(c.incomplete);
    CHECK(c.codeText == "def code283(nums):\n    nums.sort(key=lambda v: v == 0)");
    CHECK(c.rawResponse == response);
    CHECK(c.contentHash == contentHash(c.normalized));
}

// Hand-labeled responses in the shape of recorded sessions. Each pairs a
// response with the code a reader would take from it.
TEST_CASE("hand-labeled selection fixtures")
{
    struct Fixture
    {
        std::string response;
        std::string signature;
        std::string expected;
        bool targetPresent;
    };
    auto const helper = std::string("def is_valid(s):\n    depth = 0\n    for c in s:\n        if c == '(':\n"
                                    "            depth += 1\n        elif c == ')':\n            depth -= 1\n"
                                    "            if depth < 0:\n                return False\n    return depth == 0");
    auto const main = std::string("def code301(s):\n    level = {s}\n    while level:\n"
                                  "        valid = [t for t in level if is_valid(t)]\n        if valid:\n"
                                  "            return valid\n        level = {t[:i] + t[i + 1:] for t in level for i in range(len(t))}\n"
                                  "    return [\"\"]");
    auto const fixtures = std::vector<Fixture> {
        // 1: helper block first, main block second; main defines the target.
        { "First a helper:\n```python\n" + helper + "\n```\nThen the search:\n```python\n" + main + "\n```\n",
          "code301(s)",
          main,
          true },
        // 2: the fix shown twice; the last definition is the answer.
        { "Before:\n```python\ndef code1(x, y):\n    return 5\n```\nAfter the change:\n```python\ndef code1(x, y):\n"
          "    return x + y\n```\n",
          "code1(x, y)",
          "def code1(x, y):\n    return x + y",
          true },
        // 3: a usage example block after the implementation.
        { "```python\ndef code9(x):\n    return str(x) == str(x)[::-1]\n```\nExample:\n```python\nprint(code9(121))\n```",
          "code9(x)",
          "def code9(x):\n    return str(x) == str(x)[::-1]",
          true },
        // 4: no fences, code embedded in prose.
        { "You can write it like this:\n\ndef code1(x, y):\n    return x + y\n\nThat handles negatives too.",
          "code1(x, y)",
          "def code1(x, y):\n    return x + y",
          true },
        // 5: the model renamed the function; nothing defines the target, blocks are joined.
        { "```python\nimport math\n```\n```python\ndef isPalindrome(x):\n    return str(x) == str(x)[::-1]\n```",
          "code9(x)",
          "import math\n\ndef isPalindrome(x):\n    return str(x) == str(x)[::-1]",
          false },
    };
    auto index = 0;
    for (auto const& f: fixtures)
    {
        ++index;
        INFO("fixture " << index);
        auto const c = extract(f.response, f.signature);
        CHECK(c.codeText == f.expected);
        CHECK(c.targetNamePresent == f.targetPresent);
    }
}

TEST_CASE("tilde fences and language tags")
{
    auto const c = extract("~~~py\ndef code1(x, y):\n    return x + y\n~~~", "code1(x, y)");
    CHECK(c.codeText == "def code1(x, y):\n    return x + y");
}

TEST_CASE("pure prose is not code")
{
    CHECK_THROWS_AS(extract("I need more information about the constraints before writing code.", "code1(x, y)"),
                    NoCodeFoundError);
    CHECK_THROWS_AS(extract("", "code1(x, y)"), NoCodeFoundError);
    CHECK_THROWS_AS(extract("```python\n\n```", "code1(x, y)"), NoCodeFoundError);
}

TEST_CASE("detectIncomplete")
{
    CHECK(detectIncomplete("def code1(x, y):\n    # TODO: handle negatives\n    return x + y"));
    CHECK(detectIncomplete("def code1(x, y):\n    # FIXME later\n    return x"));
    CHECK_FALSE(detectIncomplete("def code1(x, y):\n    return x + y"));
    CHECK(detectIncomplete("def code1(x, y):\n    pass"));
    CHECK(detectIncomplete("def code1(x, y):\n    ..."));
    CHECK(detectIncomplete("def code1(x, y):\n    \"\"\"Adds.\"\"\"\n    pass"));
    CHECK(detectIncomplete("def code1(x, y):\n    total = x\n    ...\n    return total"));
    // A no-op inside a larger body is fine.
    CHECK_FALSE(detectIncomplete("def code1(x, y):\n    if x:\n        pass\n    return x + y"));
    // A TODO inside a string literal is data, not a marker.
    CHECK_FALSE(detectIncomplete("def code1(x):\n    return x == 'TODO'"));
}

TEST_CASE("incomplete flag is carried by extraction")
{
    auto const c = extract("```python\ndef code1(x, y):\n    pass\n```", "code1(x, y)");
    CHECK(c.incomplete);
}

TEST_CASE("normalize ignores comments and indentation")
{
    auto const base = normalize("def f(a):\n    return a + 1");
    CHECK(normalize("def f(a):  # adds one\n    # comment line\n    return a + 1") == base);
    CHECK(normalize("def f( a ):\n\n        return a+1\n") == base);
    CHECK(base == std::vector<std::string> { "def", "f", "(", "a", ")", ":", "return", "a", "+", "1" });
}

TEST_CASE("normalize registers a removed variable")
{
    auto const before = normalize("def f(nums):\n    n = len(nums)\n    seen = set()\n    return n");
    auto const after = normalize("def f(nums):\n    n = len(nums)\n    return n");
    CHECK(before != after);
}

TEST_CASE("normalize is idempotent on its pretty print")
{
    for (auto const* code: { "def f(a):\n    return [x * 2 for x in a if x]  # c",
                             "x = {'k': (1, 2)}\ny = x['k'][0] ** 2",
                             "s = \"text # not a comment\"\nprint(s)" })
    {
        auto const once = normalize(code);
        CHECK(normalize(prettyPrint(once)) == once);
    }
}

TEST_CASE("normalize degrades on unlexable text")
{
    CHECK(normalize("x = 'open\n  y") == std::vector<std::string> { "x", "=", "'open", "y" });
}

TEST_CASE("content hash separates token boundaries")
{
    CHECK(contentHash({ "ab", "c" }) != contentHash({ "a", "bc" }));
    CHECK(contentHash({ "a" }) == contentHash({ "a" }));
    CHECK(contentHash({}).size() == 64);
}

TEST_CASE("sha256Hex known vector")
{
    CHECK(sha256Hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("definesFunction")
{
    CHECK(definesFunction("def code1(x):\n    pass", "code1"));
    CHECK(definesFunction("class S:\n    def code1(self, x):\n        pass", "code1"));
    CHECK_FALSE(definesFunction("print(code1(2))", "code1"));
    CHECK_FALSE(definesFunction("def code12(x):\n    pass", "code1"));
}
