// SPDX-License-Identifier: Apache-2.0
#include <tddloop/errors.hpp>
#include <tddloop/source_text.hpp>

#include <algorithm>
#include <array>
#include <cctype>

namespace tddloop
{

namespace
{

    auto isIdentStart(char c) -> bool
    {
        auto const u = static_cast<unsigned char>(c);
        return std::isalpha(u) || c == '_' || u >= 0x80;
    }

    auto isIdentChar(char c) -> bool
    {
        auto const u = static_cast<unsigned char>(c);
        return std::isalnum(u) || c == '_' || u >= 0x80;
    }

    // Longest first; anything else is a single-character token.
    constexpr auto multiCharPuncts = std::array<std::string_view, 29> {
        "**=", "//=", ">>=", "<<=", "...", "->", "==", "!=", "<=", ">=", "//", "**", "+=", "-=", "*=",
        "/=",  "%=",  "&=",  "|=",  "^=",  ">>", "<<", ":=", "&&", "||", "++", "--", "::", "@=",
    };

    auto startsWith(std::string_view text, std::size_t pos, std::string_view prefix) -> bool
    {
        return !prefix.empty() && text.substr(pos, prefix.size()) == prefix;
    }

    auto iequals(std::string_view a, std::string_view b) -> bool
    {
        return a.size() == b.size()
               && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
                      return std::tolower(static_cast<unsigned char>(x))
                             == std::tolower(static_cast<unsigned char>(y));
                  });
    }

    // Scans a string literal starting at pos (on the opening quote).
    // Returns the index one past the closing quote, or npos if unterminated.
    auto scanString(std::string_view src, std::size_t pos, std::string_view quote) -> std::size_t
    {
        auto const multiline = quote.size() > 1;
        auto i = pos + quote.size();
        while (i < src.size())
        {
            if (src[i] == '\\')
            {
                i += 2;
                continue;
            }
            if (!multiline && src[i] == '\n')
                return std::string_view::npos;
            if (startsWith(src, i, quote))
                return i + quote.size();
            ++i;
        }
        return std::string_view::npos;
    }

    auto matchQuote(std::string_view src, std::size_t pos, LanguageProfile const& profile)
        -> std::optional<std::string_view>
    {
        for (auto const& q: profile.stringQuotes)
            if (startsWith(src, pos, q))
                return std::string_view(q);
        return std::nullopt;
    }

} // namespace

auto pythonProfile() -> LanguageProfile const&
{
    static auto const profile = LanguageProfile {
        .name = "python",
        .lineComment = "#",
        .blockCommentOpen = "",
        .blockCommentClose = "",
        .stringQuotes = { "\"\"\"", "'''", "\"", "'" },
        .stringPrefixes = { "r", "b", "f", "u", "rb", "br", "fr", "rf" },
        .definitionKeyword = "def",
        .noopStatement = "pass",
        .implFileName = "solution.py",
        .testFileExtension = ".py",
        .testPrelude = "from solution import *\n\n",
    };
    return profile;
}

auto cLikeProfile() -> LanguageProfile const&
{
    static auto const profile = LanguageProfile {
        .name = "c",
        .lineComment = "//",
        .blockCommentOpen = "/*",
        .blockCommentClose = "*/",
        .stringQuotes = { "\"", "'" },
        .stringPrefixes = { "L", "u8", "u", "U" },
        .definitionKeyword = "",
        .noopStatement = ";",
        .implFileName = "solution.c",
        .testFileExtension = ".c",
        .testPrelude = "#include \"solution.c\"\n\n",
    };
    return profile;
}

auto profileByName(std::string_view name) -> LanguageProfile const&
{
    if (name == "python")
        return pythonProfile();
    if (name == "c")
        return cLikeProfile();
    throw Error("unknown language profile: " + std::string(name));
}

auto lex(std::string_view src, LanguageProfile const& profile) -> std::optional<std::vector<Token>>
{
    auto tokens = std::vector<Token> {};
    auto i = std::size_t { 0 };
    while (i < src.size())
    {
        auto const c = src[i];
        if (std::isspace(static_cast<unsigned char>(c)))
        {
            ++i;
            continue;
        }
        if (startsWith(src, i, profile.lineComment))
        {
            auto const eol = src.find('\n', i);
            i = eol == std::string_view::npos ? src.size() : eol;
            continue;
        }
        if (startsWith(src, i, profile.blockCommentOpen))
        {
            auto const end = src.find(profile.blockCommentClose, i + profile.blockCommentOpen.size());
            if (end == std::string_view::npos)
                return std::nullopt;
            i = end + profile.blockCommentClose.size();
            continue;
        }
        if (auto const quote = matchQuote(src, i, profile))
        {
            auto const end = scanString(src, i, *quote);
            if (end == std::string_view::npos)
                return std::nullopt;
            tokens.push_back({ TokenKind::String, std::string(src.substr(i, end - i)) });
            i = end;
            continue;
        }
        if (isIdentStart(c))
        {
            auto j = i + 1;
            while (j < src.size() && isIdentChar(src[j]))
                ++j;
            auto const word = src.substr(i, j - i);
            auto const quote = j < src.size() ? matchQuote(src, j, profile) : std::nullopt;
            auto const isPrefix = std::any_of(profile.stringPrefixes.begin(),
                                              profile.stringPrefixes.end(),
                                              [&](auto const& p) { return iequals(p, word); });
            if (quote && isPrefix)
            {
                auto const end = scanString(src, j, *quote);
                if (end == std::string_view::npos)
                    return std::nullopt;
                tokens.push_back({ TokenKind::String, std::string(src.substr(i, end - i)) });
                i = end;
                continue;
            }
            tokens.push_back({ TokenKind::Identifier, std::string(word) });
            i = j;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)))
        {
            auto j = i + 1;
            while (j < src.size() && (isIdentChar(src[j]) || src[j] == '.'))
                ++j;
            tokens.push_back({ TokenKind::Number, std::string(src.substr(i, j - i)) });
            i = j;
            continue;
        }
        auto const multi = std::find_if(multiCharPuncts.begin(), multiCharPuncts.end(), [&](auto p) {
            return startsWith(src, i, p);
        });
        auto const len = multi != multiCharPuncts.end() ? multi->size() : std::size_t { 1 };
        tokens.push_back({ TokenKind::Punct, std::string(src.substr(i, len)) });
        i += len;
    }
    return tokens;
}

auto FunctionHeader::str() const -> std::string
{
    return prefix + name + "(" + parameters + ")" + suffix;
}

auto parseFunctionHeader(std::string_view text) -> std::optional<FunctionHeader>
{
    auto header = FunctionHeader {};
    auto const open = text.find('(');
    if (open == std::string_view::npos)
        return std::nullopt;

    auto const head = text.substr(0, open);
    auto nameEnd = head.size();
    while (nameEnd > 0 && std::isspace(static_cast<unsigned char>(head[nameEnd - 1])))
        --nameEnd;
    auto nameBegin = nameEnd;
    while (nameBegin > 0 && isIdentChar(head[nameBegin - 1]))
        --nameBegin;
    header.name = std::string(head.substr(nameBegin, nameEnd - nameBegin));
    if (!isIdentifier(header.name))
        return std::nullopt;
    header.prefix = std::string(head.substr(0, nameBegin));
    auto const prefixWord = trim(header.prefix);
    if (!prefixWord.empty() && !isIdentifier(prefixWord))
        return std::nullopt;
    // str() reassembles without whitespace before the parenthesis.
    if (nameEnd != head.size())
        return std::nullopt;

    auto depth = 0;
    auto close = std::string_view::npos;
    for (auto i = open; i < text.size(); ++i)
    {
        if (text[i] == '(' || text[i] == '[' || text[i] == '{')
            ++depth;
        else if (text[i] == ')' || text[i] == ']' || text[i] == '}')
        {
            if (--depth == 0)
            {
                close = i;
                break;
            }
        }
    }
    if (close == std::string_view::npos)
        return std::nullopt;

    header.parameters = std::string(text.substr(open + 1, close - open - 1));
    header.suffix = std::string(text.substr(close + 1));

    for (auto const& param: splitTopLevel(header.parameters, ','))
    {
        auto p = trim(param);
        if (p.empty())
            continue;
        auto const cut = std::min(p.find(':'), p.find('='));
        p = trim(p.substr(0, cut));
        while (!p.empty() && p.front() == '*')
            p.remove_prefix(1);
        if (p.empty() || p == "self" || p == "/")
            continue;
        if (!isIdentifier(p))
            return std::nullopt;
        header.parameterNames.emplace_back(p);
    }
    return header;
}

auto splitTopLevel(std::string_view text, char separator) -> std::vector<std::string>
{
    auto parts = std::vector<std::string> {};
    auto depth = 0;
    auto quote = '\0';
    auto current = std::string {};
    for (auto i = std::size_t { 0 }; i < text.size(); ++i)
    {
        auto const c = text[i];
        if (quote != '\0')
        {
            current += c;
            if (c == '\\' && i + 1 < text.size())
                current += text[++i];
            else if (c == quote)
                quote = '\0';
            continue;
        }
        if (c == '"' || c == '\'')
            quote = c;
        else if (c == '(' || c == '[' || c == '{')
            ++depth;
        else if (c == ')' || c == ']' || c == '}')
            --depth;
        else if (c == separator && depth == 0)
        {
            parts.push_back(std::move(current));
            current.clear();
            continue;
        }
        current += c;
    }
    if (!current.empty() || !parts.empty())
        parts.push_back(std::move(current));
    return parts;
}

auto trim(std::string_view text) -> std::string_view
{
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front())))
        text.remove_prefix(1);
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back())))
        text.remove_suffix(1);
    return text;
}

auto splitLines(std::string_view text) -> std::vector<std::string_view>
{
    auto lines = std::vector<std::string_view> {};
    auto start = std::size_t { 0 };
    while (start <= text.size())
    {
        auto const eol = text.find('\n', start);
        if (eol == std::string_view::npos)
        {
            if (start < text.size())
                lines.push_back(text.substr(start));
            break;
        }
        auto line = text.substr(start, eol - start);
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        lines.push_back(line);
        start = eol + 1;
    }
    return lines;
}

auto isIdentifier(std::string_view text) -> bool
{
    return !text.empty() && isIdentStart(text.front())
           && std::all_of(text.begin() + 1, text.end(), isIdentChar);
}

} // namespace tddloop
