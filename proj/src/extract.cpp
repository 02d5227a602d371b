// SPDX-License-Identifier: Apache-2.0
#include <tddloop/errors.hpp>
#include <tddloop/extract.hpp>

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <memory>
#include <regex>
#include <sstream>

#include <fmt/format.h>

namespace tddloop
{

namespace
{

    struct Fence
    {
        char marker;
        std::size_t length;
    };

    auto fenceOf(std::string_view line) -> std::optional<Fence>
    {
        auto const t = trim(line);
        if (t.size() < 3 || (t[0] != '`' && t[0] != '~'))
            return std::nullopt;
        auto n = std::size_t { 0 };
        while (n < t.size() && t[n] == t[0])
            ++n;
        if (n < 3)
            return std::nullopt;
        return Fence { t[0], n };
    }

    auto isClosingFence(std::string_view line, Fence const& open) -> bool
    {
        auto const f = fenceOf(line);
        return f && f->marker == open.marker && f->length >= open.length
               && trim(line).size() == f->length;
    }

    auto fencedBlocks(std::string_view response) -> std::vector<std::string>
    {
        auto blocks = std::vector<std::string> {};
        auto open = std::optional<Fence> {};
        auto current = std::string {};
        for (auto const line: splitLines(response))
        {
            if (!open)
            {
                open = fenceOf(line);
                current.clear();
                continue;
            }
            if (isClosingFence(line, *open))
            {
                blocks.push_back(current);
                open.reset();
                continue;
            }
            current.append(line).append("\n");
        }
        // An unterminated trailing block still counts.
        if (open && !current.empty())
            blocks.push_back(current);
        return blocks;
    }

    auto rstrip(std::string text) -> std::string
    {
        while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back())))
            text.pop_back();
        return text;
    }

    auto indentOf(std::string_view line) -> std::size_t
    {
        auto n = std::size_t { 0 };
        while (n < line.size() && (line[n] == ' ' || line[n] == '\t'))
            ++n;
        return n;
    }

    auto looksLikeCodeStart(std::string_view line, LanguageProfile const& profile) -> bool
    {
        static auto const python = std::regex(R"(^(def|class|import|from|async\s+def)\s)");
        static auto const clike = std::regex(R"(^(#include|int|void|bool|char|long|double|struct|static)\b)");
        auto const s = std::string(line);
        return profile.name == "python" ? std::regex_search(s, python) : std::regex_search(s, clike);
    }

    // Collects the first run of code-looking lines from unfenced prose.
    auto scanUnfencedCode(std::string_view response, LanguageProfile const& profile) -> std::string
    {
        auto const lines = splitLines(response);
        auto code = std::string {};
        auto inCode = false;
        for (auto const line: lines)
        {
            if (!inCode)
            {
                if (indentOf(line) == 0 && looksLikeCodeStart(line, profile))
                {
                    inCode = true;
                    code.append(line).append("\n");
                }
                continue;
            }
            auto const t = trim(line);
            auto const continues = t.empty() || indentOf(line) > 0 || looksLikeCodeStart(line, profile)
                                   || t.front() == '@' || t.front() == '}'
                                   || t.starts_with(profile.lineComment);
            if (!continues)
                break;
            code.append(line).append("\n");
        }
        return rstrip(code);
    }

    // Removes a trailing line comment, ignoring comment markers inside strings.
    auto stripLineComment(std::string_view line, LanguageProfile const& profile) -> std::string_view
    {
        auto quote = '\0';
        for (auto i = std::size_t { 0 }; i < line.size(); ++i)
        {
            auto const c = line[i];
            if (quote != '\0')
            {
                if (c == '\\')
                    ++i;
                else if (c == quote)
                    quote = '\0';
                continue;
            }
            if (c == '"' || c == '\'')
                quote = c;
            else if (line.substr(i).starts_with(profile.lineComment))
                return line.substr(0, i);
        }
        return line;
    }

    auto isDocstringStart(std::string_view t) -> bool
    {
        return t.starts_with("\"\"\"") || t.starts_with("'''") || t.starts_with("r\"\"\"")
               || t.starts_with("\"") || t.starts_with("'");
    }

    auto isNoop(std::string_view t, LanguageProfile const& profile) -> bool
    {
        return t == profile.noopStatement || t == "...";
    }

    // Python only: any `def` whose body (after an optional docstring) holds
    // nothing but no-op statements.
    auto hasNoopFunction(std::string_view code, LanguageProfile const& profile) -> bool
    {
        auto const lines = splitLines(code);
        auto const keyword = profile.definitionKeyword + " ";
        for (auto i = std::size_t { 0 }; i < lines.size(); ++i)
        {
            auto const t = trim(lines[i]);
            if (!t.starts_with(keyword) && !t.starts_with("async " + keyword))
                continue;
            auto const defIndent = indentOf(lines[i]);

            // Find the line that closes the header.
            auto depth = 0;
            auto headerEnd = i;
            auto inlineBody = std::string_view {};
            for (; headerEnd < lines.size(); ++headerEnd)
            {
                auto const s = stripLineComment(lines[headerEnd], profile);
                auto colon = std::string_view::npos;
                for (auto k = std::size_t { 0 }; k < s.size(); ++k)
                {
                    if (s[k] == '(' || s[k] == '[' || s[k] == '{')
                        ++depth;
                    else if (s[k] == ')' || s[k] == ']' || s[k] == '}')
                        --depth;
                    else if (s[k] == ':' && depth == 0)
                        colon = k;
                }
                if (depth <= 0 && colon != std::string_view::npos)
                {
                    inlineBody = trim(s.substr(colon + 1));
                    break;
                }
            }
            if (headerEnd >= lines.size())
                continue;

            auto body = std::vector<std::string_view> {};
            if (!inlineBody.empty())
                body.push_back(inlineBody);
            else
            {
                for (auto j = headerEnd + 1; j < lines.size(); ++j)
                {
                    auto const bt = trim(lines[j]);
                    if (bt.empty())
                        continue;
                    if (indentOf(lines[j]) <= defIndent)
                        break;
                    auto const s = trim(stripLineComment(lines[j], profile));
                    if (!s.empty())
                        body.push_back(s);
                }
            }
            if (body.empty())
                continue;

            auto k = std::size_t { 0 };
            if (isDocstringStart(body[0]))
            {
                auto const triple = body[0].find("\"\"\"") != std::string_view::npos ? std::string_view("\"\"\"")
                                    : body[0].find("'''") != std::string_view::npos
                                        ? std::string_view("'''")
                                        : std::string_view {};
                if (!triple.empty() && body[0].find(triple, body[0].find(triple) + 3) == std::string_view::npos)
                {
                    // Multi-line docstring: skip to its closing quotes.
                    k = 1;
                    while (k < body.size() && body[k].find(triple) == std::string_view::npos)
                        ++k;
                }
                ++k;
            }
            auto const allNoop = std::all_of(body.begin() + static_cast<std::ptrdiff_t>(std::min(k, body.size())),
                                             body.end(),
                                             [&](auto s) { return isNoop(s, profile); });
            if (allNoop)
                return true;
        }
        return false;
    }

} // namespace

auto definesFunction(std::string_view code, std::string_view functionName, LanguageProfile const& profile) -> bool
{
    if (functionName.empty())
        return false;
    auto const pattern = profile.definitionKeyword.empty()
                             ? fmt::format(R"(\b{}\s*\([^;{{}}]*\)\s*\{{)", functionName)
                             : fmt::format(R"((^|\n)[ \t]*(async[ \t]+)?{}[ \t]+{}[ \t]*\()",
                                           profile.definitionKeyword,
                                           functionName);
    return std::regex_search(std::string(code), std::regex(pattern));
}

auto extract(std::string_view response, std::string_view sanitizedSignature, LanguageProfile const& profile)
    -> CandidateCode
{
    auto const header = parseFunctionHeader(sanitizedSignature);
    auto const target = header ? header->name : std::string {};

    auto candidate = CandidateCode {};
    candidate.rawResponse = std::string(response);

    auto blocks = fencedBlocks(response);
    std::erase_if(blocks, [](auto const& b) { return trim(b).empty(); });

    if (!blocks.empty())
    {
        auto const defining = std::find_if(blocks.rbegin(), blocks.rend(), [&](auto const& b) {
            return definesFunction(b, target, profile);
        });
        if (defining != blocks.rend())
            candidate.codeText = rstrip(*defining);
        else
        {
            auto joined = std::string {};
            for (auto const& b: blocks)
            {
                if (!joined.empty())
                    joined += "\n";
                joined += rstrip(b) + "\n";
            }
            candidate.codeText = rstrip(joined);
        }
    }
    else
        candidate.codeText = scanUnfencedCode(response, profile);

    if (trim(candidate.codeText).empty())
        throw NoCodeFoundError("no code found in response");

    candidate.targetNamePresent = definesFunction(candidate.codeText, target, profile);
    candidate.incomplete = detectIncomplete(candidate.codeText, profile);
    candidate.normalized = normalize(candidate.codeText, profile);
    candidate.contentHash = contentHash(candidate.normalized);
    return candidate;
}

auto detectIncomplete(std::string_view codeText, LanguageProfile const& profile) -> bool
{
    // Markers count in comments and in code, not inside string literals.
    static auto const marker = std::regex(R"(\b(TODO|FIXME)\b)");
    auto const tokens = lex(codeText, profile);
    if (!tokens && std::regex_search(std::string(codeText), marker))
        return true;
    if (tokens)
        for (auto const& t: *tokens)
            if (t.kind == TokenKind::Identifier && (t.text == "TODO" || t.text == "FIXME"))
                return true;
    for (auto const line: splitLines(codeText))
    {
        auto const code = stripLineComment(line, profile);
        auto const comment = std::string(line.substr(code.size()));
        if (std::regex_search(comment, marker) || trim(code) == "...")
            return true;
    }
    if (profile.definitionKeyword.empty())
        return false;
    return hasNoopFunction(codeText, profile);
}

auto normalize(std::string_view codeText, LanguageProfile const& profile) -> std::vector<std::string>
{
    auto out = std::vector<std::string> {};
    if (auto const tokens = lex(codeText, profile))
    {
        out.reserve(tokens->size());
        for (auto const& t: *tokens)
            out.push_back(t.text);
        return out;
    }
    auto stream = std::istringstream(std::string(codeText));
    for (auto word = std::string {}; stream >> word;)
        out.push_back(word);
    return out;
}

auto prettyPrint(std::vector<std::string> const& tokens) -> std::string
{
    auto out = std::string {};
    for (auto const& t: tokens)
    {
        if (!out.empty())
            out += ' ';
        out += t;
    }
    return out;
}

auto sha256Hex(std::string_view data) -> std::string
{
    auto ctx = std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)>(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    auto digest = std::array<unsigned char, EVP_MAX_MD_SIZE> {};
    auto length = 0u;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1
        || EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1
        || EVP_DigestFinal_ex(ctx.get(), digest.data(), &length) != 1)
        throw Error("sha256 failed");
    auto hex = std::string {};
    hex.reserve(length * 2);
    for (auto i = 0u; i < length; ++i)
        hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

auto contentHash(std::vector<std::string> const& tokens) -> std::string
{
    // Length-prefixed so token boundaries are part of the digest.
    auto buffer = std::string {};
    for (auto const& t: tokens)
        buffer += fmt::format("{}:{}", t.size(), t);
    return sha256Hex(buffer);
}

} // namespace tddloop
