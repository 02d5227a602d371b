// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tddloop/source_text.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace tddloop
{

/// One implementation pulled out of an assistant response.
struct CandidateCode
{
    std::string rawResponse;
    std::string codeText;
    bool targetNamePresent = false;
    bool incomplete = false;
    std::vector<std::string> normalized;
    std::string contentHash; // hex SHA-256 of `normalized`

    auto operator==(CandidateCode const&) const -> bool = default;
};

/// Selects the implementation from a chat response. Fenced blocks win; the
/// block defining the target function is preferred, otherwise all blocks are
/// concatenated. Without fences, falls back to scanning for code lines.
/// Throws NoCodeFoundError when nothing code-like is present.
[[nodiscard]] auto extract(std::string_view response,
                           std::string_view sanitizedSignature,
                           LanguageProfile const& profile = pythonProfile()) -> CandidateCode;

/// True iff the code carries a TODO/FIXME marker, an ellipsis placeholder
/// statement, or a function whose body is only a no-op.
[[nodiscard]] auto detectIncomplete(std::string_view codeText,
                                    LanguageProfile const& profile = pythonProfile()) -> bool;

/// Comment- and whitespace-insensitive token sequence. Identifiers are kept
/// verbatim. Unlexable text degrades to whitespace-separated words.
[[nodiscard]] auto normalize(std::string_view codeText, LanguageProfile const& profile = pythonProfile())
    -> std::vector<std::string>;

/// Space-joined rendering of a normalized sequence.
[[nodiscard]] auto prettyPrint(std::vector<std::string> const& tokens) -> std::string;

[[nodiscard]] auto contentHash(std::vector<std::string> const& tokens) -> std::string;

[[nodiscard]] auto sha256Hex(std::string_view data) -> std::string;

/// Whether `code` contains a definition of `functionName` under the profile.
[[nodiscard]] auto definesFunction(std::string_view code,
                                   std::string_view functionName,
                                   LanguageProfile const& profile = pythonProfile()) -> bool;

} // namespace tddloop
