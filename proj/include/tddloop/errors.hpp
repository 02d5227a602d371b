// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tddloop
{

/// Base for every error raised by the engine. Each module throws its own
/// subclass so callers can map failures to exit codes or stop reasons.
class Error: public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

class CorpusError: public Error
{
  public:
    using Error::Error;
};

class SanitizeError: public Error
{
  public:
    using Error::Error;
};

class RenderError: public Error
{
  public:
    using Error::Error;
};

/// A test could not be expressed in the plain-text prompt format.
class FormatError: public Error
{
  public:
    using Error::Error;
};

class ProviderError: public Error
{
  public:
    using Error::Error;
};

class ReplayDivergenceError: public ProviderError
{
  public:
    ReplayDivergenceError(std::size_t turnIndex, std::string const& what):
        ProviderError(what), _turnIndex(turnIndex)
    {
    }

    [[nodiscard]] auto turnIndex() const noexcept -> std::size_t { return _turnIndex; }

  private:
    std::size_t _turnIndex;
};

class ProviderExhaustedError: public ProviderError
{
  public:
    using ProviderError::ProviderError;
};

class NoCodeFoundError: public Error
{
  public:
    using Error::Error;
};

class HarnessError: public Error
{
  public:
    using Error::Error;
};

class StateMachineError: public Error
{
  public:
    using Error::Error;
};

class JournalError: public Error
{
  public:
    using Error::Error;
};

class JournalCorruptError: public JournalError
{
  public:
    JournalCorruptError(std::uint64_t byteOffset, std::string const& what):
        JournalError(what), _byteOffset(byteOffset)
    {
    }

    [[nodiscard]] auto byteOffset() const noexcept -> std::uint64_t { return _byteOffset; }

  private:
    std::uint64_t _byteOffset;
};

class AlreadyFinishedError: public JournalError
{
  public:
    using JournalError::JournalError;
};

class ComparisonError: public Error
{
  public:
    using Error::Error;
};

} // namespace tddloop
