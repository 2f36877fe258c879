#pragma once

#include <stdexcept>
#include <string>

namespace vseg {

/// Serialized content does not match the expected layout; the message names
/// the offending header field or payload section.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error("format error: " + what) {}
};

/// Stored checksum does not match recomputed content.
class ChecksumError : public std::runtime_error {
 public:
  explicit ChecksumError(const std::string& what) : std::runtime_error("checksum error: " + what) {}
};

/// No usable shape template exists (every candidate prediction was empty).
class NoTemplateError : public std::runtime_error {
 public:
  explicit NoTemplateError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace vseg
