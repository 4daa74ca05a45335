#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace relprop {

enum class ErrorCode {
  Io,
  EmptyFile,
  MalformedRow,
  NonPositiveCount,
  NegativeValue,
  NoOverlap,
  NoObservables,
  UnknownDrug,
  ShapeMismatch,
  Diverged,
  EmptyOverlap,
  TooFewCellLines,
  EmptyIntersection,
  NonFinite,
  DegenerateGraph,
  InvalidArgument,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "Io";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::NonPositiveCount: return "NonPositiveCount";
    case ErrorCode::NegativeValue: return "NegativeValue";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::NoObservables: return "NoObservables";
    case ErrorCode::UnknownDrug: return "UnknownDrug";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::EmptyOverlap: return "EmptyOverlap";
    case ErrorCode::TooFewCellLines: return "TooFewCellLines";
    case ErrorCode::EmptyIntersection: return "EmptyIntersection";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DegenerateGraph: return "DegenerateGraph";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

// Location fields are 0 when not applicable. Lines and columns are 1-based.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string file = {},
        std::size_t line = 0, std::size_t column = 0)
      : std::runtime_error(compose(code, message, file, line, column)),
        code_(code),
        file_(std::move(file)),
        line_(line),
        column_(column) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  static std::string compose(ErrorCode code, const std::string& message,
                             const std::string& file, std::size_t line,
                             std::size_t column) {
    std::string out;
    if (!file.empty()) {
      out += file;
      if (line != 0) {
        out += ':' + std::to_string(line);
        if (column != 0) out += ':' + std::to_string(column);
      }
      out += ": ";
    } else if (line != 0) {
      out += "line " + std::to_string(line) + ": ";
    }
    out += to_string(code);
    if (!message.empty()) out += ": " + message;
    return out;
  }

  ErrorCode code_;
  std::string file_;
  std::size_t line_;
  std::size_t column_;
};

}  // namespace relprop
