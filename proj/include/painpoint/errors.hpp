#pragma once

#include <stdexcept>
#include <string>

namespace painpoint {

// Failure domains map to distinct CLI exit codes.
enum class ErrorKind { config, ingest, gateway, validation, internal };

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::ingest: return 3;
    case ErrorKind::gateway: return 4;
    case ErrorKind::validation: return 5;
    case ErrorKind::internal: return 1;
  }
  return 1;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorKind::config, m) {}
};

struct IngestError : Error {
  explicit IngestError(const std::string& m) : Error(ErrorKind::ingest, m) {}
};

struct GatewayError : Error {
  explicit GatewayError(const std::string& m) : Error(ErrorKind::gateway, m) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& m) : Error(ErrorKind::validation, m) {}
};

// Graph-spec syntax problems carry the offending position.
struct GraphSyntaxError : ValidationError {
  GraphSyntaxError(int line, int column, const std::string& m)
      : ValidationError("line " + std::to_string(line) + ", column " +
                        std::to_string(column) + ": " + m),
        line(line),
        column(column) {}
  int line;
  int column;
};

// Summary replies are rejected for one of three distinguishable causes, so
// the retry note can tell the model what went wrong.
enum class ReplyFault { malformed, missing_field, unknown_scene };

struct SummaryParseError : ValidationError {
  SummaryParseError(ReplyFault fault, const std::string& m)
      : ValidationError(m), fault(fault) {}
  ReplyFault fault;
};

}  // namespace painpoint
