#pragma once

#include <stdexcept>
#include <string>

namespace pushbroom {

// Every library failure carries a short machine-readable kind ("invalid-input",
// "no-depth", ...) so the CLI can print a one-line parsable error.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct InvalidInput : Error {
  explicit InvalidInput(const std::string& what) : Error("invalid-input", what) {}
};

struct DegenerateBlock : Error {
  explicit DegenerateBlock(const std::string& what) : Error("degenerate-block", what) {}
};

struct NoDepth : Error {
  explicit NoDepth(const std::string& what) : Error("no-depth", what) {}
};

struct InvalidPose : Error {
  explicit InvalidPose(const std::string& what) : Error("invalid-pose", what) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& what) : Error("parse-error", what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io-error", what) {}
};

}  // namespace pushbroom
