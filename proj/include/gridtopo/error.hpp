#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gridtopo {

/// Base of every error the library throws.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed user input (files, flags). The CLI maps it to exit code 2.
class InputError : public Error {
  public:
    explicit InputError(const std::string& what, long line = -1)
        : Error(line >= 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    long line() const { return line_; }

  private:
    long line_;
};

class InvalidLineError : public Error {
  public:
    using Error::Error;
};

class SingularLineError : public Error {
  public:
    SingularLineError(const std::string& what, double condition)
        : Error(what + " (condition estimate " + std::to_string(condition) + ")"), condition_(condition) {}
    double condition() const { return condition_; }

  private:
    double condition_;
};

class TopologyError : public Error {
  public:
    using Error::Error;
};

class AssemblyError : public Error {
  public:
    using Error::Error;
};

class GenerationError : public Error {
  public:
    using Error::Error;
};

class SingularCovarianceError : public Error {
  public:
    SingularCovarianceError(const std::string& what, std::vector<int> buses)
        : Error(what), buses_(std::move(buses)) {}
    const std::vector<int>& buses() const { return buses_; }

  private:
    std::vector<int> buses_;
};

class IncompleteTreeError : public Error {
  public:
    using Error::Error;
};

}  // namespace gridtopo
