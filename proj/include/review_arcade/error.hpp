#pragma once

#include <stdexcept>
#include <string>

namespace review_arcade {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or arguments supplied by the caller.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Math domain violations (e.g. atanh of |r| >= 1).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A metric that cannot be computed on the given data
// (constant sequence, too few samples, no multi-review papers).
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

class CorpusError : public Error {
 public:
  using Error::Error;
};

class PromptError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace review_arcade
