#pragma once

#include <stdexcept>
#include <string>

namespace csvar {

// Base of every error thrown by the library. Callers that only care about
// "something in csvar failed" can catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class OutOfRangeError : public Error {
 public:
  using Error::Error;
};

// A session with nothing left to model after preprocessing.
class DegenerateSessionError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class OracleError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ClientError : public Error {
 public:
  using Error::Error;
};

}  // namespace csvar
