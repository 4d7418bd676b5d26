#pragma once

#include <stdexcept>
#include <string>

namespace lofi {

// Base of every error raised by the library. Each subtype maps to one failure
// category so callers (mostly the CLI) can pick an exit code or message prefix.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FormatError : public Error {      // missing/unsupported input file
public:
    using Error::Error;
};

class ParseError : public Error {       // malformed token inside an input file
public:
    using Error::Error;
};

class IntegrityError : public Error {   // files disagree with each other
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class StratificationError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace lofi
