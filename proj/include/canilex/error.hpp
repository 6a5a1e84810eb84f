#pragma once

#include <stdexcept>
#include <string>

namespace canilex {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input bytes are not a decodable audio file.
class AudioFormatError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent on-disk container (embeddings, bundle, NDJSON).
class FormatError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Raised by run_pipeline; carries the failing stage and input id.
class StageError : public Error {
public:
    StageError(std::string stage, std::string input_id, const std::string& what)
        : Error(stage + " [" + input_id + "]: " + what),
          stage_(std::move(stage)),
          input_id_(std::move(input_id)) {}

    const std::string& stage() const noexcept { return stage_; }
    const std::string& input_id() const noexcept { return input_id_; }

private:
    std::string stage_;
    std::string input_id_;
};

}  // namespace canilex
