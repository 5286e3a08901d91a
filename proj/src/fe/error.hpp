#pragma once

#include <stdexcept>
#include <string>

namespace fe {

enum class ErrorCode {
    InvalidArgument,
    Io,
    Parse,
    DuplicateId,
    StageMismatch,
    Backend,
    Protocol,
    NoEligibleRecords,
    Internal,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

// Failure attributable to a single record; stage runners turn these into rejections.
class RecordError : public Error {
public:
    RecordError(std::string reason, const std::string& detail)
        : Error(ErrorCode::Internal, detail), reason_(std::move(reason)) {}

    const std::string& reason() const noexcept { return reason_; }

private:
    std::string reason_;
};

} // namespace fe
