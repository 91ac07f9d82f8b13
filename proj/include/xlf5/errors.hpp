#pragma once

#include <stdexcept>
#include <string>

namespace xlf5 {

enum class ErrorCode {
    invalid_input,
    config_mismatch,
    parse_error,
    validation_error,
    empty_after_sanitize,
    no_eligible_boundary,
    invalid_boundary,
    invalid_rate,
    invalid_dataset,
    shape_error,
    invalid_mask,
    invalid_coefficient,
    diverged,
    text_overflow,
    degenerate_split,
    duration_out_of_range,
    config_error,
    usage_error,
    io_error,
};

const char* error_code_name(ErrorCode c);

// Single exception type carrying a code; callers branch on code(), humans
// read what().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace xlf5
