#pragma once

#include <stdexcept>
#include <string>

namespace pivotcap {

// Error categories map 1:1 to CLI exit codes and to the one-line
// machine-parsable prefix printed on stderr ("error: <category>: ...").
enum class ErrorCategory {
    argument = 2,       // bad argument / precondition violation
    config = 3,         // invalid or rejected configuration
    io = 4,             // missing file, unreadable path
    data = 5,           // schema violation, malformed input data
    numeric = 6,        // non-finite values encountered
    contract = 7,       // embedding-model or shape contract broken
    state = 8,          // object used in an invalid state
};

const char* error_category_name(ErrorCategory c);

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const { return category_; }
    int exit_code() const { return static_cast<int>(category_); }

private:
    ErrorCategory category_;
};

[[noreturn]] inline void throw_error(ErrorCategory c, const std::string& msg) {
    throw Error(c, msg);
}

} // namespace pivotcap
