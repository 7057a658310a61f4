#pragma once

#include <stdexcept>
#include <string>

namespace churn {

// Failure categories; each maps to one CLI exit status.
enum class ErrorKind {
    configuration,  // bad descriptor, config, or window bounds
    data,           // unreadable or inconsistent data files
    modeling,       // degenerate training problems
    deployment      // model/data mismatch at scoring time
};

int exit_code(ErrorKind kind) noexcept;
const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string module, const std::string& message, std::string hint = {})
        : std::runtime_error(message), kind_(kind), module_(std::move(module)), hint_(std::move(hint)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& module() const noexcept { return module_; }
    const std::string& hint() const noexcept { return hint_; }

private:
    ErrorKind kind_;
    std::string module_;
    std::string hint_;
};

}  // namespace churn
