#pragma once

#include <stdexcept>
#include <string>

namespace itbn {

// Error categories aligned with the CLI exit codes: usage = 1, data = 2,
// numeric = 3.
enum class ErrorKind { usage = 1, data = 2, numeric = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

    const char* kind_name() const {
        switch (kind_) {
            case ErrorKind::usage: return "usage";
            case ErrorKind::data: return "data";
            case ErrorKind::numeric: return "numeric";
        }
        return "unknown";
    }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void throw_usage(const std::string& message) {
    throw Error(ErrorKind::usage, message);
}

[[noreturn]] inline void throw_data(const std::string& message) {
    throw Error(ErrorKind::data, message);
}

[[noreturn]] inline void throw_numeric(const std::string& message) {
    throw Error(ErrorKind::numeric, message);
}

} // namespace itbn
