#include "churn/error.hpp"

namespace churn {

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::configuration: return 2;
        case ErrorKind::data: return 3;
        case ErrorKind::modeling: return 4;
        case ErrorKind::deployment: return 5;
    }
    return 1;
}

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::configuration: return "configuration";
        case ErrorKind::data: return "data";
        case ErrorKind::modeling: return "modeling";
        case ErrorKind::deployment: return "deployment";
    }
    return "unknown";
}

}  // namespace churn
