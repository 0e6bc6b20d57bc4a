#pragma once

#include <stdexcept>
#include <string>

namespace lptm {

// Violated call contract: bad sizes, counts, or parameter ranges.
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Unreadable or unwritable files, truncated streams.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Recognized file but malformed content: bad magic, wrong counts, parse errors.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace lptm
