#pragma once

#include <stdexcept>
#include <string>

namespace obr {

// Malformed user input: bad files, invalid arguments, out-of-range values.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Corrupt or incompatible model checkpoints and internal numerical failures.
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace obr
