#pragma once

#include <stdexcept>
#include <string>

namespace regcl {

/// Bad input: malformed files, inconsistent shapes, out-of-range settings.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Singular systems, diverging training.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Checkpoints or merge state whose layer layout does not line up.
class TopologyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace regcl
