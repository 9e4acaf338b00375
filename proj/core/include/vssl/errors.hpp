#pragma once

#include <stdexcept>
#include <string>

namespace vssl {

// Shape or arity violation on a tensor operation.
class DimensionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration value, unknown config key, or incompatible settings.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// API contract violation: bad index, non-normalized queue input, non-scalar loss.
class ContractError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Unreadable or malformed data file, checkpoint, or metrics log.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// l2_normalize called on a vector with vanishing norm.
class DegenerateVectorError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Queue lookup on an empty queue; the caller decides the policy.
class EmptyQueueError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Training step produced a non-finite loss; message carries the diagnostic dump.
class TrainingDivergedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace vssl
