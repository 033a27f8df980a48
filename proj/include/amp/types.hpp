#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace amp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BadShape : Error { using Error::Error; };
struct RankDeficient : Error { using Error::Error; };
struct BadLabel : Error { using Error::Error; };
struct BadStep : Error { using Error::Error; };
struct BadSpec : Error { using Error::Error; };
struct NonFinite : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };
struct EmptyClass : Error { using Error::Error; };
struct ZeroMatrix : Error { using Error::Error; };
struct Degenerate : Error { using Error::Error; };
struct CorruptCheckpoint : Error { using Error::Error; };
struct CorruptDataset : Error { using Error::Error; };
struct InvariantViolation : Error { using Error::Error; };
struct StaleCache : Error { using Error::Error; };
struct IOFailure : Error { using Error::Error; };

} // namespace amp
