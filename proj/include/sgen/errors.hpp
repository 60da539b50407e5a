#pragma once

#include <stdexcept>
#include <string>

namespace sgen {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// IDX / dataset errors
struct BadMagic : Error { using Error::Error; };
struct TruncatedPayload : Error { using Error::Error; };
struct UnsupportedShape : Error { using Error::Error; };
struct LabelOutOfRange : Error { using Error::Error; };
struct InvalidCounts : Error { using Error::Error; };
struct InsufficientClassSamples : Error { using Error::Error; };

// model errors
struct DimensionMismatch : Error { using Error::Error; };
struct NonFiniteUpdate : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };
struct BatchTooSmall : Error { using Error::Error; };

// io / harness errors
struct IoError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };
struct InconsistentScenario : Error { using Error::Error; };

} // namespace sgen
