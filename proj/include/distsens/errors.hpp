// distsens: sensitivities of random-vector realizations w.r.t. distribution parameters
// SPDX-License-Identifier: MIT

#ifndef DISTSENS_ERRORS_HPP
#define DISTSENS_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace distsens {

/// Base class for every error the library raises deliberately.
struct Error : std::runtime_error {
  explicit Error(const std::string &what) : std::runtime_error(what) {}
};

// Geometry / indexing
struct PointOutsideGrid : Error { using Error::Error; };
struct IndexOutOfRange : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };

// Density / parameter domain
struct InvalidParameter : Error { using Error::Error; };
struct DomainViolation : Error { using Error::Error; };

// Integration / division guards
struct ZeroMass : Error { using Error::Error; };
struct DensityTooSmall : Error { using Error::Error; };
struct SingularSystem : Error { using Error::Error; };

// Scores
struct TooFewSamples : Error { using Error::Error; };
struct DuplicatePoint : Error { using Error::Error; };

// Sampling
struct SamplerFailure : Error { using Error::Error; };
struct EnvelopeViolation : Error { using Error::Error; };

// Dispatch / fitting / misc
struct UnknownAlgorithm : Error { using Error::Error; };
struct NoSuccessfulRestart : Error { using Error::Error; };
struct NonPositiveData : Error { using Error::Error; };

}  // namespace distsens

#endif  // DISTSENS_ERRORS_HPP
