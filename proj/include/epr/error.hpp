#pragma once

#include <stdexcept>
#include <string>

namespace epr {

//! Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

//! Invalid parameters or run configuration. The message names the offending field.
class ConfigError : public Error {
public:
    using Error::Error;
};

//! The correlation estimator cannot produce a value (empty stack, zero mean, shape mismatch).
class EstimatorError : public Error {
public:
    using Error::Error;
};

//! The fitter found no significant positive peak in the window.
class NoPeakError : public Error {
public:
    using Error::Error;
};

//! Fit preconditions violated (window too small, unconverged fit used downstream).
class FitError : public Error {
public:
    using Error::Error;
};

//! Mask would cover the displacement region used to fit the quantum peak.
class MaskOverlapError : public Error {
public:
    using Error::Error;
};

//! Malformed frame-stack or correlation-map file.
class FormatError : public Error {
public:
    using Error::Error;
};

//! Too many bootstrap resamples failed.
class BootstrapError : public Error {
public:
    using Error::Error;
};

} // namespace epr
