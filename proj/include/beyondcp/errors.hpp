#ifndef BEYONDCP_ERRORS_HPP
#define BEYONDCP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace beyondcp {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid scenario/experiment configuration or JSON document.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A target delay that aliases past the N-sample FFT window.
class DelayOutOfWindow : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// Rank deficiency, ill-conditioning or a failed decomposition.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace beyondcp

#endif  // BEYONDCP_ERRORS_HPP
