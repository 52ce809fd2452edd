#ifndef PHOTON_ATOM_ERRORS_HPP
#define PHOTON_ATOM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace photon_atom {

/// Malformed or incomplete configuration (CLI exit code 2).
class ConfigError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Physically invalid parameters or a numerical scheme that cannot deliver
/// the requested accuracy (CLI exit code 3).
class PhysicsError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Input data that is inconsistent in shape or format, e.g. mismatched
/// time grids or unparsable CSV (CLI exit code 4).
class DataFormatError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

} // namespace photon_atom

#endif
