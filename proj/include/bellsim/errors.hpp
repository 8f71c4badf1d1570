#ifndef BELLSIM_ERRORS_HPP
#define BELLSIM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bellsim {

/// Base class for all failures raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ModeCapExceeded : public Error {
public:
    explicit ModeCapExceeded(const std::string& what) : Error(what) {}
};

class GridMismatch : public Error {
public:
    explicit GridMismatch(const std::string& what) : Error(what) {}
};

class SectorTooLarge : public Error {
public:
    explicit SectorTooLarge(const std::string& what) : Error(what) {}
};

class StepTooLarge : public Error {
public:
    explicit StepTooLarge(const std::string& what) : Error(what) {}
};

class NormDrift : public Error {
public:
    explicit NormDrift(const std::string& what) : Error(what) {}
};

class DegenerateOrbitals : public Error {
public:
    explicit DegenerateOrbitals(const std::string& what) : Error(what) {}
};

// The beable sits on a configuration where the pilot state has (numerically)
// vanished; Bell's rate T = max(J,0)/P is undefined there.
class SourceProbabilityUnderflow : public Error {
public:
    explicit SourceProbabilityUnderflow(const std::string& what) : Error(what) {}
};

class RateStepOverflow : public Error {
public:
    explicit RateStepOverflow(const std::string& what) : Error(what) {}
};

class NodeReached : public Error {
public:
    explicit NodeReached(const std::string& what) : Error(what) {}
};

class OutOfGrid : public Error {
public:
    explicit OutOfGrid(const std::string& what) : Error(what) {}
};

class OddSiteCount : public Error {
public:
    explicit OddSiteCount(const std::string& what) : Error(what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

} // namespace bellsim

#endif
