#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mlmcfem {

// Each failure mode named in a module contract gets its own type so the CLI
// can map failures to distinct exit codes and tests can catch them precisely.

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class GeometryError : public Error {
public:
    using Error::Error;
};

class MeshError : public Error {
public:
    using Error::Error;
};

class RefinementError : public Error {
public:
    using Error::Error;
};

class AssemblyError : public Error {
public:
    using Error::Error;
};

// Newton divergence; carries the last iterate and the residual history.
class SolverError : public Error {
public:
    SolverError(const std::string& msg, std::vector<double> last_iterate,
                std::vector<double> residual_history)
        : Error(msg),
          last_iterate(std::move(last_iterate)),
          residual_history(std::move(residual_history)) {}

    std::vector<double> last_iterate;
    std::vector<double> residual_history;
};

// Gummel non-convergence; carries the successive-change history.
class IterationError : public Error {
public:
    IterationError(const std::string& msg, std::vector<double> residual_history)
        : Error(msg), residual_history(std::move(residual_history)) {}

    std::vector<double> residual_history;
};

class SamplingError : public Error {
public:
    using Error::Error;
};

// Estimation failure identifying the offending (level, sample).
class EstimationError : public Error {
public:
    EstimationError(const std::string& msg, int level, long sample_index)
        : Error(msg), level(level), sample_index(sample_index) {}

    int level = -1;
    long sample_index = -1;
};

class StatisticsError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class MeasurementError : public Error {
public:
    using Error::Error;
};

// Requested tolerance below the discretization floor C1 * xi^alpha.
class InfeasibleError : public Error {
public:
    InfeasibleError(const std::string& msg, double error_floor)
        : Error(msg), error_floor(error_floor) {}

    double error_floor = 0.0;
};

// Interior-point iteration exhaustion; carries the final KKT residuals.
class NonConvergenceError : public Error {
public:
    NonConvergenceError(const std::string& msg, double stationarity,
                        double complementarity, double primal)
        : Error(msg), stationarity(stationarity),
          complementarity(complementarity), primal(primal) {}

    double stationarity = 0.0;
    double complementarity = 0.0;
    double primal = 0.0;
};

}  // namespace mlmcfem
