#pragma once

#include <algorithm>
#include <cmath>

#include "mlmcfem/errors.hpp"

namespace mlmcfem {

// Unit conventions used throughout the solvers:
//   lengths nm, potentials V, densities cm^-3, mobilities cm^2/(V s),
//   times s. Conversion constants below fold the SI factors into the
//   nm/V equation scaling.
namespace units {
inline constexpr double elementary_charge_C = 1.602176634e-19;
inline constexpr double vacuum_permittivity_F_per_m = 8.8541878128e-12;
inline constexpr double cm3_to_nm3 = 1.0e-21;   // (cm^-3) -> (nm^-3)
inline constexpr double cm2_to_nm2 = 1.0e14;    // (cm^2)  -> (nm^2)

// q/eps0 with density in cm^-3 and the Laplacian in nm^-2; multiplies a
// density to give the Poisson right-hand side in V/nm^2.
inline constexpr double poisson_rhs_scale =
    elementary_charge_C / vacuum_permittivity_F_per_m * 1.0e-12;
}  // namespace units

struct PhysicalParams {
    double thermal_voltage = 0.025852;   // U_T = k_B T / q at 300 K (V)
    double intrinsic_density = 1.0e10;   // n_i (cm^-3)
    double tau_n = 1.0e-6;               // SRH electron lifetime (s)
    double tau_p = 1.0e-6;               // SRH hole lifetime (s)
    double mobility_n = 1350.0;          // mu_n (cm^2 / (V s))
    double mobility_p = 480.0;           // mu_p (cm^2 / (V s))
    double ionic_concentration = 1.0e16; // eta (cm^-3)
    double fermi_level = 0.0;            // Phi (V)
    double doping = -2.0e17;             // nominal net C_dop (cm^-3, <0 acceptors)
    double permittivity_dop = 4.2;       // A_dop near a dopant

    // interface densities on Gamma, reduced to configured constants
    double alpha_jump = 0.0;             // potential jump (V)
    double gamma_jump = 0.0;             // displacement jump (V / nm)

    double beta() const { return 1.0 / thermal_voltage; }

    void validate() const {
        if (!(thermal_voltage > 0.0)) throw ConfigError("thermal voltage must be positive");
        if (!(intrinsic_density > 0.0)) throw ConfigError("intrinsic density must be positive");
        if (!(tau_n > 0.0) || !(tau_p > 0.0)) throw ConfigError("lifetimes must be positive");
        if (!(mobility_n > 0.0) || !(mobility_p > 0.0))
            throw ConfigError("mobilities must be positive");
        if (ionic_concentration < 0.0) throw ConfigError("ionic concentration must be >= 0");
        if (!(permittivity_dop > 0.0)) throw ConfigError("dopant permittivity must be positive");
    }
};

struct OhmicBoundary {
    double potential = 0.0;  // V1 = U + U_T ln(n_D / n_i)
    double u = 1.0;          // Slotboom electron boundary value
    double v = 1.0;          // Slotboom hole boundary value
    double n = 0.0;          // n_D (cm^-3)
    double p = 0.0;          // p_D (cm^-3)
};

// Charge-neutral, thermal-equilibrium contact values: n_D p_D = n_i^2 and
// C_dop + p_D - n_D = 0, aligned with the applied voltage U. The quadratic
// is solved cancellation-free: the majority carrier from the stable root,
// the minority carrier from the product identity.
inline OhmicBoundary ohmic_boundary_values(double c_dop, double applied_voltage,
                                           const PhysicalParams& params) {
    const double ni = params.intrinsic_density;
    const double ut = params.thermal_voltage;
    const double root = std::sqrt(c_dop * c_dop + 4.0 * ni * ni);
    OhmicBoundary b;
    if (c_dop >= 0.0) {
        b.n = 0.5 * (c_dop + root);
        b.p = ni * ni / b.n;
    } else {
        b.p = 0.5 * (-c_dop + root);
        b.n = ni * ni / b.p;
    }
    b.potential = applied_voltage + ut * std::log(b.n / ni);
    b.u = std::exp(-b.potential / ut) * b.n / ni;
    b.v = std::exp(b.potential / ut) * b.p / ni;
    return b;
}

// L-infinity bound constant of the carrier estimates, from the configured
// boundary data: K = max over carrier contacts of (u_D, v_D, 1/u_D, 1/v_D).
inline double carrier_bound_from(double u_d, double v_d) {
    return std::max({u_d, v_d, 1.0 / u_d, 1.0 / v_d});
}

}  // namespace mlmcfem
