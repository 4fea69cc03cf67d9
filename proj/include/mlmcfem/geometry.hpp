#pragma once

#include <string>
#include <vector>

#include "mlmcfem/errors.hpp"

namespace mlmcfem {

enum class Subdomain : int { Si = 0, Ox = 1, Liq = 2 };

inline const char* subdomain_name(Subdomain s) {
    switch (s) {
        case Subdomain::Si: return "si";
        case Subdomain::Ox: return "ox";
        case Subdomain::Liq: return "liq";
    }
    return "?";
}

enum class BoundarySide : int { Bottom = 0, Top = 1, Left = 2, Right = 3 };

// A Dirichlet contact: a segment of the outer boundary with an applied
// voltage. Contacts on the left/right edges are clipped to [y_lo, y_hi];
// bottom/top contacts span the full width.
struct ContactSegment {
    std::string name;
    BoundarySide side = BoundarySide::Bottom;
    double y_lo = 0.0;   // only used for Left/Right
    double y_hi = 0.0;
    double voltage = 0.0;
    bool carrier_contact = false;  // touches the silicon subdomain (Ohmic)
};

// Vertical stack (bottom to top): oxide | silicon | liquid. All lengths in
// nanometers. The silicon/liquid interface is the manifold Gamma carrying
// the potential- and flux-jump conditions.
struct DeviceGeometry {
    double width = 60.0;
    double oxide_thickness = 8.0;
    double si_thickness = 50.0;
    double liq_thickness = 15.0;

    double permittivity_ox = 3.9;
    double permittivity_si = 11.7;
    double permittivity_liq = 78.0;

    std::vector<ContactSegment> contacts;

    double si_y_lo() const { return oxide_thickness; }
    double si_y_hi() const { return oxide_thickness + si_thickness; }
    double gamma_y() const { return si_y_hi(); }
    double height() const { return oxide_thickness + si_thickness + liq_thickness; }
    double si_area() const { return width * si_thickness; }

    double permittivity(Subdomain s) const {
        switch (s) {
            case Subdomain::Si: return permittivity_si;
            case Subdomain::Ox: return permittivity_ox;
            case Subdomain::Liq: return permittivity_liq;
        }
        return 1.0;
    }

    double min_feature() const {
        double m = width;
        if (oxide_thickness < m) m = oxide_thickness;
        if (si_thickness < m) m = si_thickness;
        if (liq_thickness < m) m = liq_thickness;
        return m;
    }

    void validate() const {
        if (!(width > 0.0) || !(oxide_thickness > 0.0) || !(si_thickness > 0.0) ||
            !(liq_thickness > 0.0))
            throw GeometryError("all geometry dimensions must be strictly positive");
        if (!(permittivity_ox > 0.0) || !(permittivity_si > 0.0) ||
            !(permittivity_liq > 0.0))
            throw GeometryError("subdomain permittivities must be strictly positive");
        if (contacts.empty())
            throw GeometryError("Dirichlet boundary must have nonzero length (no contacts)");
        bool carrier = false;
        for (const auto& c : contacts) carrier = carrier || c.carrier_contact;
        if (!carrier)
            throw GeometryError("no contact touches the silicon subdomain; "
                                "carrier equations would have an empty Dirichlet set");
    }
};

// Four-terminal layout used throughout: back gate below the oxide, electrode
// above the liquid, source/drain on the silicon flanks (the carrier contacts).
DeviceGeometry default_device_geometry(double back_gate_v = -1.0, double electrode_v = 0.0,
                                       double source_v = 0.0, double drain_v = 0.0);

}  // namespace mlmcfem
