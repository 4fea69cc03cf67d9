#pragma once

#include <map>
#include <string>
#include <vector>

#include "mlmcfem/geometry.hpp"
#include "mlmcfem/physics.hpp"

namespace mlmcfem {

enum class QoiKind : int { MeanPotential = 0, ContactFlux = 1 };

struct QoiSpec {
    QoiKind kind = QoiKind::MeanPotential;
    std::string contact = "drain";  // only used for ContactFlux
};

// Stochastic-model knobs: how discrete dopants perturb the fields.
struct DopantModel {
    double effective_depth = 60.0;  // nm, converts cm^-3 to a 2D count
    double influence_radius = 1.0;  // nm, elements this close carry A_dop
    int charge_sign = -1;           // -1 acceptors (boron), +1 donors
};

struct SolverOptions {
    double newton_tol = 1.0e-10;
    int newton_max_iter = 50;
    int newton_max_halvings = 10;
    double gummel_tol = 1.0e-7;
    int gummel_max_iter = 200;
};

// Full device description parsed from one config file.
struct DeviceConfig {
    DeviceGeometry geometry;
    PhysicalParams physics;
    DopantModel dopants;
    SolverOptions solver;
    QoiSpec qoi;
    double h0 = 5.0;  // coarsest mesh size (nm)
};

DeviceConfig default_device_config();

// Key-value config file with [section] headers, '#' comments.
DeviceConfig load_device_config(const std::string& path);
void save_device_config(const DeviceConfig& config, const std::string& path);

// Parsed form, exposed for the CLI's inline overrides.
struct ConfigFile {
    std::map<std::string, std::map<std::string, std::string>> sections;

    bool has(const std::string& section, const std::string& key) const;
    double number(const std::string& section, const std::string& key,
                  double fallback) const;
    std::string text(const std::string& section, const std::string& key,
                     const std::string& fallback) const;
};

ConfigFile parse_config_text(const std::string& text);
ConfigFile parse_config_file(const std::string& path);

}  // namespace mlmcfem
