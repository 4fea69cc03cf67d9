#include "mlmcfem/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace mlmcfem {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

}  // namespace

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    auto s = sections.find(section);
    return s != sections.end() && s->second.count(key) > 0;
}

double ConfigFile::number(const std::string& section, const std::string& key,
                          double fallback) const {
    auto s = sections.find(section);
    if (s == sections.end()) return fallback;
    auto k = s->second.find(key);
    if (k == s->second.end()) return fallback;
    try {
        std::size_t pos = 0;
        const double v = std::stod(k->second, &pos);
        while (pos < k->second.size() &&
               std::isspace(static_cast<unsigned char>(k->second[pos])))
            ++pos;
        if (pos != k->second.size())
            throw ConfigError("trailing characters in numeric value");
        return v;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("config value [" + section + "] " + key + " = '" +
                          k->second + "' is not a number");
    }
}

std::string ConfigFile::text(const std::string& section, const std::string& key,
                             const std::string& fallback) const {
    auto s = sections.find(section);
    if (s == sections.end()) return fallback;
    auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
}

ConfigFile parse_config_text(const std::string& text) {
    ConfigFile cfg;
    std::istringstream in(text);
    std::string line, section = "global";
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("unterminated section header at line " +
                                  std::to_string(line_no));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key = value at line " + std::to_string(line_no));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("empty key at line " + std::to_string(line_no));
        cfg.sections[section][key] = value;
    }
    return cfg;
}

ConfigFile parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

DeviceConfig default_device_config() {
    DeviceConfig c;
    c.geometry = default_device_geometry();
    return c;
}

DeviceConfig load_device_config(const std::string& path) {
    const ConfigFile f = parse_config_file(path);
    DeviceConfig c = default_device_config();

    DeviceGeometry& g = c.geometry;
    g.width = f.number("geometry", "width_nm", g.width);
    g.oxide_thickness = f.number("geometry", "oxide_thickness_nm", g.oxide_thickness);
    g.si_thickness = f.number("geometry", "si_thickness_nm", g.si_thickness);
    g.liq_thickness = f.number("geometry", "liquid_thickness_nm", g.liq_thickness);
    g.permittivity_si = f.number("geometry", "permittivity_si", g.permittivity_si);
    g.permittivity_ox = f.number("geometry", "permittivity_ox", g.permittivity_ox);
    g.permittivity_liq = f.number("geometry", "permittivity_liq", g.permittivity_liq);

    // contact list is the standard four-terminal layout; voltages per name
    g.contacts = default_device_geometry().contacts;
    for (auto& contact : g.contacts) {
        contact.voltage = f.number("contacts", contact.name, contact.voltage);
        if (contact.side == BoundarySide::Left || contact.side == BoundarySide::Right) {
            contact.y_lo = g.si_y_lo();
            contact.y_hi = g.si_y_hi();
        }
    }
    g.validate();

    PhysicalParams& p = c.physics;
    p.thermal_voltage = f.number("physics", "thermal_voltage_V", p.thermal_voltage);
    p.intrinsic_density = f.number("physics", "intrinsic_density_cm3", p.intrinsic_density);
    p.tau_n = f.number("physics", "tau_n_s", p.tau_n);
    p.tau_p = f.number("physics", "tau_p_s", p.tau_p);
    p.mobility_n = f.number("physics", "mobility_n_cm2", p.mobility_n);
    p.mobility_p = f.number("physics", "mobility_p_cm2", p.mobility_p);
    p.ionic_concentration = f.number("physics", "ionic_concentration_cm3",
                                     p.ionic_concentration);
    p.fermi_level = f.number("physics", "fermi_level_V", p.fermi_level);
    p.doping = f.number("physics", "doping_cm3", p.doping);
    p.permittivity_dop = f.number("physics", "permittivity_dop", p.permittivity_dop);
    p.alpha_jump = f.number("interface", "alpha_jump_V", p.alpha_jump);
    p.gamma_jump = f.number("interface", "gamma_jump_V_per_nm", p.gamma_jump);
    p.validate();

    DopantModel& d = c.dopants;
    d.effective_depth = f.number("stochastic", "effective_depth_nm", d.effective_depth);
    d.influence_radius = f.number("stochastic", "influence_radius_nm", d.influence_radius);
    d.charge_sign = static_cast<int>(f.number("stochastic", "charge_sign", d.charge_sign));
    if (d.charge_sign != 1 && d.charge_sign != -1)
        throw ConfigError("charge_sign must be +1 or -1");
    if (!(d.effective_depth > 0.0) || !(d.influence_radius > 0.0))
        throw ConfigError("dopant model lengths must be positive");

    SolverOptions& s = c.solver;
    s.newton_tol = f.number("solver", "newton_tol", s.newton_tol);
    s.newton_max_iter = static_cast<int>(f.number("solver", "newton_max_iter",
                                                  s.newton_max_iter));
    s.gummel_tol = f.number("solver", "gummel_tol", s.gummel_tol);
    s.gummel_max_iter = static_cast<int>(f.number("solver", "gummel_max_iter",
                                                  s.gummel_max_iter));

    const std::string qoi = f.text("qoi", "kind", "mean-potential");
    if (qoi == "mean-potential") {
        c.qoi.kind = QoiKind::MeanPotential;
    } else if (qoi == "contact-flux") {
        c.qoi.kind = QoiKind::ContactFlux;
        c.qoi.contact = f.text("qoi", "contact", c.qoi.contact);
    } else {
        throw ConfigError("unknown qoi kind: " + qoi);
    }

    c.h0 = f.number("mesh", "h0_nm", c.h0);
    if (!(c.h0 > 0.0)) throw ConfigError("h0_nm must be positive");
    return c;
}

void save_device_config(const DeviceConfig& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config file: " + path);
    out << "[geometry]\n"
        << "width_nm = " << c.geometry.width << "\n"
        << "oxide_thickness_nm = " << c.geometry.oxide_thickness << "\n"
        << "si_thickness_nm = " << c.geometry.si_thickness << "\n"
        << "liquid_thickness_nm = " << c.geometry.liq_thickness << "\n"
        << "permittivity_si = " << c.geometry.permittivity_si << "\n"
        << "permittivity_ox = " << c.geometry.permittivity_ox << "\n"
        << "permittivity_liq = " << c.geometry.permittivity_liq << "\n\n";
    out << "[contacts]\n";
    for (const auto& contact : c.geometry.contacts)
        out << contact.name << " = " << contact.voltage << "\n";
    out << "\n[physics]\n"
        << "thermal_voltage_V = " << c.physics.thermal_voltage << "\n"
        << "intrinsic_density_cm3 = " << c.physics.intrinsic_density << "\n"
        << "tau_n_s = " << c.physics.tau_n << "\n"
        << "tau_p_s = " << c.physics.tau_p << "\n"
        << "mobility_n_cm2 = " << c.physics.mobility_n << "\n"
        << "mobility_p_cm2 = " << c.physics.mobility_p << "\n"
        << "ionic_concentration_cm3 = " << c.physics.ionic_concentration << "\n"
        << "fermi_level_V = " << c.physics.fermi_level << "\n"
        << "doping_cm3 = " << c.physics.doping << "\n"
        << "permittivity_dop = " << c.physics.permittivity_dop << "\n\n";
    out << "[interface]\n"
        << "alpha_jump_V = " << c.physics.alpha_jump << "\n"
        << "gamma_jump_V_per_nm = " << c.physics.gamma_jump << "\n\n";
    out << "[stochastic]\n"
        << "effective_depth_nm = " << c.dopants.effective_depth << "\n"
        << "influence_radius_nm = " << c.dopants.influence_radius << "\n"
        << "charge_sign = " << c.dopants.charge_sign << "\n\n";
    out << "[mesh]\n"
        << "h0_nm = " << c.h0 << "\n\n";
    out << "[qoi]\n"
        << "kind = " << (c.qoi.kind == QoiKind::MeanPotential ? "mean-potential"
                                                              : "contact-flux")
        << "\n";
    if (c.qoi.kind == QoiKind::ContactFlux) out << "contact = " << c.qoi.contact << "\n";
}

}  // namespace mlmcfem
