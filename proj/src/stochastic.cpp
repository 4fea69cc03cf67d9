#include "mlmcfem/stochastic.hpp"

#include <cmath>
#include <ostream>

namespace mlmcfem {

DopantSample draw_dopants(std::uint64_t seed, const DeviceGeometry& geometry,
                          double c_dop, const DopantModel& model) {
    DopantSample s;
    s.seed = seed;
    const double volume_nm3 = geometry.si_area() * model.effective_depth;
    const double expected = std::abs(c_dop) * units::cm3_to_nm3 * volume_nm3;
    s.count = static_cast<int>(std::llround(expected));
    if (s.count == 0) {
        s.empty_warning = true;
        return s;
    }
    CounterRng rng(seed);
    s.positions.reserve(s.count);
    s.charge_sign.assign(s.count, model.charge_sign);
    for (int i = 0; i < s.count; ++i) {
        const double x = rng.next_open(0.0, geometry.width);
        const double y = rng.next_open(geometry.si_y_lo(), geometry.si_y_hi());
        s.positions.push_back({x, y});
    }
    return s;
}

SampleFields realize_fields(const DopantSample& sample, const TriMesh& mesh,
                            const PhysicalParams& params, const DopantModel& model) {
    const DeviceGeometry& g = mesh.geometry;
    for (const Vec2& p : sample.positions)
        if (p.x < 0.0 || p.x > g.width || p.y < g.si_y_lo() || p.y > g.si_y_hi())
            throw SamplingError("dopant position outside the meshed silicon subdomain");

    SampleFields f = nominal_fields(mesh);

    // permittivity disks
    const double r2 = model.influence_radius * model.influence_radius;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        if (mesh.subdomain[t] != Subdomain::Si) continue;
        const Vec2 c = mesh.centroid(t);
        for (const Vec2& p : sample.positions) {
            const double dx = c.x - p.x, dy = c.y - p.y;
            if (dx * dx + dy * dy <= r2) {
                f.permittivity[t] = params.permittivity_dop;
                break;
            }
        }
    }

    if (sample.positions.empty()) return f;

    std::vector<double> mass_full(mesh.n_vertices(), 0.0);
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const double third = mesh.triangle_area(t) / 3.0;
        for (int v : mesh.triangles[t]) mass_full[v] += third;
    }

    // one elementary charge per dopant, in cm^-3 through the effective depth
    const double density_scale = 1.0 / (model.effective_depth * units::cm3_to_nm3);
    const double sigma = model.influence_radius / 2.0;
    const double cutoff = 3.0 * sigma;

    for (std::size_t d = 0; d < sample.positions.size(); ++d) {
        const Vec2& p = sample.positions[d];
        const double sign = static_cast<double>(sample.charge_sign[d]);

        std::vector<int> nodes;
        std::vector<double> weights;
        double total = 0.0;
        for (int n = 0; n < mesh.n_vertices(); ++n) {
            const double dx = mesh.vertices[n].x - p.x;
            const double dy = mesh.vertices[n].y - p.y;
            const double dist2 = dx * dx + dy * dy;
            if (dist2 > cutoff * cutoff) continue;
            const double w = std::exp(-dist2 / (2.0 * sigma * sigma));
            nodes.push_back(n);
            weights.push_back(w);
            total += w;
        }

        if (nodes.empty()) {
            // mesh coarser than the bump: deposit on the containing triangle
            for (int t = 0; t < mesh.n_triangles(); ++t) {
                if (mesh.subdomain[t] != Subdomain::Si) continue;
                const auto& tri = mesh.triangles[t];
                const Vec2& a = mesh.vertices[tri[0]];
                const Vec2& b = mesh.vertices[tri[1]];
                const Vec2& c = mesh.vertices[tri[2]];
                const double det =
                    (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
                const double l1 =
                    ((b.x - p.x) * (c.y - p.y) - (c.x - p.x) * (b.y - p.y)) / det;
                const double l2 =
                    ((c.x - p.x) * (a.y - p.y) - (a.x - p.x) * (c.y - p.y)) / det;
                const double l3 = 1.0 - l1 - l2;
                const double eps = -1e-12;
                if (l1 < eps || l2 < eps || l3 < eps) continue;
                nodes = {tri[0], tri[1], tri[2]};
                weights = {l1, l2, l3};
                total = 1.0;
                break;
            }
            if (nodes.empty())
                throw SamplingError("dopant position not contained in any silicon element");
        }

        for (std::size_t k = 0; k < nodes.size(); ++k) {
            const int n = nodes[k];
            f.charge_density[n] +=
                sign * (weights[k] / total) / mass_full[n] * density_scale;
        }
    }
    return f;
}

void dump_sample_csv(const DopantSample& sample, std::ostream& out) {
    out << "seed,index,x,y,sign\n";
    for (std::size_t i = 0; i < sample.positions.size(); ++i)
        out << sample.seed << "," << i << "," << sample.positions[i].x << ","
            << sample.positions[i].y << "," << sample.charge_sign[i] << "\n";
}

DeviceSampler DeviceSampler::from_targets(const DeviceConfig& config,
                                          const std::vector<double>& level_h) {
    DeviceSampler s(config);
    s.bc_ = make_boundary_data(config.geometry, config.physics);
    for (double h : level_h)
        s.meshes_.push_back(
            std::make_shared<const TriMesh>(build_device_mesh(config.geometry, h)));
    return s;
}

DeviceSampler DeviceSampler::from_plan(const DeviceConfig& config, double h0,
                                       const std::vector<double>& per_level_ratios) {
    DeviceSampler s(config);
    s.bc_ = make_boundary_data(config.geometry, config.physics);
    auto base = std::make_shared<const TriMesh>(build_device_mesh(config.geometry, h0));
    s.meshes_.push_back(base);
    for (double r : per_level_ratios) {
        auto next = std::make_shared<const TriMesh>(refine_to(*s.meshes_.back(), r));
        s.meshes_.push_back(next);
    }
    return s;
}

const TriMesh& DeviceSampler::mesh(int level) const {
    if (level < 0 || level >= n_levels())
        throw SamplingError("mesh level " + std::to_string(level) + " not available");
    return *meshes_[level];
}

double DeviceSampler::operator()(int level, std::uint64_t omega_seed) const {
    return evaluate_with_stats(level, omega_seed, nullptr);
}

void DeviceSampler::reset_phase_seconds() const {
    std::lock_guard<std::mutex> lock(phases_->mutex);
    phases_->seconds.assign(meshes_.size(), 0.0);
}

std::vector<double> DeviceSampler::phase_seconds() const {
    std::lock_guard<std::mutex> lock(phases_->mutex);
    if (phases_->seconds.empty()) return std::vector<double>(meshes_.size(), 0.0);
    return phases_->seconds;
}

double DeviceSampler::evaluate_with_stats(int level, std::uint64_t omega_seed,
                                          GummelStats* stats) const {
    const TriMesh& m = mesh(level);
    const DopantSample sample =
        draw_dopants(omega_seed, config_.geometry, config_.physics.doping, config_.dopants);
    const SampleFields fields = realize_fields(sample, m, config_.physics, config_.dopants);
    try {
        const GummelResult res =
            gummel_iterate(m, fields, config_.physics, bc_, config_.solver);
        if (stats) *stats = res.stats;
        {
            const CostBreakdown& c = res.stats.cost;
            std::lock_guard<std::mutex> lock(phases_->mutex);
            if (phases_->seconds.size() != meshes_.size())
                phases_->seconds.assign(meshes_.size(), 0.0);
            phases_->seconds[level] += c.poisson_assembly_s + c.poisson_solve_s +
                                       c.dd_assembly_s + c.dd_solve_s;
        }
        return evaluate_qoi(res.fields, m, config_.physics, config_.dopants, config_.qoi);
    } catch (const SolverError& e) {
        throw SamplingError("level " + std::to_string(level) + ": " + e.what());
    } catch (const IterationError& e) {
        throw SamplingError("level " + std::to_string(level) + ": " + e.what());
    }
}

CoupledQoi DeviceSampler::coupled(const CoupledSample& c) const {
    CoupledQoi q;
    q.fine = (*this)(c.fine_level, c.sample.seed);
    q.coarse = (*this)(c.coarse_level, c.sample.seed);
    return q;
}

}  // namespace mlmcfem
