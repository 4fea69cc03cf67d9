#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <vector>

#include "mlmcfem/config.hpp"
#include "mlmcfem/fem.hpp"
#include "mlmcfem/mesh.hpp"
#include "mlmcfem/rng.hpp"

namespace mlmcfem {

// One elementary event omega: dopant positions and charges, reproducible
// from the seed alone.
struct DopantSample {
    std::uint64_t seed = 0;
    std::vector<Vec2> positions;   // strictly inside the silicon subdomain
    std::vector<int> charge_sign;  // +-1 per dopant
    int count = 0;
    bool empty_warning = false;    // concentration too low for the area
};

// count = round(|C_dop| * si_area * effective_depth), positions i.i.d.
// uniform over the silicon rectangle.
DopantSample draw_dopants(std::uint64_t seed, const DeviceGeometry& geometry,
                          double c_dop, const DopantModel& model);

// Permittivity takes the dopant value on elements whose centroid lies within
// the influence radius; each dopant deposits one elementary charge as a
// truncated Gaussian over nearby nodes (barycentric fallback on meshes
// coarser than the bump). The lumped-mass integral of the deposited charge
// is exactly one charge per dopant on every level.
SampleFields realize_fields(const DopantSample& sample, const TriMesh& mesh,
                            const PhysicalParams& params, const DopantModel& model);

struct CoupledSample {
    DopantSample sample;
    int fine_level = 0;
    int coarse_level = 0;
};

struct CoupledQoi {
    double fine = 0.0;
    double coarse = 0.0;
};

void dump_sample_csv(const DopantSample& sample, std::ostream& out);

// Deterministic map (mesh level, omega seed) -> QoI for the configured
// device. Meshes are immutable after construction; concurrent evaluation on
// distinct samples is safe.
class DeviceSampler {
public:
    // one mesh per target size (independent re-meshing per level)
    static DeviceSampler from_targets(const DeviceConfig& config,
                                      const std::vector<double>& level_h);
    // chained refinement h0, h0/r1, h0/(r1 r2), ...
    static DeviceSampler from_plan(const DeviceConfig& config, double h0,
                                   const std::vector<double>& per_level_ratios);

    int n_levels() const { return static_cast<int>(meshes_.size()); }
    const TriMesh& mesh(int level) const;
    const DeviceConfig& config() const { return config_; }

    double operator()(int level, std::uint64_t omega_seed) const;
    double evaluate_with_stats(int level, std::uint64_t omega_seed,
                               GummelStats* stats) const;

    // same omega solved on both levels of the pair
    CoupledQoi coupled(const CoupledSample& coupled) const;

    // assembly+solve seconds accumulated per mesh level (the four modeled
    // work components, excluding sampling overhead)
    void reset_phase_seconds() const;
    std::vector<double> phase_seconds() const;

private:
    explicit DeviceSampler(const DeviceConfig& config) : config_(config) {}

    struct PhaseAccumulator {
        std::mutex mutex;
        std::vector<double> seconds;
    };

    DeviceConfig config_;
    BoundaryData bc_;
    std::vector<std::shared_ptr<const TriMesh>> meshes_;
    std::shared_ptr<PhaseAccumulator> phases_ = std::make_shared<PhaseAccumulator>();
};

}  // namespace mlmcfem
