#pragma once

#include "foam/implicit.hpp"
#include "foam/mesh.hpp"
#include "foam/optimize.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <string>

namespace foam {

nlohmann::json load_json(const std::filesystem::path& path);

template <int D>
void save_seeds(const std::filesystem::path& path, const SeedSet<D>& seeds);
template <int D>
SeedSet<D> load_seeds(const std::filesystem::path& path);
int seeds_dim(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const ResumeState& state);
ResumeState load_checkpoint(const std::filesystem::path& path);

// Legacy-ASCII VTK unstructured grid with one cell scalar and an optional
// point vector field.
template <int D>
void write_vtk(const std::filesystem::path& path, const FineMesh<D>& mesh,
               const std::vector<double>& cell_scalar, const std::string& scalar_name,
               const VecX* point_vectors = nullptr);

void write_trace_csv(const std::filesystem::path& path, const OptTrace& trace);
void write_trace_summary(const std::filesystem::path& path, const OptTrace& trace);

// Zero isocontour of per-node values by marching simplices: 3D tetrahedra
// emit triangles, 2D triangles emit polyline segments. Crossing vertices are
// deduplicated per mesh edge, so closed components are watertight.
template <int D>
void write_isosurface_obj(const std::filesystem::path& path, const FineMesh<D>& mesh,
                          const std::vector<double>& values);

template <int D>
struct ProblemConfig {
    std::shared_ptr<SignedDomain<D>> domain;
    std::array<int, D> coarse_res{};
    int refine = 4;
    int N_s = 10;
    double v = 0.3, w = 0.0;
    double p = 16.0, eps_factor = 1.5, alpha = 1e-6, fd_step = 1.0;
    SimMode mode = SimMode::Coarse;
    bool shell = false;
    double shell_thickness = 0.0;
    bool boundary_faces = false;
    std::vector<FixSpec<D>> fixes;
    std::vector<LoadSpec<D>> loads;
    std::uint64_t rng_seed = 0;
    int max_iter = 200;
    double ch_tol = 1e-3;
    std::string out = "out";
    int snapshot_every = 0;
    int depth = 2;
    int knn = 0; // 0 = module default
    double r_lo = -1, r_hi = -1; // <0 = derived from the mesh scale
    std::string init = "uniform";
    int max_inner = 3;
};

int config_dim(const nlohmann::json& j);
template <int D>
ProblemConfig<D> parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);

} // namespace foam
