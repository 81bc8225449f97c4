#include "foam/fem.hpp"
#include "foam/io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0, kConfigError = 2, kSolverError = 3, kNotConverged = 4;

int resolve_threads(int flag) {
    if (flag > 0) return flag;
    if (const char* env = std::getenv("FOAMOPT_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Removes tracked partial outputs unless the command committed them.
struct ArtifactGuard {
    std::vector<fs::path> paths;
    bool committed = false;

    void track(const fs::path& p) {
        for (const auto& q : paths)
            if (q == p) return;
        paths.push_back(p);
    }
    ~ArtifactGuard() {
        if (committed) return;
        std::error_code ec;
        for (const auto& p : paths) fs::remove(p, ec);
    }
};

template <int D>
struct Setup {
    foam::ProblemConfig<D> cfg;
    foam::CoarseMesh<D> cm;
    foam::FoamParams<D> params;
    foam::OptProblem<D> prob;
};

template <int D>
Setup<D> make_setup(const json& j, const fs::path& base_dir) {
    Setup<D> s;
    s.cfg = foam::parse_config<D>(j, base_dir);
    s.cm = foam::build_structured<D>(*s.cfg.domain, s.cfg.coarse_res, s.cfg.refine);
    const double la = s.cm.fine.l_a;

    s.params.p = s.cfg.p;
    s.params.eps = s.cfg.eps_factor * la;
    s.params.alpha = s.cfg.alpha;
    s.params.shell = s.cfg.shell;
    s.params.shell_thickness = s.cfg.shell_thickness;
    s.params.boundary_faces = s.cfg.boundary_faces;
    if (s.cfg.knn > 0) s.params.knn = s.cfg.knn;

    s.prob.w = s.cfg.w;
    s.prob.v = s.cfg.v;
    s.prob.max_iter = s.cfg.max_iter;
    s.prob.ch_tol = s.cfg.ch_tol;
    s.prob.r_lo = s.cfg.r_lo > 0 ? s.cfg.r_lo : 0.25 * la;
    s.prob.r_hi = s.cfg.r_hi > 0
                      ? s.cfg.r_hi
                      : std::max(8.0 * la, 0.1 * s.cfg.domain->bbox().extent().maxCoeff());
    s.prob.move_box = s.cfg.domain->bbox();
    s.prob.mode = s.cfg.mode;
    s.prob.depth = s.cfg.depth;
    s.prob.fd_factor = s.cfg.fd_step;
    s.prob.max_inner = s.cfg.max_inner;
    return s;
}

template <int D>
foam::SeedSet<D> obtain_seeds(const Setup<D>& s, const foam::Optimizer<D>& opt,
                              const std::string& seeds_file) {
    if (!seeds_file.empty()) return foam::load_seeds<D>(seeds_file);
    bool bn_failed = false;
    auto seeds = foam::init_seeds<D>(*s.cfg.domain, s.cm.fine, opt.params(), s.cfg.N_s, s.cfg.v,
                                     s.cfg.rng_seed, s.cfg.init, opt.tess_bounds(), opt.clip_tol(),
                                     opt.clip_step(), &bn_failed);
    if (bn_failed) std::cerr << "warning: blue-noise placement failed, fell back to uniform\n";
    return seeds;
}

template <int D>
int cmd_run(const json& j, const fs::path& config_path, const std::string& seeds_file,
            const std::string& out_override, bool verify, const std::string& resume_file) {
    Setup<D> s;
    std::optional<foam::Optimizer<D>> opt;
    foam::SeedSet<D> seeds;
    foam::ResumeState resume;
    bool have_resume = false;
    try {
        s = make_setup<D>(j, config_path.parent_path());
        if (!out_override.empty()) s.cfg.out = out_override;
        opt.emplace(s.prob, *s.cfg.domain, s.cm, s.cfg.fixes, s.cfg.loads, s.params);
        seeds = obtain_seeds<D>(s, *opt, seeds_file);
        if (!resume_file.empty()) {
            resume = foam::load_checkpoint(resume_file);
            have_resume = true;
        }
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    }

    const fs::path out_dir = s.cfg.out;
    ArtifactGuard guard;
    const fs::path checkpoint_path = out_dir / "checkpoint.json";
    try {
        fs::create_directories(out_dir);
        const fs::path echo = out_dir / "config.json";
        if (fs::weakly_canonical(echo) != fs::weakly_canonical(config_path))
            fs::copy_file(config_path, echo, fs::copy_options::overwrite_existing);

        if (verify) {
            const int n = (D + 1) * seeds.count();
            std::vector<int> vars(n);
            std::iota(vars.begin(), vars.end(), 0);
            if (n > 6) {
                std::mt19937_64 rng(s.cfg.rng_seed + 1);
                std::shuffle(vars.begin(), vars.end(), rng);
                vars.resize(6);
                std::sort(vars.begin(), vars.end());
            }
            auto [g, fd] = opt->gradient_probe(seeds, vars, 1e-4);
            const fs::path gc = out_dir / "gradcheck.csv";
            guard.track(gc);
            std::ofstream f(gc);
            f << std::setprecision(12) << "var,assembled,fd,rel_err\n";
            for (size_t i = 0; i < vars.size(); ++i) {
                const double denom = std::max(std::abs(fd[i]), 1e-12);
                f << vars[i] << ',' << g[i] << ',' << fd[i] << ','
                  << std::abs(g[i] - fd[i]) / denom << '\n';
            }
            const double cos =
                g.dot(fd) / std::max(g.norm() * fd.norm(), 1e-300);
            std::cout << "gradient check: cosine similarity " << cos << " over " << vars.size()
                      << " variables\n";
        }

        const fs::path csv_path = out_dir / "convergence.csv";
        guard.track(csv_path);
        std::ofstream csv(csv_path, have_resume ? std::ios::app : std::ios::trunc);
        csv << std::setprecision(12);
        if (!have_resume) csv << "iter,C,S,J,V_frac,ch,seconds\n";

        auto cb = [&](const foam::IterRecord& rec, const foam::SeedSet<D>&,
                      const foam::ResumeState& rs) {
            csv << rec.iter << ',' << rec.C << ',' << rec.S << ',' << rec.J << ',' << rec.Vfrac
                << ',' << rec.ch << ',' << rec.seconds << '\n';
            csv.flush();
            foam::save_checkpoint(checkpoint_path, rs);
            if (s.cfg.snapshot_every > 0 && rec.iter % s.cfg.snapshot_every == 0) {
                char name[32];
                std::snprintf(name, sizeof name, "density_%04d.vtk", rec.iter);
                const fs::path snap = out_dir / name;
                guard.track(snap);
                foam::write_vtk<D>(snap, s.cm.fine, opt->density().He, "density");
            }
        };

        const auto t0 = std::chrono::steady_clock::now();
        foam::RunResult<D> result = opt->run(seeds, cb, have_resume ? &resume : nullptr);

        const fs::path seeds_out = out_dir / "seeds.json";
        guard.track(seeds_out);
        foam::save_seeds<D>(seeds_out, result.seeds);

        const foam::VecX& q = opt->fine_displacement();
        const bool have_q =
            q.size() == static_cast<Eigen::Index>(D * s.cm.fine.nodes.size());
        const fs::path vtk_out = out_dir / "density.vtk";
        guard.track(vtk_out);
        foam::write_vtk<D>(vtk_out, s.cm.fine, opt->density().He, "density",
                           have_q ? &q : nullptr);

        const fs::path obj_out = out_dir / "surface.obj";
        guard.track(obj_out);
        foam::write_isosurface_obj<D>(obj_out, s.cm.fine, opt->density().vertex_phi);

        const fs::path sum_out = out_dir / "summary.txt";
        guard.track(sum_out);
        foam::write_trace_summary(sum_out, result.trace);

        guard.committed = true;
        const auto& last = result.trace.records.back();
        std::cout << "finished in " << std::setprecision(4) << seconds_since(t0) << " s, "
                  << last.iter << " iterations\n"
                  << std::setprecision(8) << "C = " << last.C << "  S = " << last.S
                  << "  J = " << last.J << "  V/V0 = " << last.Vfrac << "  ch = " << last.ch
                  << "\n"
                  << (result.converged ? "converged" : "not converged")
                  << (result.feasibility_clamped ? " (radii shrunk to restore feasibility)" : "")
                  << "\n";
        return result.converged ? kOk : kNotConverged;
    } catch (const std::exception& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        std::error_code ec;
        if (fs::exists(checkpoint_path, ec)) {
            json dump;
            dump["error"] = e.what();
            dump["checkpoint"] = checkpoint_path.string();
            std::ofstream f(out_dir / "failure.json");
            f << dump.dump(2) << "\n";
        }
        return kSolverError;
    }
}

template <int D>
int cmd_simulate(const json& j, const fs::path& config_path, const std::string& seeds_file) {
    Setup<D> s;
    foam::SeedSet<D> seeds;
    std::optional<foam::Optimizer<D>> fine_opt, coarse_opt;
    double t_coarse_build = 0;
    try {
        s = make_setup<D>(j, config_path.parent_path());
        seeds = foam::load_seeds<D>(seeds_file);
        auto pf = s.prob;
        pf.mode = foam::SimMode::Fine;
        pf.w = 0;
        auto pc = s.prob;
        pc.mode = foam::SimMode::Coarse;
        pc.w = 0;
        fine_opt.emplace(pf, *s.cfg.domain, s.cm, s.cfg.fixes, s.cfg.loads, s.params);
        const auto tb = std::chrono::steady_clock::now();
        coarse_opt.emplace(pc, *s.cfg.domain, s.cm, s.cfg.fixes, s.cfg.loads, s.params);
        t_coarse_build = seconds_since(tb);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    }
    try {
        const auto tf = std::chrono::steady_clock::now();
        const double C_fine = fine_opt->evaluate(seeds).C;
        const double t_fine = seconds_since(tf);
        const auto tc = std::chrono::steady_clock::now();
        const double C_coarse = coarse_opt->evaluate(seeds).C;
        const double t_coarse = seconds_since(tc);
        std::cout << std::setprecision(10) << "C_fine   = " << C_fine << "\n"
                  << "C_coarse = " << C_coarse << "\n"
                  << "r        = " << foam::error_metric(C_coarse, C_fine) << "\n"
                  << std::setprecision(4) << "fine solve      " << t_fine << " s\n"
                  << "coarse build    " << t_coarse_build << " s\n"
                  << "coarse solve    " << t_coarse << " s\n";
        return kOk;
    } catch (const std::exception& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kSolverError;
    }
}

template <int D>
int cmd_export(const std::string& seeds_file, const std::string& config_file, int res,
               const std::string& out_file) {
    try {
        foam::SeedSet<D> seeds = foam::load_seeds<D>(seeds_file);
        std::shared_ptr<foam::SignedDomain<D>> domain;
        foam::FoamParams<D> params;
        if (!config_file.empty()) {
            const json j = foam::load_json(config_file);
            auto cfg = foam::parse_config<D>(j, fs::path(config_file).parent_path());
            domain = cfg.domain;
            params.p = cfg.p;
            params.alpha = cfg.alpha;
            params.shell = cfg.shell;
            params.shell_thickness = cfg.shell_thickness;
            params.boundary_faces = cfg.boundary_faces;
            if (cfg.knn > 0) params.knn = cfg.knn;
        } else if (seeds.count() > 0) {
            foam::Box<D> b = foam::Box<D>::of(seeds.X);
            const double rmax = *std::max_element(seeds.r.begin(), seeds.r.end());
            domain = std::make_shared<foam::BoxDomain<D>>(
                b.expanded(std::max(2.0 * rmax, 0.05 * std::max(b.diagonal(), 1e-9))));
        }
        if (seeds.count() == 0) {
            std::ofstream f(out_file);
            f << "# empty isocontour\n";
            std::cout << "wrote " << out_file << " (empty foam)\n";
            return kOk;
        }

        const foam::Box<D> bb = domain->bbox();
        const double rmax = *std::max_element(seeds.r.begin(), seeds.r.end());
        const double rmin = *std::min_element(seeds.r.begin(), seeds.r.end());
        const double h_target = bb.extent().maxCoeff() / res;
        const foam::Box<D> sample_box = bb.expanded(rmax + 2 * h_target);
        std::array<int, D> grid{};
        for (int k = 0; k < D; ++k)
            grid[k] = std::max(1, static_cast<int>(std::lround(sample_box.extent()[k] / h_target)));
        foam::BoxDomain<D> sample_dom(sample_box);
        auto cm = foam::build_structured<D>(sample_dom, grid, 1);
        const double h = cm.fine.l_a;
        if (rmin < 2 * h)
            std::cerr << "warning: resolution places fewer than 2 cells across the smallest "
                         "radius; surface will be undersampled\n";
        params.eps = 1.5 * h;

        auto graph = foam::tessellate<D>(seeds, bb.expanded(2.0 * bb.diagonal()));
        foam::clip<D>(graph, *domain, 1e-3 * h, h);
        std::vector<double> values(cm.fine.nodes.size(), -1.0);
        const bool any_terms = !graph.beams.empty() || params.shell || params.boundary_faces;
        if (any_terms) {
            foam::FoamField<D> field(&graph, &seeds, domain.get(), params);
            foam::parallel_for(cm.fine.nodes.size(),
                               [&](std::size_t i) { values[i] = field.phi(cm.fine.nodes[i]); });
        }
        foam::write_isosurface_obj<D>(out_file, cm.fine, values);
        std::cout << "wrote " << out_file << "\n";
        return kOk;
    } catch (const std::exception& e) {
        std::cerr << "export failed: " << e.what() << "\n";
        return kConfigError;
    }
}

template <int D>
int cmd_check(const json& j, const fs::path& config_path, const std::string& seeds_file) {
    Setup<D> s;
    std::optional<foam::Optimizer<D>> opt;
    foam::SeedSet<D> seeds;
    try {
        s = make_setup<D>(j, config_path.parent_path());
        opt.emplace(s.prob, *s.cfg.domain, s.cm, s.cfg.fixes, s.cfg.loads, s.params);
        seeds = obtain_seeds<D>(s, *opt, seeds_file);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    }
    try {
        const int n = (D + 1) * seeds.count();
        std::vector<int> vars(n);
        std::iota(vars.begin(), vars.end(), 0);
        if (n > 16) {
            std::mt19937_64 rng(s.cfg.rng_seed + 1);
            std::shuffle(vars.begin(), vars.end(), rng);
            vars.resize(16);
            std::sort(vars.begin(), vars.end());
        }
        auto [g, fd] = opt->gradient_probe(seeds, vars, 1e-4);
        std::cout << std::setprecision(8) << std::left << std::setw(8) << "var" << std::setw(18)
                  << "assembled" << std::setw(18) << "fd" << "rel_err\n";
        for (size_t i = 0; i < vars.size(); ++i) {
            const double denom = std::max(std::abs(fd[i]), 1e-12);
            std::cout << std::setw(8) << vars[i] << std::setw(18) << g[i] << std::setw(18) << fd[i]
                      << std::abs(g[i] - fd[i]) / denom << "\n";
        }
        const double cos = g.dot(fd) / std::max(g.norm() * fd.norm(), 1e-300);
        std::cout << "cosine similarity: " << cos << "\n";
        if (cos >= 0.95) {
            std::cout << "gradient check passed\n";
            return kOk;
        }
        std::cerr << "gradient check FAILED (cosine < 0.95)\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kSolverError;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"topology optimization of conforming open-cell Voronoi foams"};
    app.require_subcommand(1);

    std::string config, seeds, out, resume;
    int threads = 0, res = 64;
    bool verify = false;

    auto* run = app.add_subcommand("run", "optimize a foam from a problem config");
    run->add_option("--config", config, "problem config (JSON)")->required();
    run->add_option("--seeds", seeds, "initial seeds file (JSON); default: sampled");
    run->add_option("--out", out, "output directory (overrides config)");
    run->add_option("--threads", threads, "worker threads (or FOAMOPT_THREADS)");
    run->add_option("--resume", resume, "checkpoint file to resume from");
    run->add_flag("--verify", verify, "finite-difference gradient check before the run");

    auto* sim = app.add_subcommand("simulate", "fine vs coarse compliance on a fixed foam");
    sim->add_option("--config", config, "problem config (JSON)")->required();
    sim->add_option("--seeds", seeds, "seeds file (JSON)")->required();
    sim->add_option("--threads", threads, "worker threads");

    auto* exp = app.add_subcommand("export", "extract the foam surface to OBJ");
    exp->add_option("--seeds", seeds, "seeds file (JSON)")->required();
    exp->add_option("--config", config, "optional config for domain/field parameters");
    exp->add_option("--res", res, "grid resolution along the longest axis")
        ->check(CLI::PositiveNumber);
    exp->add_option("--out", out, "output OBJ path");
    exp->add_option("--threads", threads, "worker threads");

    auto* chk = app.add_subcommand("check-gradients", "assembled vs finite-difference gradients");
    chk->add_option("--config", config, "problem config (JSON)")->required();
    chk->add_option("--seeds", seeds, "seeds file (JSON); default: sampled");
    chk->add_option("--threads", threads, "worker threads");

    CLI11_PARSE(app, argc, argv);
    foam::thread_count() = resolve_threads(threads);

    try {
        if (app.got_subcommand(exp)) {
            const std::string out_file = out.empty() ? "surface.obj" : out;
            const int dim = foam::seeds_dim(seeds);
            return dim == 2 ? cmd_export<2>(seeds, config, res, out_file)
                            : cmd_export<3>(seeds, config, res, out_file);
        }
        const json j = foam::load_json(config);
        const int dim = foam::config_dim(j);
        if (app.got_subcommand(run))
            return dim == 2 ? cmd_run<2>(j, config, seeds, out, verify, resume)
                            : cmd_run<3>(j, config, seeds, out, verify, resume);
        if (app.got_subcommand(sim))
            return dim == 2 ? cmd_simulate<2>(j, config, seeds)
                            : cmd_simulate<3>(j, config, seeds);
        return dim == 2 ? cmd_check<2>(j, config, seeds) : cmd_check<3>(j, config, seeds);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    }
}
