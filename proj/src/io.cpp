#include "foam/io.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace foam {

using nlohmann::json;

nlohmann::json load_json(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open " + path.string());
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw Error("invalid JSON in " + path.string() + ": " + e.what());
    }
}

static void dump_json(const std::filesystem::path& path, const json& j) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path.string());
    f << j.dump(2) << "\n";
    if (!f) throw Error("write failed: " + path.string());
}

template <int D>
void save_seeds(const std::filesystem::path& path, const SeedSet<D>& seeds) {
    json j;
    j["dim"] = D;
    json xs = json::array();
    for (const auto& x : seeds.X) {
        json row = json::array();
        for (int k = 0; k < D; ++k) row.push_back(x[k]);
        xs.push_back(std::move(row));
    }
    j["X"] = std::move(xs);
    j["r"] = seeds.r;
    dump_json(path, j);
}

int seeds_dim(const std::filesystem::path& path) {
    json j = load_json(path);
    if (!j.contains("dim") || !j["dim"].is_number_integer())
        throw Error(path.string() + ": missing integer field 'dim'");
    int d = j["dim"].get<int>();
    if (d != 2 && d != 3) throw Error(path.string() + ": dim must be 2 or 3");
    return d;
}

template <int D>
SeedSet<D> load_seeds(const std::filesystem::path& path) {
    json j = load_json(path);
    if (!j.contains("dim") || j["dim"].get<int>() != D)
        throw Error(path.string() + ": dimension mismatch");
    if (!j.contains("X") || !j.contains("r")) throw Error(path.string() + ": missing X or r");
    SeedSet<D> s;
    for (const auto& row : j["X"]) {
        if (!row.is_array() || row.size() != D)
            throw Error(path.string() + ": seed coordinate arity mismatch");
        Vec<D> x;
        for (int k = 0; k < D; ++k) x[k] = row[k].get<double>();
        s.X.push_back(x);
    }
    s.r = j["r"].get<std::vector<double>>();
    if (s.r.size() != s.X.size()) throw Error(path.string() + ": |r| != |X|");
    for (double r : s.r)
        if (!(r >= 0) || !std::isfinite(r)) throw Error(path.string() + ": invalid radius");
    return s;
}

void save_checkpoint(const std::filesystem::path& path, const ResumeState& state) {
    json j;
    j["iter"] = state.iter;
    j["C0"] = state.C0;
    j["S0"] = state.S0;
    j["prev_ch"] = state.prev_ch;
    j["J_hist"] = state.J_hist;
    j["z"] = state.z;
    j["gcmma"] = state.gcmma;
    dump_json(path, j);
}

ResumeState load_checkpoint(const std::filesystem::path& path) {
    json j = load_json(path);
    for (const char* key : {"iter", "C0", "S0", "prev_ch", "J_hist", "z", "gcmma"})
        if (!j.contains(key)) throw Error(path.string() + ": missing checkpoint field " + key);
    ResumeState s;
    s.iter = j["iter"].get<int>();
    s.C0 = j["C0"].get<double>();
    s.S0 = j["S0"].get<double>();
    s.prev_ch = j["prev_ch"].get<double>();
    s.J_hist = j["J_hist"].get<std::vector<double>>();
    s.z = j["z"].get<std::vector<double>>();
    s.gcmma = j["gcmma"].get<std::string>();
    return s;
}

template <int D>
void write_vtk(const std::filesystem::path& path, const FineMesh<D>& mesh,
               const std::vector<double>& cell_scalar, const std::string& scalar_name,
               const VecX* point_vectors) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path.string());
    f << std::setprecision(9);
    f << "# vtk DataFile Version 3.0\nfoamopt field\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    const std::size_t nn = mesh.nodes.size(), ne = mesh.elements.size();
    f << "POINTS " << nn << " double\n";
    for (const auto& x : mesh.nodes) {
        for (int k = 0; k < 3; ++k) f << (k < D ? x[k] : 0.0) << (k == 2 ? '\n' : ' ');
    }
    f << "CELLS " << ne << " " << ne * (D + 2) << "\n";
    for (const auto& el : mesh.elements) {
        f << D + 1;
        for (int v : el) f << ' ' << v;
        f << '\n';
    }
    f << "CELL_TYPES " << ne << "\n";
    for (std::size_t e = 0; e < ne; ++e) f << (D == 2 ? 5 : 10) << '\n';
    if (cell_scalar.size() == ne) {
        f << "CELL_DATA " << ne << "\nSCALARS " << scalar_name << " double 1\nLOOKUP_TABLE default\n";
        for (double v : cell_scalar) f << v << '\n';
    }
    if (point_vectors && point_vectors->size() == static_cast<Eigen::Index>(D * nn)) {
        f << "POINT_DATA " << nn << "\nVECTORS displacement double\n";
        for (std::size_t i = 0; i < nn; ++i) {
            for (int k = 0; k < 3; ++k)
                f << (k < D ? (*point_vectors)[D * i + k] : 0.0) << (k == 2 ? '\n' : ' ');
        }
    }
    if (!f) throw Error("write failed: " + path.string());
}

void write_trace_csv(const std::filesystem::path& path, const OptTrace& trace) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path.string());
    f << std::setprecision(12);
    f << "iter,C,S,J,V_frac,ch,seconds\n";
    for (const auto& r : trace.records)
        f << r.iter << ',' << r.C << ',' << r.S << ',' << r.J << ',' << r.Vfrac << ',' << r.ch
          << ',' << r.seconds << '\n';
    if (!f) throw Error("write failed: " + path.string());
}

static std::string sparkline(const std::vector<double>& vals) {
    static const char ramp[] = " .:-=+*#%@";
    if (vals.empty()) return "";
    const std::size_t width = std::min<std::size_t>(vals.size(), 60);
    double lo = vals[0], hi = vals[0];
    for (double v : vals) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::string s;
    for (std::size_t c = 0; c < width; ++c) {
        const double v = vals[c * vals.size() / width];
        const double t = hi > lo ? (v - lo) / (hi - lo) : 0.0;
        s += ramp[static_cast<int>(t * 9.0 + 0.5)];
    }
    return s;
}

void write_trace_summary(const std::filesystem::path& path, const OptTrace& trace) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path.string());
    const auto& recs = trace.records;
    f << "iterations: " << (recs.empty() ? 0 : recs.back().iter) << "\n";
    if (recs.empty()) return;
    auto col = [&](const char* name, auto get) {
        std::vector<double> vals;
        for (const auto& r : recs) vals.push_back(get(r));
        f << std::left << std::setw(7) << name << std::setprecision(6) << "first " << std::setw(13)
          << vals.front() << " last " << std::setw(13) << vals.back() << " |" << sparkline(vals)
          << "|\n";
    };
    col("C", [](const IterRecord& r) { return r.C; });
    col("S", [](const IterRecord& r) { return r.S; });
    col("J", [](const IterRecord& r) { return r.J; });
    col("V_frac", [](const IterRecord& r) { return r.Vfrac; });
    col("ch", [](const IterRecord& r) { return r.ch; });
    if (!f) throw Error("write failed: " + path.string());
}

namespace {

struct CrossingBank {
    const std::vector<double>& vals;
    std::map<std::pair<int, int>, int> edge_vertex;
    std::vector<std::array<double, 3>> points;

    explicit CrossingBank(const std::vector<double>& v) : vals(v) {}

    template <int D>
    int crossing(const FineMesh<D>& mesh, int a, int b) {
        const std::pair<int, int> key = std::minmax(a, b);
        auto it = edge_vertex.find(key);
        if (it != edge_vertex.end()) return it->second;
        const double va = vals[a], vb = vals[b];
        double t = va / (va - vb);
        t = std::clamp(t, 0.0, 1.0);
        Vec<D> p = mesh.nodes[a] + t * (mesh.nodes[b] - mesh.nodes[a]);
        std::array<double, 3> q{0, 0, 0};
        for (int k = 0; k < D; ++k) q[k] = p[k];
        const int id = static_cast<int>(points.size());
        points.push_back(q);
        edge_vertex.emplace(key, id);
        return id;
    }
};

} // namespace

template <int D>
void write_isosurface_obj(const std::filesystem::path& path, const FineMesh<D>& mesh,
                          const std::vector<double>& values) {
    if (values.size() != mesh.nodes.size())
        throw Error("isosurface: values/nodes size mismatch");
    CrossingBank bank(values);
    std::vector<std::array<int, 3>> tris;
    std::vector<std::array<int, 2>> segs;

    auto pos = [&](int v) { return values[v] > 0.0; };

    for (const auto& el : mesh.elements) {
        if constexpr (D == 2) {
            std::vector<int> in, out;
            for (int v : el) (pos(v) ? in : out).push_back(v);
            if (in.empty() || out.empty()) continue;
            const auto& one = in.size() == 1 ? in : out;
            const auto& two = in.size() == 1 ? out : in;
            segs.push_back({bank.crossing(mesh, one[0], two[0]), bank.crossing(mesh, one[0], two[1])});
        } else {
            std::vector<int> in, out;
            for (int v : el) (pos(v) ? in : out).push_back(v);
            if (in.empty() || out.empty()) continue;
            if (in.size() == 1 || out.size() == 1) {
                const int apex = in.size() == 1 ? in[0] : out[0];
                const auto& base = in.size() == 1 ? out : in;
                int c0 = bank.crossing(mesh, apex, base[0]);
                int c1 = bank.crossing(mesh, apex, base[1]);
                int c2 = bank.crossing(mesh, apex, base[2]);
                tris.push_back({c0, c1, c2});
            } else {
                int c00 = bank.crossing(mesh, in[0], out[0]);
                int c01 = bank.crossing(mesh, in[0], out[1]);
                int c11 = bank.crossing(mesh, in[1], out[1]);
                int c10 = bank.crossing(mesh, in[1], out[0]);
                tris.push_back({c00, c01, c11});
                tris.push_back({c00, c11, c10});
            }
        }
    }

    if constexpr (D == 3) {
        // Orient each triangle with its normal pointing out of the solid
        // (away from the positive side), using the mesh element's inside
        // vertex recorded at emission time; cheap re-pass instead.
        std::size_t ti = 0;
        for (const auto& el : mesh.elements) {
            std::vector<int> in, out;
            for (int v : el) (pos(v) ? in : out).push_back(v);
            if (in.empty() || out.empty()) continue;
            const Vec<3> inside = mesh.nodes[in[0]];
            const std::size_t count = (in.size() == 1 || out.size() == 1) ? 1 : 2;
            for (std::size_t c = 0; c < count; ++c, ++ti) {
                auto& t = tris[ti];
                Eigen::Vector3d a(bank.points[t[0]].data()), b(bank.points[t[1]].data()),
                    cq(bank.points[t[2]].data());
                const Eigen::Vector3d n = (b - a).cross(cq - a);
                const Eigen::Vector3d centroid = (a + b + cq) / 3.0;
                if (n.dot(centroid - inside) < 0) std::swap(t[1], t[2]);
            }
        }
    }

    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path.string());
    f << std::setprecision(9);
    if (bank.points.empty()) f << "# empty isocontour\n";
    for (const auto& p : bank.points) f << "v " << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
    for (const auto& t : tris) f << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    for (const auto& s : segs) f << "l " << s[0] + 1 << ' ' << s[1] + 1 << '\n';
    if (!f) throw Error("write failed: " + path.string());
}

int config_dim(const json& j) {
    if (!j.contains("dim") || !j["dim"].is_number_integer())
        throw Error("config: missing integer field 'dim'");
    const int d = j["dim"].get<int>();
    if (d != 2 && d != 3) throw Error("config: dim must be 2 or 3");
    return d;
}

namespace {

template <int D>
Vec<D> vec_from(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != D) throw Error("config: " + what + " must have " + std::to_string(D) + " entries");
    Vec<D> v;
    for (int k = 0; k < D; ++k) v[k] = j[k].get<double>();
    return v;
}

template <int D>
Box<D> box_from(const json& j, const std::string& what) {
    if (!j.contains("min") || !j.contains("max")) throw Error("config: " + what + " needs min/max");
    Box<D> b;
    b.lo = vec_from<D>(j["min"], what + ".min");
    b.hi = vec_from<D>(j["max"], what + ".max");
    for (int k = 0; k < D; ++k)
        if (!(b.lo[k] < b.hi[k])) throw Error("config: " + what + " is degenerate");
    return b;
}

template <int D>
std::shared_ptr<SignedDomain<D>> domain_from(const json& j, const std::filesystem::path& base_dir) {
    if (!j.contains("type")) throw Error("config: domain needs a type");
    const std::string type = j["type"].get<std::string>();
    if (type == "box") return std::make_shared<BoxDomain<D>>(box_from<D>(j, "domain"));
    if (type == "ball" || type == "sphere") {
        return std::make_shared<BallDomain<D>>(vec_from<D>(j.at("center"), "domain.center"),
                                               j.at("radius").get<double>());
    }
    if (type == "cylinder") {
        if constexpr (D == 3) {
            const int axis = j.value("axis", 2);
            if (axis < 0 || axis > 2) throw Error("config: cylinder axis out of range");
            return std::make_shared<CylinderDomain>(vec_from<3>(j.at("base"), "domain.base"),
                                                    j.at("radius").get<double>(),
                                                    j.at("height").get<double>(), axis);
        } else {
            throw Error("config: cylinder domain requires dim 3");
        }
    }
    if (type == "union") {
        auto u = std::make_shared<UnionDomain<D>>();
        if (!j.contains("parts") || j["parts"].empty()) throw Error("config: empty union domain");
        for (const auto& part : j["parts"]) u->parts.push_back(domain_from<D>(part, base_dir));
        return u;
    }
    if (type == "grid") {
        json g = j.contains("file") ? load_json(base_dir / j["file"].get<std::string>()) : j;
        auto dom = std::make_shared<GridDomain<D>>();
        dom->box = box_from<D>(g.at("box"), "domain.box");
        auto dims = g.at("dims").get<std::vector<int>>();
        if (dims.size() != D) throw Error("config: grid dims arity mismatch");
        std::size_t total = 1;
        for (int k = 0; k < D; ++k) {
            if (dims[k] < 2) throw Error("config: grid dims must be >= 2");
            dom->dims[k] = dims[k];
            total *= dims[k];
        }
        dom->values = g.at("values").get<std::vector<double>>();
        if (dom->values.size() != total) throw Error("config: grid values size mismatch");
        return dom;
    }
    throw Error("config: unknown domain type '" + type + "'");
}

void check_range(bool ok, const std::string& what) {
    if (!ok) throw Error("config: " + what);
}

} // namespace

template <int D>
ProblemConfig<D> parse_config(const json& j, const std::filesystem::path& base_dir) {
    if (config_dim(j) != D) throw Error("config: dimension mismatch");
    ProblemConfig<D> c;
    c.domain = domain_from<D>(j.at("domain"), base_dir);

    auto res = j.at("coarse_res").get<std::vector<int>>();
    if (res.size() != D) throw Error("config: coarse_res arity mismatch");
    for (int k = 0; k < D; ++k) {
        check_range(res[k] >= 1, "coarse_res entries must be >= 1");
        c.coarse_res[k] = res[k];
    }
    c.refine = j.value("refine", c.refine);
    check_range(c.refine >= 1, "refine must be >= 1");
    c.N_s = j.value("seeds", c.N_s);
    check_range(c.N_s >= 1, "seeds must be >= 1");
    c.v = j.value("v", c.v);
    check_range(c.v > 0 && c.v <= 1, "v must lie in (0, 1]");
    c.w = j.value("w", c.w);
    check_range(c.w >= 0 && c.w <= 1, "w must lie in [0, 1]");
    c.p = j.value("p", c.p);
    check_range(c.p > 0, "p must be positive");
    c.eps_factor = j.value("eps_factor", c.eps_factor);
    check_range(c.eps_factor > 0, "eps_factor must be positive");
    c.alpha = j.value("alpha", c.alpha);
    check_range(c.alpha > 0 && c.alpha < 1, "alpha must lie in (0, 1)");
    c.fd_step = j.value("fd_step", c.fd_step);
    check_range(c.fd_step > 0, "fd_step must be positive");

    const std::string mode = j.value("mode", std::string("coarse"));
    if (mode == "fine")
        c.mode = SimMode::Fine;
    else if (mode == "coarse")
        c.mode = SimMode::Coarse;
    else
        throw Error("config: mode must be 'fine' or 'coarse'");

    if (j.contains("shell")) {
        const auto& s = j["shell"];
        c.shell = s.value("enabled", true);
        c.shell_thickness = s.value("thickness", 0.0);
        check_range(!c.shell || c.shell_thickness > 0, "shell thickness must be positive");
    }
    c.boundary_faces = j.value("boundary_faces", false);

    for (const auto& fj : j.value("fixes", json::array())) {
        FixSpec<D> fx;
        fx.region = box_from<D>(fj.at("box"), "fix.box");
        if (fj.contains("axes")) {
            fx.axes = fj["axes"].get<std::vector<int>>();
            for (int a : fx.axes) check_range(a >= 0 && a < D, "fix axis out of range");
        }
        c.fixes.push_back(std::move(fx));
    }
    for (const auto& lj : j.value("loads", json::array())) {
        LoadSpec<D> ld;
        ld.region = box_from<D>(lj.at("box"), "load.box");
        ld.total = vec_from<D>(lj.at("total"), "load.total");
        c.loads.push_back(std::move(ld));
    }

    c.rng_seed = j.value("rng_seed", c.rng_seed);
    c.max_iter = j.value("max_iter", c.max_iter);
    check_range(c.max_iter >= 0, "max_iter must be >= 0");
    c.ch_tol = j.value("ch_tol", c.ch_tol);
    check_range(c.ch_tol > 0, "ch_tol must be positive");
    c.out = j.value("out", c.out);
    c.snapshot_every = j.value("snapshot_every", c.snapshot_every);
    check_range(c.snapshot_every >= 0, "snapshot_every must be >= 0");
    c.depth = j.value("depth", c.depth);
    check_range(c.depth >= 1, "depth must be >= 1");
    c.knn = j.value("knn", c.knn);
    check_range(c.knn == 0 || c.knn >= D + 1, "knn too small");
    c.r_lo = j.value("r_lo", c.r_lo);
    c.r_hi = j.value("r_hi", c.r_hi);
    if (j.contains("r_lo") || j.contains("r_hi"))
        check_range(c.r_lo > 0 && c.r_hi >= c.r_lo, "need 0 < r_lo <= r_hi");
    c.init = j.value("init", c.init);
    check_range(c.init == "uniform" || c.init == "blue-noise", "init must be uniform or blue-noise");
    c.max_inner = j.value("max_inner", c.max_inner);
    check_range(c.max_inner >= 1, "max_inner must be >= 1");
    return c;
}

template void save_seeds<2>(const std::filesystem::path&, const SeedSet<2>&);
template void save_seeds<3>(const std::filesystem::path&, const SeedSet<3>&);
template SeedSet<2> load_seeds<2>(const std::filesystem::path&);
template SeedSet<3> load_seeds<3>(const std::filesystem::path&);
template void write_vtk<2>(const std::filesystem::path&, const FineMesh<2>&,
                           const std::vector<double>&, const std::string&, const VecX*);
template void write_vtk<3>(const std::filesystem::path&, const FineMesh<3>&,
                           const std::vector<double>&, const std::string&, const VecX*);
template void write_isosurface_obj<2>(const std::filesystem::path&, const FineMesh<2>&,
                                      const std::vector<double>&);
template void write_isosurface_obj<3>(const std::filesystem::path&, const FineMesh<3>&,
                                      const std::vector<double>&);
template ProblemConfig<2> parse_config<2>(const json&, const std::filesystem::path&);
template ProblemConfig<3> parse_config<3>(const json&, const std::filesystem::path&);

} // namespace foam
