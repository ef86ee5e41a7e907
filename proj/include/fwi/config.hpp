#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fwi/error.hpp"
#include "fwi/forward.hpp"
#include "fwi/inverse.hpp"
#include "fwi/mesh.hpp"
#include "fwi/scenario.hpp"

namespace fwi {

// ---------------------------------------------------------------------------
// Plain-text configuration: "[section]" headers and "key = value" lines,
// '#' or ';' comments. Sections and keys may repeat.

struct ConfigEntry {
    std::string key;
    std::string value;
    long line = 0;
};

struct ConfigSection {
    std::string name;
    std::vector<ConfigEntry> entries;
    long line = 0;

    const ConfigEntry* find(const std::string& key) const {
        const ConfigEntry* hit = nullptr;
        for (const auto& e : entries) {
            if (e.key == key) hit = &e;
        }
        return hit;
    }
    std::vector<const ConfigEntry*> all(const std::string& key) const {
        std::vector<const ConfigEntry*> out;
        for (const auto& e : entries) {
            if (e.key == key) out.push_back(&e);
        }
        return out;
    }
};

struct ConfigFile {
    std::vector<ConfigSection> sections;
    std::filesystem::path base_dir;

    const ConfigSection* section(const std::string& name) const {
        for (const auto& s : sections) {
            if (s.name == name) return &s;
        }
        return nullptr;
    }
    std::vector<const ConfigSection*> all(const std::string& name) const {
        std::vector<const ConfigSection*> out;
        for (const auto& s : sections) {
            if (s.name == name) out.push_back(&s);
        }
        return out;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string tok; in >> tok;) out.push_back(tok);
    return out;
}

}  // namespace detail

inline ConfigFile parse_config(std::istream& in) {
    ConfigFile cfg;
    std::string raw;
    long lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const auto cut = raw.find_first_of("#;");
        const std::string line = detail::trim(cut == std::string::npos ? raw : raw.substr(0, cut));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                throw ParseError("config line " + std::to_string(lineno) + ": malformed section header");
            }
            cfg.sections.push_back({detail::trim(line.substr(1, line.size() - 2)), {}, lineno});
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
        if (cfg.sections.empty()) {
            throw ParseError("config line " + std::to_string(lineno) + ": entry before any section header");
        }
        const std::string key = detail::trim(line.substr(0, eq));
        if (key.empty()) throw ParseError("config line " + std::to_string(lineno) + ": empty key");
        cfg.sections.back().entries.push_back({key, detail::trim(line.substr(eq + 1)), lineno});
    }
    return cfg;
}

inline ConfigFile load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file " + path.string());
    ConfigFile cfg = parse_config(in);
    cfg.base_dir = path.parent_path();
    return cfg;
}

// ---------------------------------------------------------------------------
// Named closed-form presets

/// Smooth time window: 0 before t0, 1 on [t0 + ramp, t1 - ramp], C1 ramps.
struct WindowSpec {
    double t0 = 0;
    double t1 = std::numeric_limits<double>::infinity();
    double ramp = 0;

    double operator()(double t) const {
        if (t < t0 || t > t1) return 0.0;
        if (ramp <= 0) return 1.0;
        auto smooth = [](double s) { return s <= 0 ? 0.0 : (s >= 1 ? 1.0 : s * s * (3 - 2 * s)); };
        return std::min(smooth((t - t0) / ramp), smooth((t1 - t) / ramp));
    }
};

struct ReceiverSpec {
    Point center = Point(0.5, 0.5);
    double radius = 0.1;
    WindowSpec window;
};

/// Gaussian in space, Ricker wavelet in time.
struct SourceSpec {
    Point center = Point(0.5, 0.5);
    double width = 0.05;
    double frequency = 5.0;
    double delay = 0.2;
    double amplitude = 1.0;
};

/// Field presets: "zero", "constant c", "gaussian cx cy width amp",
/// "cosine kx ky amp" (cos(kx pi x) cos(ky pi y)).
struct FieldSpec {
    std::string kind = "zero";
    std::vector<double> args;
};

/// Parameter presets: "constant c", "two_region a b [x_split]" (a for x < split),
/// "disk a b cx cy r" (b inside the disk), "smooth a b" (a + b sin(pi x) sin(pi y)),
/// "file path" (DG0 text).
struct ParamSpec {
    std::string kind = "constant";
    std::vector<double> args{1.0};
    std::filesystem::path file;
};

inline std::function<double(const Point&)> field_function(const FieldSpec& f) {
    const auto& a = f.args;
    if (f.kind == "zero") return [](const Point&) { return 0.0; };
    if (f.kind == "constant") {
        const double c = a[0];
        return [c](const Point&) { return c; };
    }
    if (f.kind == "gaussian") {
        const Point c(a[0], a[1]);
        const double w = a[2], amp = a[3];
        return [=](const Point& x) { return amp * std::exp(-(x - c).squaredNorm() / (w * w)); };
    }
    const double kx = a[0] * std::numbers::pi, ky = a[1] * std::numbers::pi, amp = a[2];
    return [=](const Point& x) { return amp * std::cos(kx * x.x()) * std::cos(ky * x.y()); };
}

inline ScalarFunction scalar_function(const FieldSpec& f) {
    ScalarFunction out;
    out.value = field_function(f);
    const auto& a = f.args;
    if (f.kind == "zero" || f.kind == "constant") {
        out.gradient = [](const Point&) { return Eigen::Vector2d::Zero().eval(); };
    } else if (f.kind == "gaussian") {
        const Point c(a[0], a[1]);
        const double w = a[2], amp = a[3];
        out.gradient = [=](const Point& x) {
            return Eigen::Vector2d(-2.0 / (w * w) * amp * std::exp(-(x - c).squaredNorm() / (w * w)) * (x - c));
        };
    } else {
        const double kx = a[0] * std::numbers::pi, ky = a[1] * std::numbers::pi, amp = a[2];
        out.gradient = [=](const Point& x) {
            return Eigen::Vector2d(-amp * kx * std::sin(kx * x.x()) * std::cos(ky * x.y()),
                                   -amp * ky * std::cos(kx * x.x()) * std::sin(ky * x.y()));
        };
    }
    return out;
}

inline DG0Field read_dg0(std::istream& in, std::size_t triangles) {
    DG0Field f = DG0Field::constant(triangles, std::numeric_limits<double>::quiet_NaN());
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string s = detail::trim(line);
        if (s.empty() || s.front() == '#') continue;
        std::istringstream ls(s);
        std::size_t t;
        double v;
        if (!(ls >> t >> v)) throw ParseError("DG0 field line " + std::to_string(lineno) + ": expected 'index value'");
        if (t >= triangles) throw ParseError("DG0 field line " + std::to_string(lineno) + ": triangle index out of range");
        f[t] = v;
    }
    for (std::size_t t = 0; t < triangles; ++t) {
        if (std::isnan(f[t])) throw ParseError("DG0 field: no value for triangle " + std::to_string(t));
    }
    return f;
}

inline DG0Field param_values(const ParamSpec& p, const TriMesh& mesh) {
    const auto& a = p.args;
    if (p.kind == "file") {
        std::ifstream in(p.file);
        if (!in) throw ParseError("cannot open parameter file " + p.file.string());
        return read_dg0(in, mesh.triangle_count());
    }
    std::function<double(const Point&)> fn;
    if (p.kind == "constant") {
        fn = [c = a[0]](const Point&) { return c; };
    } else if (p.kind == "two_region") {
        const double split = a.size() > 2 ? a[2] : 0.5;
        fn = [=](const Point& x) { return x.x() < split ? a[0] : a[1]; };
    } else if (p.kind == "disk") {
        const Point c(a[2], a[3]);
        const double r = a[4];
        fn = [=](const Point& x) { return (x - c).norm() < r ? a[1] : a[0]; };
    } else {
        fn = [=](const Point& x) {
            return a[0] + a[1] * std::sin(std::numbers::pi * x.x()) * std::sin(std::numbers::pi * x.y());
        };
    }
    // Piecewise-constant presets are evaluated at centroids so region boundaries along
    // mesh edges stay sharp; the smooth preset is cell-averaged.
    if (p.kind == "smooth") return q_projection(mesh, fn);
    DG0Field out = DG0Field::constant(mesh.triangle_count(), 0.0);
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) out[t] = fn(mesh.centroid(t));
    return out;
}

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
    // [mesh]
    std::optional<std::filesystem::path> mesh_path;
    int structured = 16;
    SquareSides sides;

    // [scenario]
    double T = 1.0;
    std::optional<std::size_t> N;
    double cfl_ratio = 0.9;
    double eta = 0.0;
    FieldSpec p0;
    FieldSpec p1;
    std::vector<SourceSpec> sources;
    ParamSpec nu;  ///< forward parameter and twin truth
    std::optional<double> c_inv;
    std::uint64_t seed = 1;

    // [receiver] blocks
    std::vector<ReceiverSpec> receivers;
    /// "twin" (generated from nu), "zero", or "file" (trajectory binary).
    std::string observations = "twin";
    std::filesystem::path observations_file;

    // [optimizer]
    double lambda = 0.0;
    double nu_lo = 1.0;
    double nu_hi = 1.0;
    /// Without explicit bounds the box is the range of the forward parameter.
    bool bounds_given = false;
    ParamSpec nu0;
    OptimizerOptions optimizer;

    // [gradcheck]
    std::size_t gradcheck_elements = 10;
    std::vector<double> gradcheck_eps{1e-3, 1e-4, 1e-5};

    // [convergence]
    std::size_t levels = 3;
    FieldSpec nu_bar{"constant", {1.0}};

    // [output]
    std::filesystem::path output_dir = "out";
};

namespace detail {

inline double parse_double(const ConfigEntry& e) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(e.value, &pos);
        if (detail::trim(e.value.substr(pos)).empty() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    throw ParseError("config line " + std::to_string(e.line) + ": '" + e.key + "' expects a finite number");
}

inline std::vector<double> parse_doubles(const ConfigEntry& e, const std::vector<std::string>& toks, std::size_t from) {
    std::vector<double> out;
    for (std::size_t i = from; i < toks.size(); ++i) {
        ConfigEntry sub{e.key, toks[i], e.line};
        out.push_back(parse_double(sub));
    }
    return out;
}

inline std::size_t parse_count(const ConfigEntry& e) {
    const double v = parse_double(e);
    if (v < 0 || v != std::floor(v) || v > 1e12) {
        throw ParseError("config line " + std::to_string(e.line) + ": '" + e.key + "' expects a nonnegative integer");
    }
    return std::size_t(v);
}

[[noreturn]] inline void bad(const ConfigEntry& e, const std::string& what) {
    throw ParseError("config line " + std::to_string(e.line) + ": '" + e.key + "' " + what);
}

inline FieldSpec parse_field(const ConfigEntry& e) {
    const auto toks = split_ws(e.value);
    if (toks.empty()) bad(e, "is empty");
    FieldSpec f{toks[0], parse_doubles(e, toks, 1)};
    const std::map<std::string, std::size_t> arity{{"zero", 0}, {"constant", 1}, {"gaussian", 4}, {"cosine", 3}};
    const auto it = arity.find(f.kind);
    if (it == arity.end()) bad(e, "has unknown preset '" + f.kind + "'");
    if (f.args.size() != it->second) bad(e, "preset '" + f.kind + "' takes " + std::to_string(it->second) + " numbers");
    if (f.kind == "gaussian" && !(f.args[2] > 0)) bad(e, "needs a positive width");
    return f;
}

inline ParamSpec parse_param(const ConfigEntry& e, const std::filesystem::path& base) {
    const auto toks = split_ws(e.value);
    if (toks.empty()) bad(e, "is empty");
    ParamSpec p;
    p.kind = toks[0];
    if (p.kind == "file") {
        if (toks.size() != 2) bad(e, "expects 'file <path>'");
        p.file = base / toks[1];
        p.args.clear();
        return p;
    }
    p.args = parse_doubles(e, toks, 1);
    const std::map<std::string, std::pair<std::size_t, std::size_t>> arity{
        {"constant", {1, 1}}, {"two_region", {2, 3}}, {"disk", {5, 5}}, {"smooth", {2, 2}}};
    const auto it = arity.find(p.kind);
    if (it == arity.end()) bad(e, "has unknown preset '" + p.kind + "'");
    if (p.args.size() < it->second.first || p.args.size() > it->second.second) bad(e, "has the wrong number of values");
    return p;
}

inline SquareSides parse_sides(const ConfigEntry& e) {
    SquareSides s;
    std::string v = e.value;
    for (char& c : v) {
        if (c == ',') c = ' ';
    }
    for (const auto& tok : split_ws(v)) {
        if (tok == "left") s.left = BoundaryTag::Dirichlet;
        else if (tok == "right") s.right = BoundaryTag::Dirichlet;
        else if (tok == "bottom") s.bottom = BoundaryTag::Dirichlet;
        else if (tok == "top") s.top = BoundaryTag::Dirichlet;
        else if (tok != "none") bad(e, "has unknown side '" + tok + "'");
    }
    return s;
}

inline std::map<std::string, double> parse_assignments(const ConfigEntry& e, const std::vector<std::string>& allowed) {
    std::map<std::string, double> out;
    for (const auto& tok : split_ws(e.value)) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) bad(e, "expects name=value pairs");
        const std::string name = tok.substr(0, eq);
        if (std::find(allowed.begin(), allowed.end(), name) == allowed.end()) bad(e, "has unknown field '" + name + "'");
        out[name] = parse_double({e.key, tok.substr(eq + 1), e.line});
    }
    return out;
}

inline void reject_unknown(const ConfigSection& s, const std::vector<std::string>& keys) {
    for (const auto& e : s.entries) {
        if (std::find(keys.begin(), keys.end(), e.key) == keys.end()) {
            throw ParseError("config line " + std::to_string(e.line) + ": unknown key '" + e.key + "' in [" + s.name + "]");
        }
    }
}

}  // namespace detail

/// Reads and validates everything that can be checked without running a
/// solver; referenced files must exist.
inline RunConfig parse_run_config(const ConfigFile& file) {
    using namespace detail;
    RunConfig c;
    const std::vector<std::string> known{"mesh", "scenario", "receiver", "optimizer", "gradcheck", "convergence", "output"};
    for (const auto& s : file.sections) {
        if (std::find(known.begin(), known.end(), s.name) == known.end()) {
            throw ParseError("config line " + std::to_string(s.line) + ": unknown section [" + s.name + "]");
        }
    }
    for (const char* once : {"mesh", "scenario", "optimizer", "gradcheck", "convergence", "output"}) {
        if (file.all(once).size() > 1) throw ParseError(std::string("config: section [") + once + "] appears twice");
    }

    if (const auto* s = file.section("mesh")) {
        reject_unknown(*s, {"path", "structured", "dirichlet"});
        if (const auto* e = s->find("path")) {
            c.mesh_path = file.base_dir / e->value;
            if (!std::filesystem::exists(*c.mesh_path)) bad(*e, "refers to a missing file " + c.mesh_path->string());
        }
        if (const auto* e = s->find("structured")) {
            const std::size_t n = parse_count(*e);
            if (n < 1 || n > 4096) bad(*e, "must lie in [1, 4096]");
            c.structured = int(n);
        }
        if (const auto* e = s->find("dirichlet")) c.sides = parse_sides(*e);
    }

    if (const auto* s = file.section("scenario")) {
        reject_unknown(*s, {"T", "N", "cfl_ratio", "eta", "p0", "p1", "source", "nu", "c_inv", "seed"});
        if (const auto* e = s->find("T")) {
            c.T = parse_double(*e);
            if (!(c.T > 0)) bad(*e, "must be positive");
        }
        if (const auto* e = s->find("N")) {
            c.N = parse_count(*e);
            if (*c.N == 0) bad(*e, "must be positive");
        }
        if (const auto* e = s->find("cfl_ratio")) {
            c.cfl_ratio = parse_double(*e);
            if (!(c.cfl_ratio > 0)) bad(*e, "must be positive");
        }
        if (const auto* e = s->find("eta")) {
            c.eta = parse_double(*e);
            if (c.eta < 0) bad(*e, "must be nonnegative");
        }
        if (const auto* e = s->find("p0")) c.p0 = parse_field(*e);
        if (const auto* e = s->find("p1")) c.p1 = parse_field(*e);
        for (const auto* e : s->all("source")) {
            const auto kv = parse_assignments(*e, {"x", "y", "width", "freq", "delay", "amp"});
            SourceSpec src;
            if (kv.count("x")) src.center.x() = kv.at("x");
            if (kv.count("y")) src.center.y() = kv.at("y");
            if (kv.count("width")) src.width = kv.at("width");
            if (kv.count("freq")) src.frequency = kv.at("freq");
            if (kv.count("delay")) src.delay = kv.at("delay");
            if (kv.count("amp")) src.amplitude = kv.at("amp");
            if (!(src.width > 0) || !(src.frequency > 0)) bad(*e, "needs positive width and freq");
            c.sources.push_back(src);
        }
        if (const auto* e = s->find("nu")) c.nu = parse_param(*e, file.base_dir);
        if (const auto* e = s->find("c_inv")) {
            c.c_inv = parse_double(*e);
            if (!(*c.c_inv > 0)) bad(*e, "must be positive");
        }
        if (const auto* e = s->find("seed")) c.seed = parse_count(*e);
    }

    for (const auto* s : file.all("receiver")) {
        reject_unknown(*s, {"center", "radius", "window", "ramp"});
        ReceiverSpec r;
        if (const auto* e = s->find("center")) {
            const auto v = parse_doubles(*e, split_ws(e->value), 0);
            if (v.size() != 2) bad(*e, "expects two coordinates");
            r.center = Point(v[0], v[1]);
        }
        if (const auto* e = s->find("radius")) {
            r.radius = parse_double(*e);
            if (!(r.radius > 0)) bad(*e, "must be positive");
        }
        if (const auto* e = s->find("window")) {
            const auto v = parse_doubles(*e, split_ws(e->value), 0);
            if (v.size() != 2 || !(v[0] < v[1])) bad(*e, "expects 't0 t1' with t0 < t1");
            r.window.t0 = v[0];
            r.window.t1 = v[1];
        }
        if (const auto* e = s->find("ramp")) {
            r.window.ramp = parse_double(*e);
            if (r.window.ramp < 0) bad(*e, "must be nonnegative");
        }
        c.receivers.push_back(r);
    }

    if (const auto* s = file.section("optimizer")) {
        reject_unknown(*s, {"lambda", "nu_lo", "nu_hi", "nu0", "max_iterations", "tol", "armijo", "backtrack",
                            "observations"});
        if (const auto* e = s->find("lambda")) {
            c.lambda = parse_double(*e);
            if (c.lambda < 0) bad(*e, "must be nonnegative");
        }
        if (const auto* e = s->find("nu_lo")) c.nu_lo = parse_double(*e);
        if (const auto* e = s->find("nu_hi")) c.nu_hi = parse_double(*e);
        c.bounds_given = s->find("nu_lo") || s->find("nu_hi");
        if (!(c.nu_lo > 0) || !(c.nu_lo <= c.nu_hi)) {
            throw ParseError("config [optimizer]: bounds must satisfy 0 < nu_lo <= nu_hi");
        }
        if (const auto* e = s->find("nu0")) c.nu0 = parse_param(*e, file.base_dir);
        if (const auto* e = s->find("max_iterations")) c.optimizer.max_iterations = parse_count(*e);
        if (const auto* e = s->find("tol")) {
            c.optimizer.rel_tol = parse_double(*e);
            if (!(c.optimizer.rel_tol >= 0)) bad(*e, "must be nonnegative");
        }
        if (const auto* e = s->find("armijo")) {
            c.optimizer.armijo = parse_double(*e);
            if (!(c.optimizer.armijo > 0 && c.optimizer.armijo < 1)) bad(*e, "must lie in (0, 1)");
        }
        if (const auto* e = s->find("backtrack")) {
            c.optimizer.backtrack = parse_double(*e);
            if (!(c.optimizer.backtrack > 0 && c.optimizer.backtrack < 1)) bad(*e, "must lie in (0, 1)");
        }
        if (const auto* e = s->find("observations")) {
            const auto toks = split_ws(e->value);
            if (toks.empty()) bad(*e, "is empty");
            c.observations = toks[0];
            if (c.observations == "file") {
                if (toks.size() != 2) bad(*e, "expects 'file <path>'");
                c.observations_file = file.base_dir / toks[1];
                if (!std::filesystem::exists(c.observations_file)) bad(*e, "refers to a missing file");
            } else if (c.observations != "twin" && c.observations != "zero") {
                bad(*e, "must be twin, zero or file <path>");
            }
        }
    }
    if (!file.section("optimizer") || !file.section("optimizer")->find("nu0")) c.nu0 = c.nu;

    if (const auto* s = file.section("gradcheck")) {
        reject_unknown(*s, {"elements", "eps"});
        if (const auto* e = s->find("elements")) {
            c.gradcheck_elements = parse_count(*e);
            if (c.gradcheck_elements == 0) bad(*e, "must be positive");
        }
        if (const auto* e = s->find("eps")) {
            c.gradcheck_eps = parse_doubles(*e, split_ws(e->value), 0);
            if (c.gradcheck_eps.empty()) bad(*e, "is empty");
            for (double v : c.gradcheck_eps) {
                if (!(v > 0)) bad(*e, "values must be positive");
            }
        }
    }
    if (const auto* s = file.section("convergence")) {
        reject_unknown(*s, {"levels", "nu_bar"});
        if (const auto* e = s->find("levels")) {
            c.levels = parse_count(*e);
            if (c.levels < 3 || c.levels > 6) bad(*e, "must lie in [3, 6]");
        }
        if (const auto* e = s->find("nu_bar")) c.nu_bar = parse_field(*e);
    }
    if (const auto* s = file.section("output")) {
        reject_unknown(*s, {"dir"});
        if (const auto* e = s->find("dir")) c.output_dir = file.base_dir / e->value;
    }

    for (const ParamSpec* p : {&c.nu, &c.nu0}) {
        if (p->kind == "file" && !std::filesystem::exists(p->file)) {
            throw ParseError("config: parameter file " + p->file.string() + " does not exist");
        }
    }
    if (c.cfl_ratio > 1 && !c.N) {
        throw ParseError("config [scenario]: cfl_ratio above 1 violates the CFL condition");
    }
    return c;
}

// ---------------------------------------------------------------------------
// Realized case: mesh, space, scenario and parameters built from a RunConfig

inline Scenario build_scenario(const RunConfig& c) {
    Scenario sc;
    sc.T = c.T;
    sc.eta = [eta = c.eta](const Point&) { return eta; };
    sc.p0 = scalar_function(c.p0);
    sc.p1 = scalar_function(c.p1);
    for (const auto& s : c.sources) {
        SourceTerm term;
        term.spatial = [s](const Point& x) { return s.amplitude * std::exp(-(x - s.center).squaredNorm() / (s.width * s.width)); };
        term.pulse = [s](double t) {
            const double a = std::numbers::pi * s.frequency * (t - s.delay);
            return (1 - 2 * a * a) * std::exp(-a * a);
        };
        // Antiderivative of the Ricker wavelet, vanishing at t = 0.
        term.integral = [s](double t) {
            const double w = std::numbers::pi * s.frequency;
            auto g = [&](double tt) {
                const double d = tt - s.delay;
                return d * std::exp(-w * w * d * d);
            };
            return g(t) - g(0.0);
        };
        sc.sources.push_back(std::move(term));
    }
    for (const auto& r : c.receivers) {
        Receiver rec;
        rec.weight = [r](const Point& x) { return (x - r.center).norm() < r.radius ? 1.0 : 0.0; };
        rec.window = r.window;
        rec.discontinuous_weight = true;
        sc.receivers.push_back(std::move(rec));
    }
    sc.lambda = c.lambda;
    sc.nu_lo = c.nu_lo;
    sc.nu_hi = c.nu_hi;
    return sc;
}

inline TriMesh build_mesh(const RunConfig& c) {
    return c.mesh_path ? load_mesh(c.mesh_path->string()) : structured_square(c.structured, c.sides);
}

/// Number of steps: explicit N, or the smallest N with tau/h <= cfl_ratio * c_cfl.
inline std::size_t resolve_steps(const RunConfig& c, double h, double c_inv) {
    if (c.N) return *c.N;
    const double c_cfl = std::sqrt(c.nu_lo) / (std::sqrt(2.0) * c_inv);
    return std::max<std::size_t>(1, std::size_t(std::ceil(c.T / (c.cfl_ratio * c_cfl * h) - 1e-9)));
}

}  // namespace fwi
