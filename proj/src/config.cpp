#include "gf/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace gf {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& s) {
    // comments start at '#' or ';' preceded by start-of-line or whitespace
    for (std::size_t i = 0; i < s.size(); ++i) {
        if ((s[i] == '#' || s[i] == ';') && (i == 0 || s[i - 1] == ' ' || s[i - 1] == '\t'))
            return s.substr(0, i);
    }
    return s;
}

}  // namespace

ConfigDoc ConfigDoc::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path);
}

ConfigDoc ConfigDoc::parse_string(const std::string& text, const std::string& name) {
    ConfigDoc doc;
    doc.name_ = name;
    std::istringstream in(text);
    std::string raw, section;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(name + ":" + std::to_string(lineno) +
                                  ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError(name + ":" + std::to_string(lineno) + ": empty section name");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(name + ":" + std::to_string(lineno) +
                              ": expected 'key = value' or a [section] header");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(name + ":" + std::to_string(lineno) + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (doc.entries_.count(full))
            throw ConfigError(name + ":" + std::to_string(lineno) + ": duplicate key '" + full +
                              "' (first defined at line " +
                              std::to_string(doc.entries_[full].line) + ")");
        doc.entries_[full] = {value, lineno};
    }
    return doc;
}

const ConfigDoc::Entry* ConfigDoc::lookup(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    used_.insert(key);
    return &it->second;
}

bool ConfigDoc::has(const std::string& key) const { return lookup(key) != nullptr; }

void ConfigDoc::fail(const std::string& key, const std::string& msg) const {
    auto it = entries_.find(key);
    const std::string loc =
        it == entries_.end() ? name_ : name_ + ":" + std::to_string(it->second.line);
    throw ConfigError(loc + ": " + key + ": " + msg);
}

std::string ConfigDoc::get_string(const std::string& key) const {
    const Entry* e = lookup(key);
    if (!e) throw ConfigError(name_ + ": missing required key '" + key + "'");
    return e->value;
}

std::string ConfigDoc::get_string(const std::string& key, const std::string& fallback) const {
    const Entry* e = lookup(key);
    return e ? e->value : fallback;
}

double ConfigDoc::get_double(const std::string& key) const {
    const std::string v = get_string(key);
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) fail(key, "trailing characters after number '" + v + "'");
        return d;
    } catch (const std::logic_error&) {
        fail(key, "expected a number, got '" + v + "'");
    }
}

double ConfigDoc::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

std::int64_t ConfigDoc::get_int(const std::string& key) const {
    const std::string v = get_string(key);
    std::int64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        // allow exponent notation for large counts (e.g. 2e5)
        const double d = get_double(key);
        if (std::floor(d) != d || std::fabs(d) > 9e15) fail(key, "expected an integer");
        return static_cast<std::int64_t>(d);
    }
    return out;
}

std::int64_t ConfigDoc::get_int(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}

bool ConfigDoc::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
    if (v == "false" || v == "no" || v == "0" || v == "off") return false;
    fail(key, "expected a boolean, got '" + v + "'");
}

std::vector<double> ConfigDoc::get_doubles(const std::string& key) const {
    const std::string v = get_string(key);
    std::istringstream in(v);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(tok, &pos));
            if (pos != tok.size()) fail(key, "bad number '" + tok + "' in list");
        } catch (const std::logic_error&) {
            fail(key, "bad number '" + tok + "' in list");
        }
    }
    if (out.empty()) fail(key, "expected a list of numbers");
    return out;
}

std::vector<double> ConfigDoc::get_doubles(const std::string& key,
                                           const std::vector<double>& fallback) const {
    return has(key) ? get_doubles(key) : fallback;
}

void ConfigDoc::reject_unused() const {
    for (const auto& [key, entry] : entries_) {
        if (!used_.count(key))
            throw ConfigError(name_ + ":" + std::to_string(entry.line) + ": unknown key '" + key +
                              "'");
    }
}

std::uint64_t ConfigDoc::content_hash() const {
    std::uint64_t h = 1469598103934665603ull;  // FNV offset basis
    auto mix = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;  // FNV prime
        }
    };
    for (const auto& [key, entry] : entries_) {
        mix(key);
        mix("=");
        mix(entry.value);
        mix("\n");
    }
    return h;
}

// ---------------------------------------------------------------------------
// Model building

namespace {

GrowthRate load_tau(const ConfigDoc& doc) {
    const std::string fam = doc.get_string("model.tau.family");
    if (fam == "constant") return GrowthRate::constant(doc.get_double("model.tau.value"));
    if (fam == "affine")
        return GrowthRate::affine(doc.get_double("model.tau.intercept"),
                                  doc.get_double("model.tau.slope"));
    if (fam == "power")
        return GrowthRate::power(doc.get_double("model.tau.scale"),
                                 doc.get_double("model.tau.exponent"));
    if (fam == "tabulated") {
        auto xs = doc.get_doubles("model.tau.knots");
        auto vals = doc.get_doubles("model.tau.values");
        if (xs.size() != vals.size()) doc.fail("model.tau.values", "length mismatch with knots");
        return GrowthRate::tabulated(std::move(xs), std::move(vals),
                                     doc.get_double("model.tau.exponent_at_zero", 0.0),
                                     doc.get_double("model.tau.exponent_at_inf", 0.0));
    }
    doc.fail("model.tau.family", "unknown family '" + fam +
                                     "' (constant | affine | power | tabulated)");
}

RateFunction load_B(const ConfigDoc& doc) {
    const std::string fam = doc.get_string("model.B.family");
    if (fam == "constant") return RateFunction::constant(doc.get_double("model.B.value"));
    if (fam == "decay")
        return RateFunction::decay(doc.get_double("model.B.base"),
                                   doc.get_double("model.B.amplitude"),
                                   doc.get_double("model.B.scale", 1.0));
    if (fam == "tabulated") {
        auto xs = doc.get_doubles("model.B.knots");
        auto vals = doc.get_doubles("model.B.values");
        if (xs.size() != vals.size()) doc.fail("model.B.values", "length mismatch with knots");
        return RateFunction::tabulated(std::move(xs), std::move(vals));
    }
    doc.fail("model.B.family", "unknown family '" + fam + "' (constant | decay | tabulated)");
}

FragmentationKernel load_kernel(const ConfigDoc& doc) {
    const std::string prof = doc.get_string("model.kernel.profile");
    if (prof == "power") {
        return FragmentationKernel::self_similar(KernelProfile::power(
            doc.get_double("model.kernel.scale"), doc.get_double("model.kernel.exponent", 0.0)));
    }
    if (prof == "tabulated") {
        auto zs = doc.get_doubles("model.kernel.knots");
        auto vals = doc.get_doubles("model.kernel.values");
        if (zs.size() != vals.size()) doc.fail("model.kernel.values", "length mismatch with knots");
        return FragmentationKernel::self_similar(
            KernelProfile::tabulated(std::move(zs), std::move(vals)));
    }
    doc.fail("model.kernel.profile", "unknown profile '" + prof + "' (power | tabulated)");
}

}  // namespace

RunConfig load_run_config(const ConfigDoc& doc, const CliOverrides& overrides) {
    const double x0 = doc.get_double("model.x0", 1.0);
    QuadratureSettings quad;
    quad.rel_tol = doc.get_double("model.quadrature_rel_tol", 1e-10);
    const double ceiling = doc.get_double("model.mass_ceiling", 1e15);

    CoefficientModel model(load_tau(doc), load_B(doc), load_kernel(doc), x0, quad, ceiling);

    RunConfig cfg{std::move(model)};
    cfg.x0 = x0;

    if (!doc.has("run.seed"))
        throw ConfigError("run.seed is required: runs must be reproducible by construction");
    const std::int64_t seed = doc.get_int("run.seed");
    if (seed < 0) doc.fail("run.seed", "seed must be nonnegative");
    cfg.seed = static_cast<std::uint64_t>(seed);

    const std::int64_t workers = doc.get_int("run.workers", 1);
    if (workers < 1 || workers > 1024) doc.fail("run.workers", "workers must be in [1, 1024]");
    cfg.workers = static_cast<unsigned>(workers);

    const std::int64_t budget = doc.get_int("run.budget", 200000);
    if (budget < 16) doc.fail("run.budget", "budget must be at least 16 paths");
    cfg.budget = static_cast<std::size_t>(budget);

    cfg.horizon = doc.get_double("run.horizon", 240.0);
    if (!(cfg.horizon > 0)) doc.fail("run.horizon", "horizon must be positive");

    cfg.tol = doc.get_double("run.tol", 1e-4);
    if (!(cfg.tol > 0)) doc.fail("run.tol", "tolerance must be positive");

    const std::int64_t per_node = doc.get_int("run.per_node", 2000);
    if (per_node < 8) doc.fail("run.per_node", "per_node must be at least 8");
    cfg.per_node = static_cast<std::size_t>(per_node);

    const std::int64_t mp = doc.get_int("run.martingale_paths", 20000);
    if (mp < 8) doc.fail("run.martingale_paths", "martingale_paths must be at least 8");
    cfg.martingale_paths = static_cast<std::size_t>(mp);

    cfg.martingale_times = doc.get_doubles("run.martingale_times", {0.5, 1.0, 2.0});
    for (double t : cfg.martingale_times)
        if (!(t > 0)) doc.fail("run.martingale_times", "times must be positive");

    cfg.q_super_offset = doc.get_double("run.q_super_offset", 0.5);
    if (!(cfg.q_super_offset > 0)) doc.fail("run.q_super_offset", "offset must be positive");

    const std::int64_t op = doc.get_int("run.occupation_paths", 20000);
    if (op < 0) doc.fail("run.occupation_paths", "occupation_paths must be nonnegative");
    cfg.occupation_paths = static_cast<std::size_t>(op);

    const double gmin = doc.get_double("grid.min", 0.02);
    const double gmax = doc.get_double("grid.max", 12.0);
    const std::int64_t nodes = doc.get_int("grid.nodes", 96);
    if (!(gmin > 0) || !(gmax > gmin)) doc.fail("grid.min", "need 0 < grid.min < grid.max");
    if (nodes < 8 || nodes > 100000) doc.fail("grid.nodes", "nodes must be in [8, 100000]");
    cfg.grid = Grid::geometric(gmin, gmax, static_cast<std::size_t>(nodes));
    cfg.grid_refine = doc.get_bool("grid.refine", true);

    cfg.pde_t = doc.get_double("pde.t", 2.0);
    if (!(cfg.pde_t > 0)) doc.fail("pde.t", "final time must be positive");
    cfg.pde_dt = doc.get_double("pde.dt", 0.01);
    if (!(cfg.pde_dt > 0)) doc.fail("pde.dt", "time step must be positive");
    const std::int64_t snaps = doc.get_int("pde.snapshots", 6);
    if (snaps < 2 || snaps > 1000) doc.fail("pde.snapshots", "snapshots must be in [2, 1000]");
    cfg.pde_snapshots = static_cast<std::size_t>(snaps);

    if (doc.has("criteria.a")) cfg.criteria_a = doc.get_double("criteria.a");
    if (doc.has("criteria.b")) cfg.criteria_b = doc.get_double("criteria.b");

    cfg.out_dir = doc.get_string("run.out", "out");

    if (overrides.seed) cfg.seed = *overrides.seed;
    if (overrides.workers) cfg.workers = *overrides.workers;
    if (overrides.out_dir) cfg.out_dir = *overrides.out_dir;

    doc.reject_unused();
    cfg.config_hash = doc.content_hash();
    return cfg;
}

}  // namespace gf
