#include "gf/commands.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "gf/criteria.hpp"
#include "gf/malthus.hpp"
#include "gf/pdmp.hpp"
#include "gf/spectral.hpp"

namespace gf {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

std::string status_name(CheckStatus s) {
    switch (s) {
        case CheckStatus::Pass: return "pass";
        case CheckStatus::Fail: return "fail";
        case CheckStatus::Inconclusive: return "inconclusive";
    }
    return "?";
}

std::string hash_hex(std::uint64_t h) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// CSV bytes: stamped header line, then named columns. All doubles printed
/// with g17 so files are byte-stable.
class Csv {
public:
    Csv(const RunConfig& cfg, const std::string& command, std::vector<std::string> columns)
        : columns_(std::move(columns)) {
        buf_ += "# gfkit " + command + " config_hash=" + hash_hex(cfg.config_hash) +
                " seed=" + std::to_string(cfg.seed) + "\n";
        for (std::size_t i = 0; i < columns_.size(); ++i)
            buf_ += (i ? "," : "") + columns_[i];
        buf_ += "\n";
    }
    void row(std::initializer_list<double> vals) {
        std::size_t i = 0;
        for (double v : vals) buf_ += (i++ ? "," : "") + g17(v);
        buf_ += "\n";
    }
    void row_mixed(const std::vector<std::string>& vals) {
        for (std::size_t i = 0; i < vals.size(); ++i) buf_ += (i ? "," : "") + vals[i];
        buf_ += "\n";
    }
    void save(const fs::path& path) const { write_text(path, buf_); }

private:
    std::vector<std::string> columns_;
    std::string buf_;
};

json stamp(const RunConfig& cfg, const std::string& command) {
    json j;
    j["command"] = command;
    j["config_hash"] = hash_hex(cfg.config_hash);
    j["seed"] = cfg.seed;
    return j;
}

json entry_json(const CriteriaEntry& e) {
    json j;
    j["id"] = e.id;
    j["condition"] = e.condition;
    j["status"] = status_name(e.status);
    j["margin"] = e.margin;
    j["marginal"] = e.marginal;
    j["sampled"] = e.sampled;
    if (!e.note.empty()) j["note"] = e.note;
    return j;
}

json validation_json(const ValidationReport& rep) {
    json arr = json::array();
    for (const auto& e : rep.entries) {
        json j;
        j["id"] = e.id;
        j["status"] = status_name(e.status);
        j["margin"] = e.margin;
        j["sampled"] = e.sampled;
        if (!e.note.empty()) j["note"] = e.note;
        arr.push_back(std::move(j));
    }
    return arr;
}

struct MalthusArtifacts {
    MalthusResult result;
    ProfileEstimate profile;
    OccupationHistogram occupation;
    MartingaleReport martingale;
    bool have_profile = false;
};

MalthusArtifacts run_malthus_pipeline(const RunConfig& cfg, std::ostream& log) {
    MalthusArtifacts art;
    McOptions opt{cfg.seed, cfg.workers, 0};
    log << "solving for the Malthus exponent (budget " << cfg.budget << ", tol " << cfg.tol
        << ")\n";
    art.result = solve_malthus(cfg.model, cfg.tol, cfg.budget, cfg.horizon, opt);
    if (art.result.status == MalthusResult::Status::NoBracket) {
        log << "no bracket: " << art.result.message << "\n";
        return art;
    }
    const double lambda = art.result.lambda;
    log << "lambda = " << lambda << " (certified [" << art.result.ci_lo << ", "
        << art.result.ci_hi << "])\n";

    log << "estimating profile on " << cfg.grid.size() << " nodes, " << cfg.per_node
        << " excursions per node\n";
    art.profile = estimate_profile(cfg.model, cfg.grid, lambda, cfg.per_node, cfg.horizon, opt);
    art.have_profile = true;

    if (cfg.occupation_paths > 0)
        art.occupation = tilted_occupation(cfg.model, lambda, cfg.grid, cfg.occupation_paths,
                                           cfg.horizon, opt);

    const HInterp h(art.profile.x, art.profile.h);
    const double q_super = lambda + cfg.q_super_offset;
    const HEstimate h_super_est =
        estimate_h(cfg.model, cfg.grid.nodes, q_super, cfg.per_node, cfg.horizon, opt);
    art.martingale = martingale_test(cfg.model, lambda, h, cfg.martingale_times,
                                     cfg.martingale_paths, q_super, h_super_est.interpolant(),
                                     opt);
    return art;
}

json malthus_json(const RunConfig& cfg, const MalthusArtifacts& art) {
    const MalthusResult& r = art.result;
    json j = stamp(cfg, "malthus");
    switch (r.status) {
        case MalthusResult::Status::Ok: j["status"] = "ok"; break;
        case MalthusResult::Status::NoBracket: j["status"] = "no-bracket"; break;
        case MalthusResult::Status::BudgetExhausted: j["status"] = "budget-exhausted"; break;
    }
    if (!r.message.empty()) j["message"] = r.message;
    j["lambda"] = r.lambda;
    j["ci"] = {r.ci_lo, r.ci_hi};
    j["tol"] = r.tol;
    j["paths_used"] = r.paths_used;
    j["truncated"] = r.truncated;
    j["derivative_at_lambda"] = r.deriv_at_lambda;
    j["derivative_se"] = r.deriv_se;
    j["rate_certified"] = r.rate_certified;
    j["growth_weight_sup"] = r.g_sup;
    j["growth_weight_inf"] = r.g_inf;
    if (art.have_profile) {
        j["profile_integral"] = art.profile.integral;
        j["profile_normalization_defect"] = art.profile.normalization_defect;
        j["occupation_ess"] = art.occupation.ess;
        j["occupation_low_ess"] = art.occupation.low_ess_warning;
    }
    json probes = json::array();
    for (const auto& p : r.probes) {
        probes.push_back({{"q", p.q},
                          {"L", p.value},
                          {"se", p.se},
                          {"n", p.n},
                          {"certified", p.certified}});
    }
    j["probes"] = probes;
    return j;
}

void write_malthus_outputs(const RunConfig& cfg, const MalthusArtifacts& art) {
    const fs::path dir(cfg.out_dir);
    write_json(dir / "malthus.json", malthus_json(cfg, art));

    {
        Csv csv(cfg, "malthus", {"q", "L", "se", "n", "certified"});
        for (const auto& p : art.result.probes)
            csv.row_mixed({g17(p.q), g17(p.value), g17(p.se), std::to_string(p.n),
                           p.certified ? "1" : "0"});
        for (const auto& p : art.result.curve)
            csv.row_mixed({g17(p.q), g17(p.value), g17(p.se), std::to_string(p.n), "-"});
        csv.save(dir / "L_curve.csv");
    }
    if (art.have_profile) {
        Csv csv(cfg, "malthus",
                {"x", "h", "h_se", "return_deriv", "return_deriv_se", "nu", "nu_normalized",
                 "occupation"});
        for (std::size_t i = 0; i < art.profile.x.size(); ++i)
            csv.row({art.profile.x[i], art.profile.h[i], art.profile.h_se[i],
                     art.profile.ret_deriv[i], art.profile.ret_deriv_se[i], art.profile.nu[i],
                     art.profile.nu_normalized[i],
                     i < art.occupation.density.size() ? art.occupation.density[i] : 0.0});
        csv.save(dir / "profile.csv");
    }
    if (!art.martingale.martingale.empty()) {
        Csv csv(cfg, "malthus", {"t", "martingale", "se", "supermartingale", "super_se"});
        for (std::size_t i = 0; i < art.martingale.martingale.size(); ++i) {
            const auto& mp = art.martingale.martingale[i];
            const bool have_super = i < art.martingale.supermartingale.size();
            csv.row({mp.t, mp.mean, mp.se,
                     have_super ? art.martingale.supermartingale[i].mean : 0.0,
                     have_super ? art.martingale.supermartingale[i].se : 0.0});
        }
        csv.save(dir / "martingale.csv");
    }
}

struct PdeArtifacts {
    GridOperator op;
    EigenTriple eigen;
    std::vector<std::pair<double, Field>> snapshots;
    RateFit rate;
    double mass_outflow = 0.0;
    double rho_refined = 0.0;
    double refine_drift = 0.0;
    bool refined = false;
};

PdeArtifacts run_pde_pipeline(const RunConfig& cfg, std::ostream& log) {
    PdeArtifacts art;
    log << "assembling operator on " << cfg.grid.size() << " cells\n";
    art.op = assemble(cfg.model, cfg.grid);
    log << "row-sum defect " << art.op.max_row_defect << "\n";
    art.eigen = leading_eigen(art.op);
    log << "leading eigenvalue rho = " << art.eigen.rho << " (residuals " << art.eigen.resid_h
        << ", " << art.eigen.resid_nu << ")\n";

    if (cfg.grid_refine) {
        const Grid fine = Grid::geometric(cfg.grid.bounds.front(), cfg.grid.bounds.back(),
                                          cfg.grid.size() * 2);
        const EigenTriple fe = leading_eigen(assemble(cfg.model, fine));
        art.rho_refined = fe.rho;
        art.refine_drift = std::fabs(fe.rho - art.eigen.rho);
        art.refined = true;
        log << "refined rho = " << fe.rho << " (drift " << art.refine_drift << ")\n";
    }

    // initial condition: unit bump in the cells around x0
    Field u0 = Field::Zero(static_cast<int>(cfg.grid.size()));
    {
        const double ref = cfg.model.x0() > 0 ? cfg.model.x0() : cfg.grid.nodes[cfg.grid.size() / 2];
        double mass = 0.0;
        for (std::size_t i = 0; i < cfg.grid.size(); ++i) {
            if (cfg.grid.nodes[i] >= 0.7 * ref && cfg.grid.nodes[i] <= 1.4 * ref) {
                u0[static_cast<int>(i)] = 1.0;
                mass += cfg.grid.widths[i];
            }
        }
        if (mass == 0) {
            u0[static_cast<int>(cfg.grid.size() / 2)] = 1.0;
            mass = cfg.grid.widths[cfg.grid.size() / 2];
        }
        u0 /= mass;
    }

    const std::size_t ns = cfg.pde_snapshots;
    Field u = u0;
    art.snapshots.emplace_back(0.0, u);
    const double step_t = cfg.pde_t / static_cast<double>(ns - 1);
    for (std::size_t k = 1; k < ns; ++k) {
        const EvolveResult res = evolve(art.op, u, step_t, cfg.pde_dt);
        u = res.u;
        art.mass_outflow += res.mass_outflow;
        art.snapshots.emplace_back(step_t * static_cast<double>(k), u);
    }
    art.rate = convergence_rate(art.snapshots, art.eigen.nu, cfg.grid);
    log << "distance decay rate beta = " << art.rate.beta << " (r2 " << art.rate.r2 << ")\n";
    return art;
}

void write_pde_outputs(const RunConfig& cfg, const PdeArtifacts& art) {
    const fs::path dir(cfg.out_dir);
    {
        Csv csv(cfg, "pde", {"x", "width", "h", "nu", "g"});
        for (std::size_t i = 0; i < cfg.grid.size(); ++i)
            csv.row({cfg.grid.nodes[i], cfg.grid.widths[i],
                     art.eigen.h[static_cast<int>(i)], art.eigen.nu[static_cast<int>(i)],
                     art.op.g[static_cast<int>(i)]});
        csv.save(dir / "eigen.csv");
    }
    for (std::size_t k = 0; k < art.snapshots.size(); ++k) {
        Csv csv(cfg, "pde", {"x", "u"});
        const auto& [t, u] = art.snapshots[k];
        for (std::size_t i = 0; i < cfg.grid.size(); ++i)
            csv.row({cfg.grid.nodes[i], u[static_cast<int>(i)]});
        char name[32];
        std::snprintf(name, sizeof(name), "snap_%03zu.csv", k);
        csv.save(dir / "snapshots" / name);
    }
    {
        // coordinate-format dump of the assembled operator for inspection
        std::string buf = "# gfkit pde operator rows=" + std::to_string(cfg.grid.size()) +
                          " config_hash=" + hash_hex(cfg.config_hash) + "\n";
        for (int k = 0; k < art.op.matrix.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(art.op.matrix, k); it; ++it)
                buf += std::to_string(it.row()) + " " + std::to_string(it.col()) + " " +
                       g17(it.value()) + "\n";
        write_text(dir / "operator.txt", buf);
    }
    json j = stamp(cfg, "pde");
    j["rho"] = art.eigen.rho;
    j["residual_h"] = art.eigen.resid_h;
    j["residual_nu"] = art.eigen.resid_nu;
    j["iterations"] = art.eigen.iterations;
    j["row_sum_defect"] = art.op.max_row_defect;
    j["mass_outflow"] = art.mass_outflow;
    j["bottom_redirect_max"] = art.op.max_bottom_redirect;
    if (art.refined) {
        j["rho_refined"] = art.rho_refined;
        j["refine_drift"] = art.refine_drift;
    }
    j["decay_rate"] = art.rate.beta;
    j["decay_r2"] = art.rate.r2;
    j["no_decay"] = art.rate.no_decay;
    write_json(dir / "rate.json", j);
}

json criteria_json(const RunConfig& cfg, const ValidationReport& val, const Thm11Result* t11,
                   const Thm12Result& t12, const CriteriaEntry* drift,
                   const CriteriaEntry* drift_quad, const ConstantCaseResult* cc) {
    json j = stamp(cfg, "criteria");
    j["validation"] = validation_json(val);
    if (t11) {
        j["uniform"] = entry_json(t11->entry);
        j["uniform"]["limsup_estimate"] = t11->limsup_estimate;
        j["uniform"]["stabilized"] = t11->stabilized;
    }
    json t12j;
    t12j["applicable"] = t12.applicable;
    t12j["a"] = t12.a;
    t12j["b"] = t12.b;
    t12j["x_inf"] = t12.x_inf;
    t12j["marginal"] = t12.marginal;
    json arr = json::array();
    for (const auto& e : t12.report.entries) arr.push_back(entry_json(e));
    t12j["entries"] = arr;
    j["drift_conditions"] = t12j;
    if (drift) j["lyapunov_drift"] = entry_json(*drift);
    if (drift_quad) j["lyapunov_drift_quadrature"] = entry_json(*drift_quad);
    if (cc) {
        json c;
        c["lambda_exact"] = cc->lambda_exact;
        c["thm_uniform_applicable"] = cc->thm11_applicable;
        c["alpha"] = cc->alpha;
        c["alpha_prime"] = cc->alpha_prime;
        json entries = json::array();
        for (const auto& e : cc->report.entries) entries.push_back(entry_json(e));
        c["entries"] = entries;
        j["constant_case"] = c;
    }
    return j;
}

void print_entry(std::ostream& log, const CriteriaEntry& e) {
    log << "  [" << status_name(e.status) << "] " << e.id << ": " << e.condition
        << " (margin " << e.margin << (e.marginal ? ", marginal" : "") << ")\n";
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands

int cmd_validate(const RunConfig& cfg, std::ostream& log) {
    const ValidationReport rep = validate(cfg.model);
    json j = stamp(cfg, "validate");
    j["entries"] = validation_json(rep);
    j["all_passed"] = rep.all_passed();
    write_json(fs::path(cfg.out_dir) / "validation.json", j);
    for (const auto& e : rep.entries)
        log << "  [" << status_name(e.status) << "] " << e.id
            << (e.note.empty() ? "" : ": " + e.note) << "\n";
    if (!rep.all_passed()) {
        log << "validation failed\n";
        return 1;
    }
    log << "validation passed\n";
    return 0;
}

int cmd_malthus(const RunConfig& cfg, std::ostream& log) {
    const MalthusArtifacts art = run_malthus_pipeline(cfg, log);
    write_malthus_outputs(cfg, art);
    // a missing bracket is a reported outcome, not a failure of the command
    return 0;
}

int cmd_pde(const RunConfig& cfg, std::ostream& log) {
    const PdeArtifacts art = run_pde_pipeline(cfg, log);
    write_pde_outputs(cfg, art);
    if (art.eigen.resid_h > 1e-8 || art.eigen.resid_nu > 1e-8) {
        log << "eigen solve did not reach the residual target\n";
        return 1;
    }
    return 0;
}

int cmd_criteria(const RunConfig& cfg, std::ostream& log) {
    const ValidationReport val = validate(cfg.model);

    McOptions opt{cfg.seed, cfg.workers, 0};
    const MalthusResult mr = solve_malthus(cfg.model, cfg.tol, cfg.budget, cfg.horizon, opt);
    std::optional<Thm11Result> t11;
    if (mr.status != MalthusResult::Status::NoBracket) {
        const double half = std::max(0.5 * (mr.ci_hi - mr.ci_lo), 0.5 * cfg.tol);
        t11 = check_thm11(cfg.model, mr.lambda, half);
        log << "uniform tail criterion:\n";
        print_entry(log, t11->entry);
    } else {
        log << "no Malthus bracket: skipping the uniform tail criterion\n";
    }

    const Thm12Result t12 = check_thm12(cfg.model, cfg.criteria_a, cfg.criteria_b);
    log << "drift criteria (a = " << t12.a << ", b = " << t12.b << "):\n";
    for (const auto& e : t12.report.entries) print_entry(log, e);

    std::optional<CriteriaEntry> drift, drift_quad;
    std::optional<ConstantCaseResult> cc;
    if (t12.applicable && t12.a > 0 && t12.b > 0) {
        const auto spec = derive_lyapunov_spec(cfg.model, t12.a, t12.b);
        if (spec) {
            const auto probes = geometric_points(spec->x_low * 1e-4, spec->x_high * 1e4, 256);
            drift = lyapunov_drift(cfg.model, *spec, probes);
            drift_quad = lyapunov_drift_quadrature(cfg.model, *spec, probes);
            log << "Lyapunov drift with x_low = " << spec->x_low << ", x_high = " << spec->x_high
                << ":\n";
            print_entry(log, *drift);
            print_entry(log, *drift_quad);
            if (cfg.model.constant_rates()) {
                cc = constant_case(cfg.model, *spec, probes);
                log << "constant-rate case (exact lambda " << cc->lambda_exact << "):\n";
                for (const auto& e : cc->report.entries) print_entry(log, e);
            }
        }
    }

    const json j = criteria_json(cfg, val, t11 ? &*t11 : nullptr, t12,
                                 drift ? &*drift : nullptr, drift_quad ? &*drift_quad : nullptr,
                                 cc ? &*cc : nullptr);
    write_json(fs::path(cfg.out_dir) / "criteria.json", j);
    return val.all_passed() ? 0 : 1;
}

int cmd_all(const RunConfig& cfg, std::ostream& log) {
    int rc = 0;

    log << "== validate ==\n";
    const ValidationReport val = validate(cfg.model);
    {
        json j = stamp(cfg, "validate");
        j["entries"] = validation_json(val);
        j["all_passed"] = val.all_passed();
        write_json(fs::path(cfg.out_dir) / "validation.json", j);
    }
    if (!val.all_passed()) {
        log << "validation failed; continuing to report what can be reported\n";
        rc = 1;
    }

    log << "== malthus ==\n";
    const MalthusArtifacts mart = run_malthus_pipeline(cfg, log);
    write_malthus_outputs(cfg, mart);

    log << "== pde ==\n";
    const PdeArtifacts pde = run_pde_pipeline(cfg, log);
    write_pde_outputs(cfg, pde);

    log << "== criteria ==\n";
    std::optional<Thm11Result> t11;
    if (mart.result.status != MalthusResult::Status::NoBracket) {
        const double half =
            std::max(0.5 * (mart.result.ci_hi - mart.result.ci_lo), 0.5 * cfg.tol);
        t11 = check_thm11(cfg.model, mart.result.lambda, half);
    }
    const Thm12Result t12 = check_thm12(cfg.model, cfg.criteria_a, cfg.criteria_b);
    std::optional<CriteriaEntry> drift, drift_quad;
    std::optional<ConstantCaseResult> cc;
    if (t12.applicable && t12.a > 0 && t12.b > 0) {
        if (const auto spec = derive_lyapunov_spec(cfg.model, t12.a, t12.b)) {
            const auto probes = geometric_points(spec->x_low * 1e-4, spec->x_high * 1e4, 256);
            drift = lyapunov_drift(cfg.model, *spec, probes);
            drift_quad = lyapunov_drift_quadrature(cfg.model, *spec, probes);
            if (cfg.model.constant_rates()) cc = constant_case(cfg.model, *spec, probes);
        }
    }
    write_json(fs::path(cfg.out_dir) / "criteria.json",
               criteria_json(cfg, val, t11 ? &*t11 : nullptr, t12, drift ? &*drift : nullptr,
                             drift_quad ? &*drift_quad : nullptr, cc ? &*cc : nullptr));

    log << "== cross-check ==\n";
    json cj = stamp(cfg, "all");
    cj["rho"] = pde.eigen.rho;
    bool cross_ok = true;
    if (mart.result.status != MalthusResult::Status::NoBracket) {
        const double lambda = mart.result.lambda;
        const double ci_half =
            std::max(0.5 * (mart.result.ci_hi - mart.result.ci_lo), 0.5 * cfg.tol);
        const double joint_tol =
            std::max(0.02 * std::fabs(lambda), ci_half + (pde.refined ? pde.refine_drift : 0.0));
        const double diff = std::fabs(pde.eigen.rho - lambda);
        cj["lambda"] = lambda;
        cj["abs_difference"] = diff;
        cj["joint_tolerance"] = joint_tol;
        const bool exponent_ok = diff <= joint_tol;
        cj["exponent_consistent"] = exponent_ok;
        cross_ok = cross_ok && exponent_ok;
        log << "rho = " << pde.eigen.rho << ", lambda = " << lambda << ", |diff| = " << diff
            << " vs tol " << joint_tol << (exponent_ok ? " ok" : " MISMATCH") << "\n";

        if (mart.have_profile) {
            // L1 distance between the normalised MC profile and the left eigenvector
            double dist = 0.0, mass = 0.0;
            for (std::size_t i = 0; i < cfg.grid.size(); ++i)
                mass += pde.eigen.nu[static_cast<int>(i)] * cfg.grid.widths[i];
            for (std::size_t i = 0; i < cfg.grid.size(); ++i) {
                const double a = mart.profile.nu_normalized[i];
                const double b = pde.eigen.nu[static_cast<int>(i)] / (mass > 0 ? mass : 1.0);
                dist += std::fabs(a - b) * cfg.grid.widths[i];
            }
            cj["profile_l1_distance"] = dist;
            const bool profile_ok = dist < 0.1;
            cj["profile_consistent"] = profile_ok;
            cross_ok = cross_ok && profile_ok;
            log << "profile L1 distance = " << dist << (profile_ok ? " ok" : " MISMATCH")
                << "\n";
        }
    } else {
        cj["lambda"] = nullptr;
        cj["note"] = "no Malthus bracket; cross-check limited to the spectral side";
    }
    write_json(fs::path(cfg.out_dir) / "crosscheck.json", cj);
    if (!cross_ok) rc = 1;
    return rc;
}

}  // namespace gf
