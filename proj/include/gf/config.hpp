#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "gf/coeffs.hpp"
#include "gf/grid.hpp"

namespace gf {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// INI-style configuration: [section] headers nest with dots, `key = value`
/// entries, `#`/`;` comments. Keys are addressed as "section.key". Every
/// diagnostic cites the file, line and key.
class ConfigDoc {
public:
    static ConfigDoc parse_file(const std::string& path);
    static ConfigDoc parse_string(const std::string& text, const std::string& name = "<config>");

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    /// Whitespace-separated list of numbers.
    std::vector<double> get_doubles(const std::string& key) const;
    std::vector<double> get_doubles(const std::string& key,
                                    const std::vector<double>& fallback) const;

    /// Throws listing the first entry never read by any getter (misspelled or
    /// misplaced keys surface instead of being silently ignored).
    void reject_unused() const;

    /// FNV-1a over the normalised key=value entries; stamped into outputs so
    /// runs can be tied back to their exact configuration.
    std::uint64_t content_hash() const;

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const;

private:
    struct Entry {
        std::string value;
        int line = 0;
    };
    const Entry* lookup(const std::string& key) const;
    std::map<std::string, Entry> entries_;
    std::string name_;
    mutable std::set<std::string> used_;
};

struct RunConfig {
    CoefficientModel model;
    double x0 = 1.0;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    std::size_t budget = 200000;
    double horizon = 60.0;
    double tol = 1e-4;
    std::size_t per_node = 2000;
    std::size_t martingale_paths = 20000;
    std::vector<double> martingale_times{0.5, 1.0, 2.0};
    double q_super_offset = 0.5;
    std::size_t occupation_paths = 20000;
    Grid grid;
    bool grid_refine = true;
    double pde_t = 2.0;
    double pde_dt = 0.01;
    std::size_t pde_snapshots = 6;
    std::optional<double> criteria_a, criteria_b;
    std::string out_dir = "out";
    std::uint64_t config_hash = 0;
};

struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::optional<std::string> out_dir;
};

/// Builds the coefficient model and run parameters from a parsed config.
/// The seed is mandatory; every other run key has a default. Unknown keys
/// are rejected.
RunConfig load_run_config(const ConfigDoc& doc, const CliOverrides& overrides = {});

}  // namespace gf
