#pragma once

#include <iosfwd>
#include <string>

#include "gf/config.hpp"

namespace gf {

/// Exit codes shared by all commands: 0 success, 1 hard failure (assumption
/// violations, solver breakdown, failed cross-check), 2 config errors (raised
/// as ConfigError before any command runs).
int cmd_validate(const RunConfig& cfg, std::ostream& log);
int cmd_malthus(const RunConfig& cfg, std::ostream& log);
int cmd_pde(const RunConfig& cfg, std::ostream& log);
int cmd_criteria(const RunConfig& cfg, std::ostream& log);
int cmd_all(const RunConfig& cfg, std::ostream& log);

/// 17-significant-digit decimal form: round-trips doubles so outputs are
/// byte-stable across runs and worker counts.
std::string g17(double v);

}  // namespace gf
