#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace gf {

/// Geometric mass grid. Cell i is [bounds[i], bounds[i+1]); nodes sit at the
/// geometric midpoint of their cell. Strictly increasing, strictly positive.
struct Grid {
    std::vector<double> nodes;   // size n
    std::vector<double> bounds;  // size n + 1
    std::vector<double> widths;  // size n

    static Grid geometric(double xmin, double xmax, std::size_t n);

    std::size_t size() const { return nodes.size(); }

    /// Cell containing x, or nullopt when x is outside [bounds.front(), bounds.back()).
    std::optional<std::size_t> cell_of(double x) const;
};

}  // namespace gf
