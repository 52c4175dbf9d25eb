#include "gf/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gf {

Grid Grid::geometric(double xmin, double xmax, std::size_t n) {
    if (!(xmin > 0) || !(xmax > xmin) || n < 2)
        throw std::invalid_argument("Grid::geometric: need 0 < xmin < xmax and n >= 2");
    Grid g;
    g.nodes.resize(n);
    g.bounds.resize(n + 1);
    g.widths.resize(n);
    const double step = std::log(xmax / xmin) / static_cast<double>(n);
    for (std::size_t i = 0; i <= n; ++i)
        g.bounds[i] = xmin * std::exp(step * static_cast<double>(i));
    g.bounds.front() = xmin;
    g.bounds.back() = xmax;
    for (std::size_t i = 0; i < n; ++i) {
        g.nodes[i] = std::sqrt(g.bounds[i] * g.bounds[i + 1]);
        g.widths[i] = g.bounds[i + 1] - g.bounds[i];
    }
    return g;
}

std::optional<std::size_t> Grid::cell_of(double x) const {
    if (x < bounds.front() || x >= bounds.back()) return std::nullopt;
    auto it = std::upper_bound(bounds.begin(), bounds.end(), x);
    return static_cast<std::size_t>(it - bounds.begin()) - 1;
}

}  // namespace gf
