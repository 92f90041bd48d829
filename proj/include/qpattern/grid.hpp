#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qpattern/common.hpp"

namespace qpattern {

/// Axis-aligned rectangle of cells, (x0, y0) is the top-left corner.
struct Region {
    std::size_t x0 = 0;
    std::size_t y0 = 0;
    std::size_t w = 0;
    std::size_t h = 0;

    std::size_t area() const { return w * h; }
    bool contains(std::size_t x, std::size_t y) const {
        return x >= x0 && x < x0 + w && y >= y0 && y < y0 + h;
    }
    bool covers(const Region& o) const {
        return o.x0 >= x0 && o.y0 >= y0 && o.x0 + o.w <= x0 + w && o.y0 + o.h <= y0 + h;
    }
    bool intersects(const Region& o) const {
        return x0 < o.x0 + o.w && o.x0 < x0 + w && y0 < o.y0 + o.h && o.y0 < y0 + h;
    }
    friend bool operator==(const Region&, const Region&) = default;
};

/// N x M binary array, white = 1, black = 0. Cells are stored flattened with
/// z = x + N*y so that the coordinate register is a single s = n + m qubit string.
class CellGrid {
public:
    CellGrid() = default;

    /// All-black grid with N = 2^n columns and M = 2^m rows.
    CellGrid(int n, int m) : n_(n), m_(m) {
        if (n < 0 || m < 0 || n + m > 40) throw InvalidArgument("grid qubit counts out of range");
        cells_.assign(std::size_t{1} << (n + m), 0);
    }

    CellGrid(int n, int m, std::vector<std::uint8_t> cells) : n_(n), m_(m), cells_(std::move(cells)) {
        if (n < 0 || m < 0 || n + m > 40) throw InvalidArgument("grid qubit counts out of range");
        if (cells_.size() != (std::size_t{1} << (n + m)))
            throw InvalidArgument("cell count does not equal N*M");
        for (auto& c : cells_) {
            if (c > 1) throw InvalidArgument("cells must be 0 or 1");
        }
        for (auto c : cells_) white_ += c;
    }

    int n() const { return n_; }
    int m() const { return m_; }
    int qubits() const { return n_ + m_; }
    std::size_t width() const { return std::size_t{1} << n_; }
    std::size_t height() const { return std::size_t{1} << m_; }
    std::size_t size() const { return cells_.size(); }

    std::size_t white_count() const { return white_; }
    double rho() const { return cells_.empty() ? 0.0 : static_cast<double>(white_) / static_cast<double>(size()); }

    bool at(std::size_t z) const { return cells_[z] != 0; }
    bool at(std::size_t x, std::size_t y) const { return cells_[x + width() * y] != 0; }

    void set(std::size_t x, std::size_t y, bool white) { set(x + width() * y, white); }
    void set(std::size_t z, bool white) {
        const std::uint8_t v = white ? 1 : 0;
        white_ += v;
        white_ -= cells_[z];
        cells_[z] = v;
    }

    const std::vector<std::uint8_t>& cells() const { return cells_; }

    Region bounds() const { return Region{0, 0, width(), height()}; }

    friend bool operator==(const CellGrid& a, const CellGrid& b) {
        return a.n_ == b.n_ && a.m_ == b.m_ && a.cells_ == b.cells_;
    }

private:
    int n_ = 0;
    int m_ = 0;
    std::vector<std::uint8_t> cells_;
    std::size_t white_ = 0;
};

/// Generative description of a family of parallel lines inside a rectangle.
/// theta is the deviation from vertical: going down R rows shifts a line by
/// tan(theta)*R columns to the right.
struct LinePatternSpec {
    double spacing = 4.0;   // D, perpendicular distance between line centres
    double theta = 0.0;     // radians, [-pi/2, pi/2]
    Region region;
    double delta_rho = 0.25;
    std::size_t z0 = 0;     // anchor cell of the first line centre
    std::optional<double> line_width;  // full perpendicular width; default D/2

    double width_or_default() const { return line_width.value_or(spacing / 2.0); }
};

struct BackgroundSpec {
    double rho = 0.5;
    std::uint64_t seed = 0;
};

struct GridShape {
    int n = 5;
    int m = 5;
    std::size_t size() const { return std::size_t{1} << (n + m); }
};

inline double pattern_fraction(const LinePatternSpec& p, const GridShape& shape) {
    return static_cast<double>(p.region.area()) / static_cast<double>(shape.size());
}

inline void validate(const BackgroundSpec& bg) {
    if (!(bg.rho > 0.0 && bg.rho <= 1.0)) throw InvalidArgument("background rho must lie in (0, 1]");
}

inline void validate(const LinePatternSpec& p, const BackgroundSpec& bg, const GridShape& shape) {
    const std::size_t N = std::size_t{1} << shape.n;
    const std::size_t M = std::size_t{1} << shape.m;
    const Region& r = p.region;
    if (r.w == 0 || r.h == 0) throw InvalidArgument("pattern region is empty");
    if (r.x0 + r.w > N || r.y0 + r.h > M) throw InvalidArgument("pattern region lies outside the array");
    if (p.delta_rho < 0.0) throw InvalidArgument("delta_rho must be non-negative");
    if (bg.rho + p.delta_rho > 1.0 + 1e-12) throw InvalidArgument("rho + delta_rho exceeds 1");
    if (!(p.spacing >= 2.0) || p.spacing > static_cast<double>(std::min(N, M)))
        throw InvalidArgument("line spacing must satisfy 2 <= D <= min(N, M)");
    if (std::abs(p.theta) > std::numbers::pi / 2 + 1e-12) throw InvalidArgument("theta must lie in [-pi/2, pi/2]");
    if (p.z0 >= N * M) throw InvalidArgument("anchor z0 outside the array");
    if (!(p.width_or_default() > 0.0)) throw InvalidArgument("line width must be positive");
}

/// True when cell (x, y) lies within half a line width of some line centre.
/// Lines are the level sets (x - xa)cos(theta) - (y - ya)sin(theta) = l*D.
inline bool on_line(const LinePatternSpec& p, std::size_t anchor_x, std::size_t anchor_y, std::size_t x,
                    std::size_t y) {
    const double dx = static_cast<double>(x) - static_cast<double>(anchor_x);
    const double dy = static_cast<double>(y) - static_cast<double>(anchor_y);
    const double d = dx * std::cos(p.theta) - dy * std::sin(p.theta);
    const double phase = d / p.spacing;
    // 1e-9 keeps cells that sit exactly on a boundary on a fixed side despite rounding.
    const double frac = phase - std::floor(phase + 0.5 + 1e-9);
    const double half = 0.5 * p.width_or_default() / p.spacing;
    return frac >= -half - 1e-9 && frac < half - 1e-9;
}

/// Bernoulli background of density rho with an optional embedded line pattern.
/// Inside the pattern region on-line cells are white with probability
/// rho + delta_rho and the rest with a compensated probability so the region
/// keeps expected density rho.
inline CellGrid generate_grid(const GridShape& shape, const std::optional<LinePatternSpec>& pattern,
                              const BackgroundSpec& bg) {
    validate(bg);
    CellGrid grid(shape.n, shape.m);
    const std::size_t N = grid.width();
    const std::size_t M = grid.height();

    std::vector<std::uint8_t> line_mask;
    double p_on = bg.rho;
    double p_off = bg.rho;
    std::size_t ax = 0, ay = 0;
    if (pattern) {
        validate(*pattern, bg, shape);
        ax = pattern->z0 % N;
        ay = pattern->z0 / N;
        const Region& r = pattern->region;
        line_mask.assign(r.area(), 0);
        std::size_t on = 0;
        for (std::size_t y = 0; y < r.h; ++y) {
            for (std::size_t x = 0; x < r.w; ++x) {
                const bool l = on_line(*pattern, ax, ay, r.x0 + x, r.y0 + y);
                line_mask[x + r.w * y] = l ? 1 : 0;
                on += l ? 1 : 0;
            }
        }
        const double q = static_cast<double>(on) / static_cast<double>(r.area());
        p_on = bg.rho + pattern->delta_rho;
        p_off = q < 1.0 ? (bg.rho - q * p_on) / (1.0 - q) : bg.rho;
        p_off = std::clamp(p_off, 0.0, 1.0);
    }

    Rng rng(bg.seed);
    for (std::size_t y = 0; y < M; ++y) {
        for (std::size_t x = 0; x < N; ++x) {
            double p = bg.rho;
            if (pattern && pattern->region.contains(x, y)) {
                const Region& r = pattern->region;
                p = line_mask[(x - r.x0) + r.w * (y - r.y0)] ? p_on : p_off;
            }
            // One draw per cell, in z order, regardless of p, so streams stay aligned.
            const double u = uniform01(rng);
            if (u < p) grid.set(x, y, true);
        }
    }
    return grid;
}

inline std::size_t flatten(std::size_t x, std::size_t y, const CellGrid& grid) {
    if (x >= grid.width() || y >= grid.height()) throw InvalidArgument("coordinates outside the array");
    return x + grid.width() * y;
}

inline std::pair<std::size_t, std::size_t> unflatten(std::size_t z, const CellGrid& grid) {
    if (z >= grid.size()) throw InvalidArgument("cell index outside the array");
    return {z % grid.width(), z / grid.width()};
}

/// Swap rows and columns: output(x', y') = input(y', x').
inline CellGrid transpose(const CellGrid& g) {
    CellGrid t(g.m(), g.n());
    const std::size_t N = g.width();
    const std::size_t M = g.height();
    for (std::size_t y = 0; y < M; ++y)
        for (std::size_t x = 0; x < N; ++x)
            if (g.at(x, y)) t.set(y, x, true);
    return t;
}

/// Strictly increasing list of the flattened indices of all white cells.
inline std::vector<std::size_t> point_list(const CellGrid& g) {
    std::vector<std::size_t> pts;
    pts.reserve(g.white_count());
    for (std::size_t z = 0; z < g.size(); ++z)
        if (g.at(z)) pts.push_back(z);
    return pts;
}

inline CellGrid subgrid(const CellGrid& g, const Region& r) {
    if (!is_pow2(r.w) || !is_pow2(r.h)) throw InvalidArgument("subgrid dimensions must be powers of two");
    if (!g.bounds().covers(r)) throw InvalidArgument("subgrid region lies outside the array");
    CellGrid out(log2_exact(r.w), log2_exact(r.h));
    for (std::size_t y = 0; y < r.h; ++y)
        for (std::size_t x = 0; x < r.w; ++x)
            if (g.at(r.x0 + x, r.y0 + y)) out.set(x, y, true);
    return out;
}

/// A width x height array generated as above and padded with black cells to
/// the next power-of-two shape, like a non-power-of-two input file.
inline CellGrid generate_padded_grid(std::size_t width, std::size_t height,
                                     const std::optional<LinePatternSpec>& pattern, const BackgroundSpec& bg) {
    if (width == 0 || height == 0) throw InvalidArgument("empty array");
    const GridShape shape{log2_exact(next_pow2(width)), log2_exact(next_pow2(height))};
    if (pattern && (pattern->region.x0 + pattern->region.w > width || pattern->region.y0 + pattern->region.h > height))
        throw InvalidArgument("pattern region lies outside the array");
    CellGrid g = generate_grid(shape, pattern, bg);
    for (std::size_t y = 0; y < g.height(); ++y)
        for (std::size_t x = 0; x < g.width(); ++x)
            if (x >= width || y >= height) g.set(x, y, false);
    return g;
}

/// Embed a width x height bit array (row-major) in the smallest power-of-two
/// grid, padding with black cells.
inline CellGrid pad_to_pow2(std::size_t width, std::size_t height, const std::vector<std::uint8_t>& bits) {
    if (width == 0 || height == 0) throw InvalidArgument("empty array");
    if (bits.size() != width * height) throw InvalidArgument("bit count does not match dimensions");
    CellGrid g(log2_exact(next_pow2(width)), log2_exact(next_pow2(height)));
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            if (bits[x + width * y]) g.set(x, y, true);
    return g;
}

// Text format: PBM-style "P1" magic, optional '#' comment lines, "N M", then
// M rows of N digits. Unlike PBM, 1 means white (a point).

inline void write_grid(std::ostream& os, const CellGrid& g, const std::vector<std::string>& comments = {}) {
    os << "P1\n";
    for (const auto& c : comments) os << "# " << c << '\n';
    os << g.width() << ' ' << g.height() << '\n';
    std::string row(g.width(), '0');
    for (std::size_t y = 0; y < g.height(); ++y) {
        for (std::size_t x = 0; x < g.width(); ++x) row[x] = g.at(x, y) ? '1' : '0';
        os << row << '\n';
    }
}

inline CellGrid read_grid(std::istream& is) {
    std::string line;
    auto next_content = [&](std::string& out) {
        while (std::getline(is, out)) {
            const auto first = out.find_first_not_of(" \t\r");
            if (first == std::string::npos || out[first] == '#') continue;
            return true;
        }
        return false;
    };
    if (!next_content(line) || line.substr(0, 2) != "P1") throw InvalidArgument("grid file: missing P1 header");
    std::istringstream rest(line.substr(2));
    std::size_t width = 0, height = 0;
    if (!(rest >> width >> height)) {
        if (!next_content(line)) throw InvalidArgument("grid file: missing dimensions");
        std::istringstream dims(line);
        if (!(dims >> width >> height)) throw InvalidArgument("grid file: malformed dimensions");
    }
    if (width == 0 || height == 0 || width > (1u << 20) || height > (1u << 20))
        throw InvalidArgument("grid file: dimensions out of range");
    std::vector<std::uint8_t> bits;
    bits.reserve(width * height);
    char c;
    while (bits.size() < width * height && is.get(c)) {
        if (c == '0' || c == '1') {
            bits.push_back(static_cast<std::uint8_t>(c - '0'));
        } else if (c == '#') {
            std::getline(is, line);
        } else if (c != ' ' && c != '\n' && c != '\r' && c != '\t') {
            throw InvalidArgument(std::string("grid file: unexpected character '") + c + "'");
        }
    }
    if (bits.size() != width * height) throw InvalidArgument("grid file: truncated cell data");
    return pad_to_pow2(width, height, bits);
}

}  // namespace qpattern
