#pragma once

#include <cstddef>
#include <vector>

#include "xray/common.hpp"

namespace xray {

// Uniform square grid of n x n nodes covering [-L, L]^2. Node (i, j) sits at
// (x(i), x(j)); flat index i * n + j.
struct Grid2D {
    int n = 0;
    double L = 1;

    double h() const { return 2 * L / (n - 1); }
    double x(int i) const { return -L + i * h(); }
    std::size_t size() const { return static_cast<std::size_t>(n) * n; }
    std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i) * n + j; }
};

// 4th-order derivative along axis (0: x1, 1: x2) of node data laid out as
// contiguous blocks of `block` values per node. Centered in the interior,
// one-sided 4th-order closures on the two outermost layers.
void fd_axis(const Grid2D& g, const cd* in, cd* out, int block, int axis);
void fd_axis(const Grid2D& g, const double* in, double* out, int block, int axis);

// Tensor-product cubic Lagrange interpolation on the 4 x 4 stencil around
// (x1, x2); shifted one-sided near the grid edge.
struct Stencil {
    int i0 = 0, j0 = 0;
    double wx[4], wy[4];
};
// false if the point lies outside the grid square.
bool make_stencil(const Grid2D& g, double x1, double x2, Stencil& st);

template <class T>
T interpolate(const Grid2D& g, const Stencil& st, const T* data, int block, int offset) {
    T acc{};
    for (int a = 0; a < 4; ++a) {
        T row{};
        for (int b = 0; b < 4; ++b) row += st.wy[b] * data[g.idx(st.i0 + a, st.j0 + b) * block + offset];
        acc += st.wx[a] * row;
    }
    return acc;
}

// Fraction of each node's dual cell lying in the disc of radius R.
std::vector<double> disc_coverage(const Grid2D& g, double R);

}  // namespace xray
