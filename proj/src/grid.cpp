#include "xray/grid.hpp"

#include <algorithm>
#include <cmath>

namespace xray {

namespace {

template <class T>
void fd_axis_impl(const Grid2D& g, const T* in, T* out, int block, int axis) {
    const int n = g.n;
    if (n < 5) throw ConfigError("fd_axis: need at least 5 nodes per axis");
    const double inv = 1.0 / (12.0 * g.h());
    auto at = [&](int a, int b) -> const T* {
        return axis == 0 ? in + g.idx(a, b) * block : in + g.idx(b, a) * block;
    };
    for (int b = 0; b < n; ++b) {
        for (int a = 0; a < n; ++a) {
            T* o = axis == 0 ? out + g.idx(a, b) * block : out + g.idx(b, a) * block;
            if (a >= 2 && a <= n - 3) {
                const T *m2 = at(a - 2, b), *m1 = at(a - 1, b), *p1 = at(a + 1, b), *p2 = at(a + 2, b);
                for (int k = 0; k < block; ++k) o[k] = (-p2[k] + 8.0 * p1[k] - 8.0 * m1[k] + m2[k]) * inv;
            } else if (a == 0) {
                const T *f0 = at(0, b), *f1 = at(1, b), *f2 = at(2, b), *f3 = at(3, b), *f4 = at(4, b);
                for (int k = 0; k < block; ++k)
                    o[k] = (-25.0 * f0[k] + 48.0 * f1[k] - 36.0 * f2[k] + 16.0 * f3[k] - 3.0 * f4[k]) * inv;
            } else if (a == 1) {
                const T *f0 = at(0, b), *f1 = at(1, b), *f2 = at(2, b), *f3 = at(3, b), *f4 = at(4, b);
                for (int k = 0; k < block; ++k)
                    o[k] = (-3.0 * f0[k] - 10.0 * f1[k] + 18.0 * f2[k] - 6.0 * f3[k] + f4[k]) * inv;
            } else if (a == n - 2) {
                const T *f0 = at(n - 1, b), *f1 = at(n - 2, b), *f2 = at(n - 3, b), *f3 = at(n - 4, b),
                        *f4 = at(n - 5, b);
                for (int k = 0; k < block; ++k)
                    o[k] = -(-3.0 * f0[k] - 10.0 * f1[k] + 18.0 * f2[k] - 6.0 * f3[k] + f4[k]) * inv;
            } else {
                const T *f0 = at(n - 1, b), *f1 = at(n - 2, b), *f2 = at(n - 3, b), *f3 = at(n - 4, b),
                        *f4 = at(n - 5, b);
                for (int k = 0; k < block; ++k)
                    o[k] = -(-25.0 * f0[k] + 48.0 * f1[k] - 36.0 * f2[k] + 16.0 * f3[k] - 3.0 * f4[k]) * inv;
            }
        }
    }
}

void lagrange4(double t, double w[4]) {
    // nodes at -1, 0, 1, 2
    w[0] = -t * (t - 1) * (t - 2) / 6;
    w[1] = (t + 1) * (t - 1) * (t - 2) / 2;
    w[2] = -(t + 1) * t * (t - 2) / 2;
    w[3] = (t + 1) * t * (t - 1) / 6;
}

}  // namespace

void fd_axis(const Grid2D& g, const cd* in, cd* out, int block, int axis) { fd_axis_impl(g, in, out, block, axis); }
void fd_axis(const Grid2D& g, const double* in, double* out, int block, int axis) {
    fd_axis_impl(g, in, out, block, axis);
}

bool make_stencil(const Grid2D& g, double x1, double x2, Stencil& st) {
    const double h = g.h(), eps = 1e-12 * g.L;
    if (x1 < -g.L - eps || x1 > g.L + eps || x2 < -g.L - eps || x2 > g.L + eps) return false;
    auto axis = [&](double x, int& i0, double w[4]) {
        double s = (x + g.L) / h;
        int c = static_cast<int>(std::floor(s));
        c = std::clamp(c, 1, g.n - 3);  // stencil c-1..c+2 inside the grid
        lagrange4(s - c, w);
        i0 = c - 1;
    };
    axis(x1, st.i0, st.wx);
    axis(x2, st.j0, st.wy);
    return true;
}

std::vector<double> disc_coverage(const Grid2D& g, double R) {
    std::vector<double> cov(g.size(), 0.0);
    const double h = g.h();
    const int sub = 64;
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j) {
            double cx = g.x(i), cy = g.x(j);
            double fx = std::abs(cx) + h / 2, fy = std::abs(cy) + h / 2;
            double nx = std::max(0.0, std::abs(cx) - h / 2), ny = std::max(0.0, std::abs(cy) - h / 2);
            double c;
            if (fx * fx + fy * fy <= R * R) c = 1;
            else if (nx * nx + ny * ny >= R * R) c = 0;
            else {
                int cnt = 0;
                for (int a = 0; a < sub; ++a)
                    for (int b = 0; b < sub; ++b) {
                        double px = cx - h / 2 + (a + 0.5) * h / sub, py = cy - h / 2 + (b + 0.5) * h / sub;
                        if (px * px + py * py <= R * R) ++cnt;
                    }
                c = static_cast<double>(cnt) / (sub * sub);
            }
            cov[g.idx(i, j)] = c;
        }
    return cov;
}

}  // namespace xray
