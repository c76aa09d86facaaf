#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace csc {

struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Point2 {
    double x = 0;
    double y = 0;
};

// Geometric ellipse: center, semi-axes a >= b > 0, rotation of the a-axis in [0, pi).
struct Ellipse {
    double cx = 0;
    double cy = 0;
    double a = 0;
    double b = 0;
    double theta = 0;

    // Interior test: <= 1 inside.
    double implicit_value(double x, double y) const {
        double ct = std::cos(theta), st = std::sin(theta);
        double dx = x - cx, dy = y - cy;
        double u = ct * dx + st * dy;
        double v = -st * dx + ct * dy;
        return (u * u) / (a * a) + (v * v) / (b * b);
    }
    bool contains(double x, double y) const { return implicit_value(x, y) <= 1.0; }
};

// Implicit conic A x^2 + B xy + C y^2 + D x + E y + F = 0, unit-norm coefficients.
struct ConicCoefficients {
    double A = 0, B = 0, C = 0, D = 0, E = 0, F = 0;

    double discriminant() const { return B * B - 4.0 * A * C; }

    void normalize() {
        double n = std::sqrt(A * A + B * B + C * C + D * D + E * E + F * F);
        if (n > 0) {
            A /= n; B /= n; C /= n; D /= n; E /= n; F /= n;
        }
    }

    double residual(double x, double y) const {
        return A * x * x + B * x * y + C * y * y + D * x + E * y + F;
    }
};

inline Ellipse conic_to_geometric(const ConicCoefficients& c) {
    if (c.discriminant() >= 0) throw FitError("conic is not an ellipse");
    // Center from grad = 0: [2A B; B 2C] [cx cy]^T = [-D -E]^T
    double det = 4.0 * c.A * c.C - c.B * c.B;
    double cx = (c.B * c.E - 2.0 * c.C * c.D) / det;
    double cy = (c.B * c.D - 2.0 * c.A * c.E) / det;
    // Constant term at the center
    double f0 = c.A * cx * cx + c.B * cx * cy + c.C * cy * cy + c.D * cx + c.E * cy + c.F;
    // Quadratic part eigen-decomposition
    Eigen::Matrix2d Q;
    Q << c.A, c.B / 2.0, c.B / 2.0, c.C;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(Q);
    Eigen::Vector2d lam = es.eigenvalues();
    // Semi-axis along eigenvector i: sqrt(-f0 / lambda_i)
    double s0 = -f0 / lam(0), s1 = -f0 / lam(1);
    if (s0 <= 0 || s1 <= 0) throw FitError("conic is degenerate");
    double ax0 = std::sqrt(s0), ax1 = std::sqrt(s1);
    Ellipse e;
    e.cx = cx;
    e.cy = cy;
    int major = ax0 >= ax1 ? 0 : 1;
    e.a = major == 0 ? ax0 : ax1;
    e.b = major == 0 ? ax1 : ax0;
    Eigen::Vector2d v = es.eigenvectors().col(major);
    e.theta = std::atan2(v(1), v(0));
    const double pi = std::numbers::pi;
    e.theta = std::fmod(e.theta, pi);
    if (e.theta < 0) e.theta += pi;
    if (e.theta >= pi) e.theta -= pi;
    return e;
}

// Direct least-squares ellipse fit with the constraint 4AC - B^2 = 1, solved with the
// numerically stable 3x3 block partition of the scatter matrix (Halir & Flusser).
// Input points are centered and scaled to unit RMS before solving.
inline ConicCoefficients fit_ellipse_direct(const std::vector<Point2>& points) {
    const std::size_t n = points.size();
    if (n < 6) throw FitError("insufficient points");

    double mx = 0, my = 0;
    for (const auto& p : points) {
        mx += p.x;
        my += p.y;
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double rms = 0;
    for (const auto& p : points) {
        double dx = p.x - mx, dy = p.y - my;
        rms += dx * dx + dy * dy;
    }
    rms = std::sqrt(rms / static_cast<double>(n));
    if (rms <= 0) throw FitError("degenerate configuration");
    const double s = 1.0 / rms;

    Eigen::MatrixXd D1(n, 3), D2(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
        double x = (points[i].x - mx) * s;
        double y = (points[i].y - my) * s;
        D1(static_cast<Eigen::Index>(i), 0) = x * x;
        D1(static_cast<Eigen::Index>(i), 1) = x * y;
        D1(static_cast<Eigen::Index>(i), 2) = y * y;
        D2(static_cast<Eigen::Index>(i), 0) = x;
        D2(static_cast<Eigen::Index>(i), 1) = y;
        D2(static_cast<Eigen::Index>(i), 2) = 1.0;
    }
    Eigen::Matrix3d S1 = D1.transpose() * D1;
    Eigen::Matrix3d S2 = D1.transpose() * D2;
    Eigen::Matrix3d S3 = D2.transpose() * D2;

    Eigen::FullPivLU<Eigen::Matrix3d> luS3(S3);
    if (!luS3.isInvertible()) throw FitError("degenerate configuration");
    Eigen::Matrix3d T = -luS3.solve(S2.transpose());

    Eigen::Matrix3d M = S1 + S2 * T;
    // C1^{-1} for the constraint matrix [[0,0,2],[0,-1,0],[2,0,0]]
    Eigen::Matrix3d Mr;
    Mr.row(0) = M.row(2) / 2.0;
    Mr.row(1) = -M.row(1);
    Mr.row(2) = M.row(0) / 2.0;

    Eigen::EigenSolver<Eigen::Matrix3d> es(Mr);
    int best = -1;
    for (int i = 0; i < 3; ++i) {
        if (std::abs(es.eigenvalues()(i).imag()) > 1e-12) continue;
        Eigen::Vector3d v = es.eigenvectors().col(i).real();
        double cond = 4.0 * v(0) * v(2) - v(1) * v(1);
        if (cond > 0) {
            best = i;
            break;
        }
    }
    if (best < 0) throw FitError("degenerate configuration");

    Eigen::Vector3d a1 = es.eigenvectors().col(best).real();
    Eigen::Vector3d a2 = T * a1;

    // De-normalize: substitute x' = (x-mx)s, y' = (y-my)s into the normalized conic.
    double A = a1(0) * s * s;
    double B = a1(1) * s * s;
    double C = a1(2) * s * s;
    double D = a2(0) * s - 2.0 * A * mx - B * my;
    double E = a2(1) * s - 2.0 * C * my - B * mx;
    double F = a2(2) + A * mx * mx + B * mx * my + C * my * my - (a2(0) * s) * mx - (a2(1) * s) * my;

    ConicCoefficients conic{A, B, C, D, E, F};
    if (conic.discriminant() >= 0) throw FitError("degenerate configuration");
    conic.normalize();
    return conic;
}

// Residual-trimming iterations on top of the direct fit. Each round drops the
// floor(trim_fraction * n) points with the largest absolute algebraic residual.
inline Ellipse fit_ellipse_robust(const std::vector<Point2>& points, double trim_fraction = 0.1,
                                  int iterations = 3) {
    if (trim_fraction < 0 || trim_fraction >= 0.5) throw FitError("trim_fraction must be in [0, 0.5)");
    std::vector<Point2> current = points;
    ConicCoefficients conic = fit_ellipse_direct(current);
    for (int it = 0; it < iterations; ++it) {
        std::size_t drop = static_cast<std::size_t>(std::floor(trim_fraction * static_cast<double>(current.size())));
        if (drop > 0) {
            std::vector<std::size_t> order(current.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
                return std::abs(conic.residual(current[i].x, current[i].y)) <
                       std::abs(conic.residual(current[j].x, current[j].y));
            });
            std::size_t keep = current.size() - drop;
            if (keep < 6) throw FitError("insufficient points");
            order.resize(keep);
            std::stable_sort(order.begin(), order.end());
            std::vector<Point2> kept;
            kept.reserve(keep);
            for (std::size_t i : order) kept.push_back(current[i]);
            current = std::move(kept);
        }
        conic = fit_ellipse_direct(current);
    }
    return conic_to_geometric(conic);
}

}  // namespace csc
