#pragma once

// Two-sector kicked magnetic field, spin algebra and sector frames shared by
// the classical map and the quantum propagator.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace spinpump {

/// Sign of the spin-field coupling. `Positive`: the kick is p += cos(theta) dB/dx
/// and the azimuth precesses by -B, the dynamics of V = -gamma s.B.
/// `Negative` reverses both (V = +gamma s.B).
enum class CouplingSign { Positive, Negative };

inline double coupling_factor(CouplingSign s) { return s == CouplingSign::Positive ? 1.0 : -1.0; }

struct ModelParams {
    double a = 4.0;   // width of each field sector
    double A1 = 1.0;  // amplitude, sector 1 (field along lab y, x < 0)
    double A2 = 1.0;  // amplitude, sector 2 (field along lab z, x > 0)
    double T = 1.0;
    double m0 = 1.0;
    double gamma = 1.0;
    double spin_norm = 1.0;
    double hbar = 0.25;
    double muB = 1.0;
    double phi_kick = 0.0;  // kick phase 2 pi t_in / T
    CouplingSign sign = CouplingSign::Positive;

    /// Throws std::invalid_argument naming the violated invariant.
    void validate() const {
        auto need = [](bool ok, const char* what) {
            if (!ok) throw std::invalid_argument(std::string("ModelParams invariant violated: ") + what);
        };
        need(std::isfinite(a) && a > 0, "a > 0");
        need(std::isfinite(T) && T > 0, "T > 0");
        need(std::isfinite(m0) && m0 > 0, "m0 > 0");
        need(std::isfinite(hbar) && hbar > 0, "hbar > 0");
        need(std::isfinite(spin_norm) && spin_norm > 0, "spin_norm > 0");
        need(std::isfinite(A1) && std::isfinite(A2), "A1, A2 finite");
        need(std::isfinite(gamma) && std::isfinite(muB), "gamma, muB finite");
        need(std::isfinite(phi_kick), "phi_kick finite");
    }
};

struct Vec3 {
    double x = 0, y = 0, z = 0;

    friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator*(double s, Vec3 v) { return {s * v.x, s * v.y, s * v.z}; }
    friend Vec3 operator-(Vec3 v) { return {-v.x, -v.y, -v.z}; }
    friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 v) { return std::sqrt(dot(v, v)); }

using SpinVector = Vec3;

enum class Sector { S1, S2, Outside };

/// Local right-handed triad whose y-axis is the sector's field direction.
/// S1 is the lab frame. S2 is the image of S1 under the pi rotation about
/// (0,1,1)/sqrt2 that maps x -> -x, y <-> z, so the two sectors are exchanged
/// exactly by the reflection symmetry of the field.
struct SectorFrame {
    Sector sector = Sector::Outside;
    Vec3 ex, ey, ez;

    Vec3 field_axis() const { return ey; }
};

inline SectorFrame frame_of(Sector s) {
    switch (s) {
        case Sector::S1: return {Sector::S1, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
        case Sector::S2: return {Sector::S2, {-1, 0, 0}, {0, 0, 1}, {0, 1, 0}};
        case Sector::Outside: break;
    }
    return {Sector::Outside, {}, {}, {}};
}

/// Sector containing x. x = 0 and |x| >= a are Outside.
inline Sector sector_of(double x, double a) {
    if (x < 0 && x > -a) return Sector::S1;
    if (x > 0 && x < a) return Sector::S2;
    return Sector::Outside;
}

/// Position relative to the centre of sector s.
inline double sector_offset(double x, Sector s, double a) {
    return s == Sector::S1 ? x + 0.5 * a : x - 0.5 * a;
}

/// C-infinity bump exp(-1/((a/2)^2 - x^2)) supported on |x| < a/2.
inline double envelope(double x, double a) {
    const double h = 0.5 * a;
    const double d = h * h - x * x;
    if (!(std::abs(x) < h) || d <= 0) return 0.0;
    return std::exp(-1.0 / d);
}

struct FieldPair {
    double B1 = 0, B2 = 0;
};

inline FieldPair field(double x, const ModelParams& p) {
    return {p.A1 * envelope(x + 0.5 * p.a, p.a), p.A2 * envelope(x - 0.5 * p.a, p.a)};
}

/// Relative guard band at the support edge inside which the gradient is
/// reported as zero; the envelope has underflowed long before it.
inline constexpr double kGradientGuard = 1e-4;

inline double sector_gradient(double xs, double amplitude, double a) {
    const double h = 0.5 * a;
    if (std::abs(xs) >= h - kGradientGuard * a) return 0.0;
    const double d = h * h - xs * xs;
    return -2.0 * xs * amplitude * std::exp(-1.0 / d) / (d * d);
}

inline FieldPair field_gradient(double x, const ModelParams& p) {
    return {sector_gradient(x + 0.5 * p.a, p.A1, p.a), sector_gradient(x - 0.5 * p.a, p.A2, p.a)};
}

/// Field magnitude and its x-derivative in whichever sector contains x.
struct SectorField {
    Sector sector = Sector::Outside;
    double B = 0, dB = 0;
};

inline SectorField sector_field(double x, const ModelParams& p) {
    const Sector s = sector_of(x, p.a);
    if (s == Sector::Outside) return {};
    const double amp = s == Sector::S1 ? p.A1 : p.A2;
    const double xs = sector_offset(x, s, p.a);
    return {s, amp * envelope(xs, p.a), sector_gradient(xs, amp, p.a)};
}

struct SpinAngles {
    double theta = 0, phi = 0;
};

/// (theta, phi) of s in the sector frame, with s = |s| (sin t sin f, cos t, sin t cos f).
/// phi is in (-pi, pi] and is 0 at the poles.
inline SpinAngles spin_to_angles(const SpinVector& s, const SectorFrame& frame) {
    if (frame.sector == Sector::Outside) throw std::invalid_argument("spin_to_angles: no frame outside the field sectors");
    const double n = norm(s);
    if (!(n > 0)) throw std::invalid_argument("spin_to_angles: zero spin");
    const double lx = dot(s, frame.ex), ly = dot(s, frame.ey), lz = dot(s, frame.ez);
    const double theta = std::acos(std::clamp(ly / n, -1.0, 1.0));
    double phi = (lx == 0.0 && lz == 0.0) ? 0.0 : std::atan2(lx, lz);
    if (phi <= -std::numbers::pi) phi = std::numbers::pi;
    return {theta, phi};
}

inline SpinVector angles_to_spin(double theta, double phi, const SectorFrame& frame, double spin_norm = 1.0) {
    if (frame.sector == Sector::Outside) throw std::invalid_argument("angles_to_spin: no frame outside the field sectors");
    const double st = std::sin(theta);
    return spin_norm * (st * std::sin(phi) * frame.ex + std::cos(theta) * frame.ey + st * std::cos(phi) * frame.ez);
}

/// Right-handed rotation of s about a unit axis (Rodrigues).
inline SpinVector rotate_spin(const SpinVector& s, const Vec3& axis, double angle) {
    const double c = std::cos(angle), sn = std::sin(angle);
    const double kd = dot(axis, s);
    return c * s + sn * cross(axis, s) + (kd * (1.0 - c)) * axis;
}

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double phi) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double r = std::remainder(phi, two_pi);
    if (r <= -std::numbers::pi) r += two_pi;
    return r;
}

}  // namespace spinpump
