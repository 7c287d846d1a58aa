#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "spinpump/model.hpp"

using namespace spinpump;

namespace {
// independent bump: exp(-1/((a/2)^2 - u^2)) for |u| < a/2
double bump(double u, double a) {
    const double h = a / 2;
    return std::abs(u) < h ? std::exp(-1.0 / (h * h - u * u)) : 0.0;
}
}  // namespace

TEST(Field, EnvelopeMatchesClosedForm) {
    ModelParams p;
    p.A1 = 2.0;
    p.A2 = 0.5;
    for (double x : {-3.9, -3.0, -2.0, -1.1, -0.2, 0.3, 1.7, 2.0, 3.5}) {
        const FieldPair f = field(x, p);
        EXPECT_NEAR(f.B1, 2.0 * bump(x + 2.0, 4.0), 1e-15);
        EXPECT_NEAR(f.B2, 0.5 * bump(x - 2.0, 4.0), 1e-15);
    }
    EXPECT_NEAR(field(-2.0, p).B1, 2.0 * std::exp(-0.25), 1e-15);
    EXPECT_EQ(field(-4.0, p).B1, 0.0);
    EXPECT_EQ(field(0.0, p).B1, 0.0);
    EXPECT_EQ(field(5.0, p).B2, 0.0);
}

TEST(Field, GradientMatchesFiniteDifference) {
    ModelParams p;
    p.A1 = 1.3;
    for (double x : {-3.5, -2.7, -2.0, -1.2, 0.6, 2.4, 3.3}) {
        const double h = 1e-6;
        const FieldPair g = field_gradient(x, p);
        const double d1 = (field(x + h, p).B1 - field(x - h, p).B1) / (2 * h);
        const double d2 = (field(x + h, p).B2 - field(x - h, p).B2) / (2 * h);
        EXPECT_NEAR(g.B1, d1, 1e-7 * std::max(1.0, std::abs(d1)));
        EXPECT_NEAR(g.B2, d2, 1e-7 * std::max(1.0, std::abs(d2)));
    }
    EXPECT_EQ(field_gradient(-2.0, p).B1, 0.0);
}

TEST(Field, SectorsAndFrames) {
    EXPECT_EQ(sector_of(-1.0, 4.0), Sector::S1);
    EXPECT_EQ(sector_of(1.0, 4.0), Sector::S2);
    EXPECT_EQ(sector_of(0.0, 4.0), Sector::Outside);
    EXPECT_EQ(sector_of(-4.0, 4.0), Sector::Outside);
    EXPECT_EQ(sector_of(4.5, 4.0), Sector::Outside);
    for (Sector s : {Sector::S1, Sector::S2}) {
        const SectorFrame f = frame_of(s);
        EXPECT_NEAR(dot(f.ex, f.ey), 0, 1e-15);
        EXPECT_NEAR(dot(f.ey, f.ez), 0, 1e-15);
        const Vec3 c = cross(f.ex, f.ey);
        EXPECT_NEAR(norm(c - f.ez), 0, 1e-15) << "frame must be right-handed";
    }
    EXPECT_EQ(frame_of(Sector::S1).field_axis(), (Vec3{0, 1, 0}));
    EXPECT_EQ(frame_of(Sector::S2).field_axis(), (Vec3{0, 0, 1}));
}

TEST(Spin, AnglesRoundTrip) {
    for (Sector s : {Sector::S1, Sector::S2})
        for (double th : {0.1, 0.7, 1.5, 2.9})
            for (double ph : {-3.0, -1.0, 0.0, 0.5, 3.1}) {
                const SpinVector v = angles_to_spin(th, ph, frame_of(s), 2.0);
                EXPECT_NEAR(norm(v), 2.0, 1e-14);
                const SpinAngles a = spin_to_angles(v, frame_of(s));
                EXPECT_NEAR(a.theta, th, 1e-12);
                EXPECT_NEAR(a.phi, ph, 1e-12);
            }
    // field-aligned spin sits at the pole
    const SpinAngles pole = spin_to_angles({0, 0, 1}, frame_of(Sector::S2));
    EXPECT_EQ(pole.theta, 0.0);
    EXPECT_EQ(pole.phi, 0.0);
    EXPECT_THROW(spin_to_angles({0, 1, 0}, frame_of(Sector::Outside)), std::invalid_argument);
    EXPECT_THROW(spin_to_angles({0, 0, 0}, frame_of(Sector::S1)), std::invalid_argument);
}

TEST(Spin, RotationIsRightHandedAndNormPreserving) {
    const Vec3 r = rotate_spin({1, 0, 0}, {0, 0, 1}, std::numbers::pi / 2);
    EXPECT_NEAR(r.x, 0, 1e-15);
    EXPECT_NEAR(r.y, 1, 1e-15);
    const Vec3 s{0.3, -0.4, 0.866};
    const Vec3 ax = (1.0 / std::sqrt(3.0)) * Vec3{1, 1, 1};
    EXPECT_NEAR(norm(rotate_spin(s, ax, 1.234)), norm(s), 1e-15);
    const Vec3 back = rotate_spin(rotate_spin(s, ax, 0.7), ax, -0.7);
    EXPECT_NEAR(norm(back - s), 0, 1e-15);
}

TEST(Spin, WrapAngle) {
    EXPECT_NEAR(wrap_angle(3 * std::numbers::pi / 2), -std::numbers::pi / 2, 1e-15);
    EXPECT_NEAR(wrap_angle(-std::numbers::pi), std::numbers::pi, 1e-15);
    EXPECT_NEAR(wrap_angle(0.3 + 8 * std::numbers::pi), 0.3, 1e-12);
}

TEST(Params, ValidationNamesInvariant) {
    ModelParams p;
    EXPECT_NO_THROW(p.validate());
    p.a = -1;
    try {
        p.validate();
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("a > 0"), std::string::npos);
    }
    p = ModelParams{};
    p.hbar = 0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = ModelParams{};
    p.A1 = NAN;
    EXPECT_THROW(p.validate(), std::invalid_argument);
}
