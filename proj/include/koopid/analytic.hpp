#pragma once

#include "koopid/errors.hpp"
#include "koopid/linalg.hpp"

namespace koopid {

// A two-state polynomial system whose dynamics close exactly under the
// observables (x1, x2, x1^2):
//   x1+ = a x1
//   x2+ = b x2 - c x1^2
// It serves as a ground-truth oracle for what "lifting to a linear system"
// means, including the constraint the lifted initial condition must satisfy
// for the linear solutions to map back to solutions of the original system.
struct PolySystem {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
};

inline Vec poly_step(const PolySystem& sys, const Vec& x) {
    if (x.size() != 2) fail(ErrorCode::Shape, "poly_step: state must have length 2");
    return Vec{sys.a * x[0], sys.b * x[1] - sys.c * x[0] * x[0]};
}

// Lift (x1, x2) -> (x1, x2, x1^2).
inline Vec poly_lift(const Vec& x) {
    if (x.size() != 2) fail(ErrorCode::Shape, "poly_lift: state must have length 2");
    return Vec{x[0], x[1], x[0] * x[0]};
}

// The 3x3 matrix propagating the lifted state:
//   [ a  0   0 ]
//   [ 0  b  -c ]
//   [ 0  0  a^2]
inline Mat poly_koopman(const PolySystem& sys) {
    Mat a(3, 3);
    a(0, 0) = sys.a;
    a(1, 1) = sys.b;
    a(1, 2) = -sys.c;
    a(2, 2) = sys.a * sys.a;
    return a;
}

// Residual of the manifold relation z3 = z1^2. Zero exactly on lifted
// states; lifted dynamics keep it zero, arbitrary z0 generally do not.
inline double constraint_psi(const Vec& z) {
    if (z.size() != 3) fail(ErrorCode::Shape, "constraint_psi: expected length 3");
    return z[0] * z[0] - z[2];
}

}  // namespace koopid
