"""Rigid-body and hydrodynamic terms of the 6-DOF marine-craft equation.

The assembled dynamics solved by the engine are

    (M_RB + M_A) nudot = tau_act + w_rest(q)
                         - C_RB(nu) nu - C_A(nu_r) nu_r - D(nu_r) nu_r

with nu_r = nu - nu_c the current-relative body velocity.  C_RB is driven
by nu while the added-mass Coriolis and damping terms use nu_r; the
added-mass acceleration reaction is folded into the composite mass matrix
rather than applied as an explicit force (steady irrotational current, so
nudot_r = nudot).

w_rest is the *physical* weight+buoyancy wrench (positive body-z force for
a heavy vehicle at level trim), added on the right-hand side.

All functions broadcast over leading batch dimensions; see kinematics.py
for the conventions that keep per-row results batch-shape independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinematics import matvec, quat_rotate_inverse, skew

GRAVITY = 9.81
FLUID_DENSITY = 1000.0


class ParameterError(ValueError):
    """Raised for physically invalid vehicle or hydrodynamic parameters."""


def _check_spd(M: np.ndarray, name: str, semi: bool = False, tol: float = 1e-9):
    M = np.asarray(M, dtype=float)
    if not np.allclose(M, np.swapaxes(M, -1, -2), atol=1e-8):
        raise ParameterError(f"{name}: matrix must be symmetric")
    eig = np.linalg.eigvalsh(M)
    lo = -tol if semi else tol
    if np.any(eig < lo):
        kind = "positive semi-definite" if semi else "positive definite"
        raise ParameterError(f"{name}: matrix must be {kind} (min eigenvalue {eig.min():.3e})")


@dataclass
class RigidBodyParams:
    """Mass properties of the dry vehicle (plus any composed payload)."""

    mass: float
    inertia: np.ndarray  # 3x3 about the CoG, kg m^2
    r_g: np.ndarray = field(default_factory=lambda: np.zeros(3))  # CoG, body frame, m
    r_b: np.ndarray = field(default_factory=lambda: np.zeros(3))  # CoB, body frame, m
    displaced_volume: float = 0.0  # m^3

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float)
        self.r_g = np.asarray(self.r_g, dtype=float)
        self.r_b = np.asarray(self.r_b, dtype=float)
        if not self.mass > 0:
            raise ParameterError(f"mass: must be > 0, got {self.mass}")
        if self.displaced_volume < 0:
            raise ParameterError(f"displaced_volume: must be >= 0, got {self.displaced_volume}")
        _check_spd(self.inertia, "inertia")


@dataclass
class HydroCoeffs:
    """Added mass, damping, and fluid constants."""

    M_A: np.ndarray  # 6x6 added mass
    D_lin: np.ndarray  # 6x6 linear damping
    D_quad: np.ndarray  # 6x6 quadratic damping coefficients
    fluid_density: float = FLUID_DENSITY  # kg/m^3
    gravity: float = GRAVITY  # m/s^2

    def __post_init__(self):
        self.M_A = np.asarray(self.M_A, dtype=float)
        self.D_lin = np.asarray(self.D_lin, dtype=float)
        self.D_quad = np.asarray(self.D_quad, dtype=float)
        _check_spd(self.M_A, "M_A", semi=True)
        _check_spd(self.D_lin, "D_lin", semi=True)
        _check_spd(self.D_quad, "D_quad", semi=True)


def rb_mass_matrix(rb: RigidBodyParams) -> np.ndarray:
    """Rigid-body 6x6 mass matrix with CoG offset.

    [[ m I,        -m S(r_g)                  ]
     [ m S(r_g),    I_cg - m S(r_g) S(r_g)    ]]
    """
    m = rb.mass
    S = skew(rb.r_g)
    M = np.zeros((6, 6))
    M[:3, :3] = m * np.eye(3)
    M[:3, 3:] = -m * S
    M[3:, :3] = m * S
    M[3:, 3:] = rb.inertia - m * (S @ S)
    return M


def coriolis(M: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """Fossen Coriolis/centripetal matrix C(nu) for a 6x6 mass matrix.

    C = [[ 0,      -S(s1) ]
         [ -S(s1), -S(s2) ]]   with  s1 = M11 nu1 + M12 nu2,
                                     s2 = M21 nu1 + M22 nu2.

    Skew-symmetric by construction, so nu^T C(nu) nu = 0 for any M.
    """
    M = np.asarray(M, dtype=float)
    nu = np.asarray(nu, dtype=float)
    s1 = matvec(M[..., :3, :3], nu[..., :3]) + matvec(M[..., :3, 3:], nu[..., 3:])
    s2 = matvec(M[..., 3:, :3], nu[..., :3]) + matvec(M[..., 3:, 3:], nu[..., 3:])
    S1 = skew(s1)
    S2 = skew(s2)
    zero = np.zeros_like(S1)
    top = np.concatenate([zero, -S1], axis=-1)
    bottom = np.concatenate([-S1, -S2], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def coriolis_force(M: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """C(nu) nu evaluated directly through cross products (hot path).

    Equals coriolis(M, nu) @ nu without materializing the matrix.
    """
    nu1 = nu[..., :3]
    nu2 = nu[..., 3:]
    s1 = matvec(M[..., :3, :3], nu1) + matvec(M[..., :3, 3:], nu2)
    s2 = matvec(M[..., 3:, :3], nu1) + matvec(M[..., 3:, 3:], nu2)
    f = np.cross(nu2, s1)
    t = np.cross(nu1, s1) + np.cross(nu2, s2)
    return np.concatenate([f, t], axis=-1)


def damping_force(D_lin: np.ndarray, D_quad: np.ndarray, nu_r: np.ndarray) -> np.ndarray:
    """D(nu_r) nu_r with D(nu_r) = D_lin + D_quad column-scaled by |nu_r|.

    force_i = sum_j ( D_lin[i,j] + D_quad[i,j] |nu_r[j]| ) nu_r[j]
    """
    nu_r = np.asarray(nu_r, dtype=float)
    return matvec(D_lin, nu_r) + matvec(D_quad, np.abs(nu_r) * nu_r)


def restoring_wrench(
    q: np.ndarray,
    weight: np.ndarray,
    buoyancy: np.ndarray,
    r_g: np.ndarray,
    r_b: np.ndarray,
) -> np.ndarray:
    """Physical weight+buoyancy wrench in the body frame.

    Weight W acts along +z NED at r_g, buoyancy B along -z NED at r_b:

        f   = R(q)^T (0, 0, W - B)
        tau = r_g x f_W + r_b x f_B

    A heavy vehicle at level trim gets a positive (downward) body-z force.
    The returned wrench is *added* on the right-hand side of the dynamics,
    which makes a CoB-above-CoG vehicle self-righting.
    """
    weight = np.asarray(weight, dtype=float)
    buoyancy = np.asarray(buoyancy, dtype=float)
    down_body = quat_rotate_inverse(q, np.array([0.0, 0.0, 1.0]))
    f_w = weight[..., None] * down_body
    f_b = -buoyancy[..., None] * down_body
    f = f_w + f_b
    tau = np.cross(r_g, f_w) + np.cross(r_b, f_b)
    return np.concatenate([f, tau], axis=-1)


def restoring(pose, rb: RigidBodyParams, coeffs: HydroCoeffs) -> np.ndarray:
    """restoring_wrench for a Pose and scalar parameter set."""
    W = rb.mass * coeffs.gravity
    B = coeffs.fluid_density * coeffs.gravity * rb.displaced_volume
    return restoring_wrench(pose.q, W, B, rb.r_g, rb.r_b)


def hydro_wrench(pose, nu: np.ndarray, nu_c: np.ndarray,
                 rb: RigidBodyParams, coeffs: HydroCoeffs) -> np.ndarray:
    """Per-body hydrodynamic wrench (everything except actuators and M_RB terms).

    -C_A(nu_r) nu_r - D(nu_r) nu_r + w_rest, with nu_r = nu - nu_c.  The
    added-mass acceleration reaction is folded into the composite mass
    matrix and deliberately absent here.  Weight and buoyancy are computed
    jointly (the restoring split is notational only).
    """
    nu = np.asarray(nu, dtype=float)
    nu_r = nu - np.asarray(nu_c, dtype=float)
    out = -coriolis_force(coeffs.M_A, nu_r)
    out -= damping_force(coeffs.D_lin, coeffs.D_quad, nu_r)
    out += restoring(pose, rb, coeffs)
    return out


class MassMatrix:
    """Composite M_RB + M_A with a cached solve operator.

    The inverse is validated positive definite (Cholesky) at build time and
    reused for every step until parameters change; per-step LAPACK solves
    would dominate the CPU step budget.
    """

    def __init__(self, M: np.ndarray):
        M = np.asarray(M, dtype=float)
        _check_spd(M, "mass matrix")
        self.M = M
        self.M_inv = np.linalg.inv(M)

    @classmethod
    def from_params(cls, rb: RigidBodyParams, coeffs: HydroCoeffs) -> "MassMatrix":
        return cls(rb_mass_matrix(rb) + coeffs.M_A)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return matvec(self.M_inv, np.asarray(rhs, dtype=float))


def acceleration(M: MassMatrix, rhs: np.ndarray) -> np.ndarray:
    """Body acceleration nudot from the assembled right-hand side."""
    return M.solve(rhs)
