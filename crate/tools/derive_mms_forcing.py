#!/usr/bin/env python3
"""Symbolic derivation of the manufactured-solution forcing terms.

The manufactured target is the steady 2D field set

    rho   = 2 + 0.1 sin(2 pi x) sin(2 pi y)
    u     = (0.1 sin(2 pi y), 0.1 sin(2 pi x))
    theta = 1 + 0.1 cos(2 pi x)

with p = rho * theta and e = c_v * theta. The forcing triple (g_rho, g_m,
g_e) is chosen so these fields solve

    d_t rho            + div(rho u)                                = g_rho
    d_t (rho u)        + div(rho u x u) + grad p - div S           = g_m
    d_t (c_v rho theta) + c_v div(rho theta u) - kappa lap theta
        - (2 mu |D(u)|^2 + lambda |div u|^2 - p div u)             = g_e

where S = 2 mu D(u) + lambda (div u) I and D(u) is the symmetric gradient.
The target is time independent, so the d_t terms vanish. Running this script
prints the simplified forcing expressions; the Rust implementation in
crates/nsfv/src/mms.rs evaluates the same closed forms and is cross-checked
against finite differences of the governing equations in its unit tests.
"""
import sympy as sp

x, y, cv, mu, lam, kappa = sp.symbols("x y c_v mu lambda kappa", real=True)
tp = 2 * sp.pi

rho = 2 + sp.Rational(1, 10) * sp.sin(tp * x) * sp.sin(tp * y)
u = sp.Matrix([sp.Rational(1, 10) * sp.sin(tp * y), sp.Rational(1, 10) * sp.sin(tp * x)])
theta = 1 + sp.Rational(1, 10) * sp.cos(tp * x)
p = rho * theta

def div(v):
    return sp.diff(v[0], x) + sp.diff(v[1], y)

def grad(f):
    return sp.Matrix([sp.diff(f, x), sp.diff(f, y)])

def lap(f):
    return sp.diff(f, x, 2) + sp.diff(f, y, 2)

gradu = sp.Matrix([[sp.diff(u[0], x), sp.diff(u[0], y)],
                   [sp.diff(u[1], x), sp.diff(u[1], y)]])
D = (gradu + gradu.T) / 2
divu = div(u)
S = 2 * mu * D + lam * divu * sp.eye(2)

g_rho = sp.simplify(div(rho * u))
conv = sp.Matrix([div(sp.Matrix([rho * u[0] * u[0], rho * u[0] * u[1]])),
                  div(sp.Matrix([rho * u[1] * u[0], rho * u[1] * u[1]]))])
visc = sp.Matrix([sp.diff(S[0, 0], x) + sp.diff(S[0, 1], y),
                  sp.diff(S[1, 0], x) + sp.diff(S[1, 1], y)])
g_m = sp.simplify(conv + grad(p) - visc)
diss = 2 * mu * sum(D[i, j] ** 2 for i in range(2) for j in range(2)) + lam * divu ** 2
g_e = sp.simplify(cv * div(rho * theta * u) - kappa * lap(theta) - (diss - p * divu))

print("div u      =", sp.simplify(divu))
print("g_rho      =", g_rho)
print("g_m[0]     =", g_m[0])
print("g_m[1]     =", g_m[1])
print("g_e        =", g_e)
