"""Ground truth by full system+bath unitary evolution and partial trace.

The composite propagator comes from one eigendecomposition, so the reference
trajectory carries no integrator error; the reduced state is rotated back to
the interaction picture with the same system Hamiltonian used on the
perturbative side.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from tclgen.baths import ExactBath
from tclgen.propagate import Trajectory, _monitors, propagate_state
from tclgen.superops import apply_superop, evaluate_mu
from tclgen.terms import ADJOINT, SCHRODINGER

DESK_DIM_BOUND = 4096


def thread_budget():
    """Worker cap for embarrassingly parallel sweeps (TCLGEN_THREADS)."""
    raw = os.environ.get("TCLGEN_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass
class FullModel:
    """Composite model: H = H_S x 1 + 1 x H_E + g A x phi, product state."""

    model: object
    rho_S0: np.ndarray

    def __post_init__(self):
        if not isinstance(self.model.bath, ExactBath):
            raise TypeError("the exact oracle needs an EXACT bath")
        self.rho_S0 = np.asarray(self.rho_S0, dtype=complex)
        bath = self.model.bath
        self.d_S = self.model.d_S
        self.d_E = bath.dim
        if self.d_S * self.d_E > DESK_DIM_BOUND:
            raise ValueError("composite dimension exceeds the desk bound")
        eye_s = np.eye(self.d_S)
        eye_e = np.eye(self.d_E)
        self.H_total = (np.kron(self.model.H_S, eye_e)
                        + np.kron(eye_s, bath.H_E)
                        + self.model.g * np.kron(self.model.A, bath.phi))
        self.rho_total0 = np.kron(self.rho_S0, bath.rho_E)


def partial_trace_bath(x, d_s, d_e):
    return np.einsum("aebe->ab", x.reshape(d_s, d_e, d_s, d_e))


def exact_reduced_trajectory(full, grid):
    """Reduced interaction-picture state from full unitary evolution."""
    e, v = np.linalg.eigh(full.H_total)
    rho0_t = v.conj().T @ full.rho_total0 @ v
    gaps = np.subtract.outer(e, e)
    phases = np.exp(-1j * gaps[None, :, :] * grid.times[:, None, None])
    rho_t = np.einsum("ij,tjk,lk->til", v, phases * rho0_t[None], v.conj())
    reduced = np.einsum("taebe->tab",
                        rho_t.reshape(-1, full.d_S, full.d_E,
                                      full.d_S, full.d_E))
    # rotate back to the interaction picture with the system Hamiltonian
    es, vs = np.linalg.eigh(full.model.H_S)
    red_tilde = np.einsum("ji,tjk,kl->til", vs.conj(), reduced, vs)
    sys_phases = np.exp(1j * np.subtract.outer(es, es)[None]
                        * grid.times[:, None, None])
    payload = np.einsum("ij,tjk,lk->til", vs, sys_phases * red_tilde, vs.conj())
    trace_dev, herm_residual, min_eig = _monitors(payload, 1.0)
    return Trajectory(grid.times.copy(), payload, trace_dev, herm_residual,
                      min_eig)


def trace_norm(x):
    return float(np.abs(np.linalg.svd(x, compute_uv=False)).sum())


def tcl_vs_exact_error(model, rho0, grid, N, quad=None, return_series=False):
    """max_t trace-norm distance between the truncated and exact dynamics."""
    tcl = propagate_state(model, rho0, grid, N, quad=quad)
    exact = exact_reduced_trajectory(FullModel(model, rho0), grid)
    series = np.array([trace_norm(a - b)
                       for a, b in zip(tcl.payload, exact.payload)])
    if return_series:
        return float(series.max()), series
    return float(series.max())


def scaling_probe(model, rho0, grid, N, couplings, quad_factory=None):
    """Truncation-order check: err(g) and log2(err(g)/err(g/2)) ratios.

    The expected ratio is N+1 when the first neglected expansion order is
    populated.  Couplings are processed in the given order; ratios pair
    each entry with a following entry equal to half of it.
    """
    if len(couplings) < 2:
        raise ValueError("need at least two couplings")

    def one(g):
        m = replace(model, g=float(g))
        quad = quad_factory(m) if quad_factory else None
        return tcl_vs_exact_error(m, rho0, grid, N, quad=quad)

    workers = thread_budget()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            errs = list(pool.map(one, couplings))
    else:
        errs = [one(g) for g in couplings]
    rows = [{"g": float(g), "err": float(err)}
            for g, err in zip(couplings, errs)]
    for k, row in enumerate(rows):
        row["ratio"] = None
        for other in rows[k + 1:]:
            if abs(other["g"] - 0.5 * row["g"]) <= 1e-12 * abs(row["g"]):
                row["ratio"] = float(np.log2(row["err"] / other["err"]))
                break
    return rows


def duality_check(model, O0, rho0, quad, orders=(1, 2, 3)):
    """Momentum-level duality residuals at the final grid time.

    For each order n: | Tr[O0 (-i)^n mu_n rho] - Tr[(i^n mu~_n O0) rho] |.
    """
    if isinstance(model.bath, ExactBath) and not model.bath.is_stationary():
        raise ValueError("duality check requires a stationary bath")
    i = quad.grid.M
    out = {}
    for n in orders:
        mu_n = evaluate_mu(n, i, model, quad, SCHRODINGER)
        mu_adj = evaluate_mu(n, i, model, quad, ADJOINT)
        lhs = np.trace(O0 @ apply_superop((-1j) ** n * mu_n, rho0))
        rhs = np.trace(apply_superop(1j ** n * mu_adj, O0) @ rho0)
        out[n] = float(abs(lhs - rhs))
    return out
