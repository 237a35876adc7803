"""Newton solver for the travelling-wave equation with symmetry
reduction, branch continuation in the speed, zero location, branch
persistence, and the perturb-and-resolve local-uniqueness experiment.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field as dc_field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .ansatz import AnsatzParams, build_two_vortex
from .field_core import (
    ComplexField,
    CutoffEta,
    Grid,
    bilinear_sample,
    circle_samples,
    fd_gradient,
    grid_l2,
    inner_product,
    load_field,
    save_field,
    symmetrize,
    symmetry_defect,
)
from .operators import (
    QuarterMaps,
    interior_to_real,
    linearized_matrix,
    real_to_interior,
    tw_residual_values,
)

MAX_SPEED = 0.2
SPURIOUS_ZERO_LEVEL = 0.3


@dataclass
class SolverConfig:
    """Newton-solver knobs; tolerances on the uniform-weight grid L2 norm."""

    newton_tol: float = 1e-9
    max_iter: int = 40
    max_halvings: int = 8
    lin_tol: float = 1e-12          # reserved for iterative Jacobian solves
    bc_mode: str = "dirichlet"      # or "modulus": lagged modulus-asymptotic edge
    r_ball: float = 10.0

    def __post_init__(self):
        if self.newton_tol <= 0 or self.lin_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.r_ball <= 5.0:
            raise ValueError("orthogonality-ball radius must exceed 5")
        if self.bc_mode not in ("dirichlet", "modulus"):
            raise ValueError(f"unknown boundary mode {self.bc_mode!r}")


@dataclass
class BranchEntry:
    c: float
    field: ComplexField
    half_separation: float
    residual_norm: float
    energy: float
    p2: float
    newton_steps: int = 0
    ring_anchor: float | None = None

    @property
    def zeros(self):
        return ((self.half_separation, 0.0), (-self.half_separation, 0.0))


@dataclass
class TravellingWaveBranch:
    """Ordered branch records; speeds strictly monotone."""

    entries: list
    config_hash: str = ""

    def __post_init__(self):
        cs = [e.c for e in self.entries]
        diffs = np.diff(cs)
        if len(cs) >= 2 and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValueError("branch speeds must be strictly monotone")

    def index_of(self, c: float) -> int:
        cs = np.array([e.c for e in self.entries])
        i = int(np.argmin(np.abs(cs - c)))
        if not math.isclose(cs[i], c, rel_tol=1e-9, abs_tol=1e-12):
            raise KeyError(f"no branch entry at speed {c}")
        return i


def residual(Q: ComplexField, c: float) -> ComplexField:
    """Travelling-wave residual; boundary rows are zero (Dirichlet data)."""
    return ComplexField(Q.grid, tw_residual_values(Q.values, Q.grid, c))


def winding_number(Q: ComplexField, center, radius: float = 1.0, n: int = 256) -> int:
    _, vals = circle_samples(Q, center, radius, n)
    ratio = vals / np.roll(vals, 1)
    total = float(np.sum(np.angle(ratio)))
    return int(round(total / (2.0 * np.pi)))


def _refine_zero(Q: ComplexField, x0, y0, max_steps: int = 40):
    """Sub-grid zero by 2-D Newton on the bilinear interpolant."""
    g = Q.grid
    h = max(g.hx, g.hy)
    x, y = float(x0), float(y0)
    for _ in range(max_steps):
        eps = 1e-7 * h
        v = bilinear_sample(Q, np.array([x, x + eps, x]), np.array([y, y, y + eps]))
        f = v[0]
        if abs(f) < 1e-13:
            break
        dx = (v[1] - v[0]) / eps
        dy = (v[2] - v[0]) / eps
        J = np.array([[dx.real, dy.real], [dx.imag, dy.imag]])
        try:
            step = np.linalg.solve(J, -np.array([f.real, f.imag]))
        except np.linalg.LinAlgError:
            break
        norm = float(np.hypot(*step))
        if norm > h:
            step *= h / norm
        x, y = x + step[0], y + step[1]
        if norm < 1e-12 * h:
            break
    return x, y


def locate_zeros(Q: ComplexField):
    """The two zeros of a converged field, refined to sub-grid accuracy.

    Verifies winding +-1 on radius-1 circles and that no node outside
    radius-2 balls around the zeros has |Q| below 0.3.
    """
    g = Q.grid
    mod = np.abs(Q.values)
    X, Y = g.mesh
    zeros = []
    for half in (X > 0, X < 0):
        masked = np.where(half, mod, np.inf)
        i, j = np.unravel_index(np.argmin(masked), mod.shape)
        zx, zy = _refine_zero(Q, g.x[i], g.y[j])
        zeros.append((zx, zy))
    zeros.sort(key=lambda z: -z[0])
    (zpx, zpy), (zmx, zmy) = zeros
    if zpx <= 0 or zmx >= 0:
        raise RuntimeError("could not find one zero in each half-plane")
    wp = winding_number(Q, zeros[0])
    wm = winding_number(Q, zeros[1])
    if (wp, wm) != (1, -1):
        raise RuntimeError(f"unexpected windings ({wp}, {wm}); want (+1, -1)")
    far = (np.hypot(X - zpx, Y - zpy) > 2.0) & (np.hypot(X - zmx, Y - zmy) > 2.0)
    if np.any(mod[far] < SPURIOUS_ZERO_LEVEL):
        raise RuntimeError("spurious low-modulus node away from the two zeros")
    return zeros[0], zeros[1]


def _modulus_asymptotic_edge(Q: ComplexField) -> None:
    """Lagged Robin-type update: push the edge modulus toward the 1/r^2
    asymptotic continuation of the adjacent ring (convergence studies)."""
    g = Q.grid
    v = Q.values
    X, Y = g.mesh
    r = np.hypot(X, Y)
    for edge, inner in ((np.s_[0, :], np.s_[1, :]), (np.s_[-1, :], np.s_[-2, :]),
                        (np.s_[:, 0], np.s_[:, 1]), (np.s_[:, -1], np.s_[:, -2])):
        vi = v[inner]
        mi = np.abs(vi)
        scale = np.ones_like(mi)
        ok = mi > 0.1
        target = 1.0 - (1.0 - mi[ok]) * (r[inner][ok] / np.maximum(r[edge][ok], 1.0)) ** 2
        scale[ok] = target / mi[ok]
        v[edge] = vi * scale


def newton_solve(Q0: ComplexField, c: float, config: SolverConfig,
                 enforce_symmetry: bool = True, check_zeros: bool = True,
                 quarter: QuarterMaps | None = None):
    """Damped Newton iteration on the travelling-wave residual.

    With symmetry enforcement the linear solves run on the symmetric
    quarter of the grid and the update is mirrored; without it the full
    interior system is factorized (used by the uniqueness experiment).
    Returns (field, info) with the residual history in ``info``.
    """
    if not (0.0 < c <= MAX_SPEED):
        raise ValueError(f"speed {c} outside (0, {MAX_SPEED}]")
    g = Q0.grid
    Q = symmetrize(Q0) if enforce_symmetry else Q0.copy()
    if enforce_symmetry and quarter is None:
        quarter = QuarterMaps(g)

    history = []
    rn = grid_l2(residual(Q, c), g)
    steps = 0
    for it in range(config.max_iter):
        history.append(rn)
        if rn <= config.newton_tol:
            break
        F = residual(Q, c)
        A = linearized_matrix(Q, c)
        b = -interior_to_real(F.values)
        if enforce_symmetry:
            Aq = quarter.reduce(A)
            bq = quarter.reduce_rhs(b)
            dq = spla.splu(Aq.tocsc()).solve(bq)
            dx = quarter.prolong(dq)
        else:
            dx = spla.splu(A.tocsc()).solve(b)
        delta = real_to_interior(dx, g)

        alpha, accepted = 1.0, False
        for _ in range(config.max_halvings + 1):
            trial = ComplexField(g, Q.values + alpha * delta)
            if config.bc_mode == "modulus":
                _modulus_asymptotic_edge(trial)
            rn_trial = grid_l2(residual(trial, c), g)
            if rn_trial < rn:
                Q, rn, accepted = trial, rn_trial, True
                break
            alpha *= 0.5
        steps += 1
        if not accepted:
            raise RuntimeError(
                f"Newton diverged at step {it}: residual {rn:.3e} would not "
                f"decrease under the damping schedule")
    else:
        raise RuntimeError(
            f"Newton did not reach tol {config.newton_tol:.1e} in "
            f"{config.max_iter} steps (residual {rn:.3e})")

    if check_zeros:
        locate_zeros(Q)
    info = {"steps": steps, "history": history, "residual": rn}
    return Q, info


def default_grid_rule(c: float, box_factor: float = 3.0, h_target: float = 0.4,
                      max_nx: int = 401) -> Grid:
    """Square box of half-width box_factor/c with spacing close to
    h_target, capped at max_nx nodes per side (odd counts)."""
    lx = box_factor / c
    nx = int(round(2.0 * lx / h_target)) + 1
    nx = min(nx, max_nx)
    if nx % 2 == 0:
        nx += 1
    return Grid(lx, lx, nx, nx)


def _set_ring(field: ComplexField, data: ComplexField) -> ComplexField:
    """Replace the boundary ring of ``field`` by the ring of ``data``."""
    v = field.values.copy()
    d = data.values
    v[0, :], v[-1, :], v[:, 0], v[:, -1] = d[0, :], d[-1, :], d[:, 0], d[:, -1]
    return ComplexField(field.grid, v)


def _resample(field: ComplexField, grid: Grid, fill: complex = 0.0) -> ComplexField:
    X, Y = grid.mesh
    xs = np.clip(X, field.grid.x[0], field.grid.x[-1])
    ys = np.clip(Y, field.grid.y[0], field.grid.y[-1])
    vals = bilinear_sample(field, xs.ravel(), ys.ravel(), check_inside=False)
    vals = vals.reshape(grid.nx, grid.ny)
    outside = (np.abs(X) > field.grid.x[-1]) | (np.abs(Y) > field.grid.y[-1])
    vals[outside] = fill
    return ComplexField(grid, vals)


def continue_branch(c_values, config: SolverConfig, profiles: dict,
                    grid_rule=default_grid_rule, anchors=None,
                    config_hash: str = "", progress=None) -> TravellingWaveBranch:
    """Solve the branch at the given (strictly decreasing) speeds.

    The first entry starts from the two-vortex ansatz at separation 1/c;
    later entries start from the previous solution (its correction to
    the ansatz transported to the new speed, resampled when the grid
    changes).

    ``anchors`` optionally maps each speed to the anchor speed whose
    grid and Dirichlet edge data it shares.  Entries used for centered
    speed derivatives must share the anchor of their main speed, so the
    boundary data does not move with c inside a derivative stencil.
    """
    from .linearization import energy, momentum

    c_values = list(c_values)
    if any(not (0 < c <= MAX_SPEED) for c in c_values):
        raise ValueError(f"speeds must lie in (0, {MAX_SPEED}]")
    if any(b >= a for a, b in zip(c_values, c_values[1:])):
        raise ValueError("speeds must be strictly decreasing")
    if anchors is None:
        anchor_of = lambda c: c
    elif callable(anchors):
        anchor_of = anchors
    else:
        anchor_of = dict(anchors).__getitem__

    entries = []
    prev = None          # correction of the last solution to its guess base
    quarters = {}
    for c in c_values:
        a = anchor_of(c)
        grid = grid_rule(a)
        key = (grid.nx, grid.ny)
        if key not in quarters:
            quarters[key] = QuarterMaps(grid)
        # Dirichlet edge data: the two-vortex far field at the anchor
        # speed.  (Pinning the raw vacuum value 1 on a 3/c box distorts
        # the phase by O(1) at the edge and Newton stalls; anchoring the
        # data inside a derivative triple keeps d/dc Q = 0 on the edge.)
        ring = build_two_vortex(AnsatzParams(1.0 / a, profiles[1], profiles[-1]),
                                grid) if a != c else None
        params = AnsatzParams(1.0 / c, profiles[1], profiles[-1])
        base = build_two_vortex(params, grid)
        if ring is not None:
            base = _set_ring(base, ring)
        if prev is None:
            guess = base
        else:
            # the correction is transported as its smooth far-field part;
            # near the (moving) cores it is small and resampling or core
            # drift would smear the steep structure
            gamma = prev.values if prev.grid == grid else _resample(prev, grid).values
            gamma = gamma * CutoffEta(((params.d, 0.0), (-params.d, 0.0)),
                                      r_in=3.0, r_out=6.0).on_grid(grid)
            guess = _set_ring(ComplexField(grid, base.values + gamma), base)
        try:
            Q, info = newton_solve(guess, c, config, quarter=quarters[key])
        except RuntimeError:
            try:
                Q, info = newton_solve(base, c, config, quarter=quarters[key])
            except RuntimeError as exc:
                raise RuntimeError(
                    f"branch continuation failed at c = {c}: {exc}") from exc
        zp, zm = locate_zeros(Q)
        if abs(zp[1]) > 2 * grid.hy or abs(zm[1]) > 2 * grid.hy:
            raise RuntimeError(f"zeros left the x1 axis at c = {c}")
        d_tilde = 0.5 * (zp[0] - zm[0])
        entries.append(BranchEntry(
            c=c, field=Q, half_separation=d_tilde,
            residual_norm=info["residual"], energy=energy(Q),
            p2=momentum(Q)[1], newton_steps=info["steps"], ring_anchor=a))
        prev = ComplexField(grid, Q.values - base.values)
        if progress is not None:
            progress(entries[-1])
    return TravellingWaveBranch(entries, config_hash=config_hash)


# ----------------------------------------------------------------------
# translation fitting and the local-uniqueness experiment

def shift_resample(Q: ComplexField, X) -> ComplexField:
    """Field of values Q(x - X) on the same grid (edge-clamped samples)."""
    g = Q.grid
    Xg, Yg = g.mesh
    xs = np.clip(Xg - X[0], g.x[0], g.x[-1])
    ys = np.clip(Yg - X[1], g.y[0], g.y[-1])
    vals = bilinear_sample(Q, xs.ravel(), ys.ravel(), check_inside=False)
    return ComplexField(g, vals.reshape(g.nx, g.ny))


def fit_translation(W: ComplexField, Q: ComplexField, refine: int = 3):
    """Best X minimizing the grid-L2 distance between W and Q(. - X)."""
    gx, gy = fd_gradient(Q)
    M = np.array([[inner_product(gx, gx), inner_product(gx, gy)],
                  [inner_product(gy, gx), inner_product(gy, gy)]])
    X = np.zeros(2)
    for _ in range(max(1, refine)):
        diff = ComplexField(Q.grid, W.values - shift_resample(Q, X).values)
        rhs = -np.array([inner_product(gx, diff), inner_product(gy, diff)])
        try:
            step = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError:
            break
        X = X + step
        if float(np.hypot(*step)) < 1e-14:
            break
    mism = grid_l2(ComplexField(Q.grid, W.values - shift_resample(Q, X).values),
                   Q.grid)
    return X, mism


def _perturbation(entry: BranchEntry, shape: str, rng) -> np.ndarray:
    """Unit-scale perturbation shapes for the uniqueness experiment."""
    Q = entry.field
    g = Q.grid
    X, Y = g.mesh
    zp = entry.zeros[0]
    bump = np.exp(-((X - zp[0]) ** 2 + Y**2) / 8.0)
    eta = CutoffEta(entry.zeros).on_grid(g)
    if shape == "bump_re":
        return bump.astype(complex)
    if shape == "bump_im":
        return 1j * bump
    if shape == "phase":
        return 1j * eta * Q.values * bump
    if shape == "mixed":
        # additive near the zeros, multiplicative at infinity
        psi = (0.7 + 0.3j) * bump
        return (1.0 - eta) * Q.values * psi + eta * Q.values * (np.exp(psi) - 1.0)
    if shape == "random":
        coeffs = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        waves = sum(co * np.exp(1j * (k1 * X + k2 * Y))
                    for co, (k1, k2) in zip(coeffs, [(0.3, 0.1), (0.1, 0.4),
                                                     (0.5, 0.2), (0.2, 0.3)]))
        env = np.exp(-(X**2 + Y**2) / (0.3 * g.lx) ** 2)
        w = waves * env
        return w / np.max(np.abs(w))
    raise ValueError(f"unknown perturbation shape {shape!r}")


def perturb_and_resolve(entry: BranchEntry, delta: float, config: SolverConfig,
                        shape: str = "bump_re", seed: int = 0):
    """Perturb a converged wave, re-solve without symmetry enforcement,
    and fit the result to a translate of the original.

    Reports the recovered translation X, the final mismatch to the
    fitted translate, and the Newton residual history.
    """
    if delta > 1e-2:
        raise ValueError("perturbation scale must stay at or below 1e-2")
    Q = entry.field
    rng = np.random.default_rng(seed)
    if delta == 0.0:
        Z0 = Q.copy()
    else:
        pert = _perturbation(entry, shape, rng)
        pert[0, :] = pert[-1, :] = pert[:, 0] = pert[:, -1] = 0.0
        Z0 = ComplexField(Q.grid, Q.values + delta * pert)
    W, info = newton_solve(Z0, entry.c, config, enforce_symmetry=False)
    X, mism = fit_translation(W, Q)
    floor = 10.0 * delta**2 + 100.0 * config.newton_tol
    report = {
        "X": X,
        "mismatch": mism,
        "residual_history": info["history"],
        "gain": float(np.hypot(*X)) / delta if delta > 0 else 0.0,
        "uniqueness_violation": bool(mism > floor),
    }
    return report


# ----------------------------------------------------------------------
# branch persistence

_DIAG_COLUMNS = ("c", "d_tilde", "residual", "energy", "p2", "newton_steps")


def _atomic_write(path, text: str) -> None:
    directory = os.path.dirname(str(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, str(path))
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def save_branch(branch: TravellingWaveBranch, outdir) -> None:
    """Branch directory: manifest + one field file per entry + a CSV of
    diagnostics."""
    outdir = str(outdir)
    os.makedirs(outdir, exist_ok=True)
    lines = [f"config_hash = {branch.config_hash}",
             f"n_entries = {len(branch.entries)}",
             "schema = branch-v1"]
    for k, e in enumerate(branch.entries):
        g = e.field.grid
        lines.append(f"entry_{k:03d} = c={e.c!r} nx={g.nx} ny={g.ny} lx={g.lx!r}")
        save_field(e.field, os.path.join(outdir, f"entry_{k:03d}.fld"), c=e.c,
                   extra={"d_tilde": repr(float(e.half_separation)),
                          "residual": repr(float(e.residual_norm)),
                          "energy": repr(float(e.energy)),
                          "p2": repr(float(e.p2)),
                          "newton_steps": int(e.newton_steps),
                          "ring_anchor": repr(float(e.ring_anchor if e.ring_anchor
                                                    is not None else e.c)),
                          "config_hash": branch.config_hash})
    _atomic_write(os.path.join(outdir, "manifest.txt"), "\n".join(lines) + "\n")
    rows = [",".join(_DIAG_COLUMNS)]
    for e in branch.entries:
        rows.append(",".join(
            repr(float(v)) for v in
            (e.c, e.half_separation, e.residual_norm, e.energy, e.p2))
            + f",{int(e.newton_steps)}")
    _atomic_write(os.path.join(outdir, "diagnostics.csv"), "\n".join(rows) + "\n")


def load_branch(outdir, verify: bool = True) -> TravellingWaveBranch:
    outdir = str(outdir)
    manifest = {}
    with open(os.path.join(outdir, "manifest.txt")) as fh:
        for line in fh:
            key, _, val = line.partition("=")
            if _:
                manifest[key.strip()] = val.strip()
    n = int(manifest["n_entries"])
    entries = []
    for k in range(n):
        f, c, meta = load_field(os.path.join(outdir, f"entry_{k:03d}.fld"),
                                verify=verify)
        entries.append(BranchEntry(
            c=c, field=f, half_separation=float(meta["d_tilde"]),
            residual_norm=float(meta["residual"]), energy=float(meta["energy"]),
            p2=float(meta["p2"]), newton_steps=int(meta.get("newton_steps", 0)),
            ring_anchor=float(meta.get("ring_anchor", c))))
    return TravellingWaveBranch(entries, config_hash=manifest.get("config_hash", ""))
