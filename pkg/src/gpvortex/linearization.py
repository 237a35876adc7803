"""Linearized operator around a travelling wave, its quadratic forms,
the four symmetry directions, and the energy/momentum diagnostics.

The quadratic forms are assembled from cutoff-split blocks.  Every
multiplicative (psi) block is an exact pointwise rewrite of the
corresponding additive (phi) integrand: the hatted derivative of
psi = phi/Q along each stencil direction is *defined* as the residual
(D phi - D Q psi)/Q, so the split recombines identically for any cutoff
and the form equals the plain discrete form and the matrix Rayleigh
quotient to round-off.  The cutoff therefore only organizes the
bookkeeping into blocks that are individually integrable in the
continuum limit; the value is cutoff-independent by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field_core import (
    ComplexField,
    CutoffEta,
    fd_gradient,
    fd_laplacian,
    grid_l2,
    inner_product,
    mult_ratio,
    resolution_floor,
)

PROP12_COLUMNS = (
    "c", "energy", "p2", "dE_dc", "dP2_dc", "rel_dE_identity",
    "B_dx1", "B_dx2", "c2_B_dc", "B_drot",
    "resid_dc_rhs", "resid_dc_dir", "resid_drot_rhs", "resid_drot_dir",
    "curl_ratio",
)


def apply_L(phi: ComplexField, Q: ComplexField, c: float) -> ComplexField:
    """-lap phi - ic d2 phi - (1-|Q|^2) phi + 2 Re(conj(Q) phi) Q."""
    if phi.grid != Q.grid:
        raise ValueError("fields live on different grids")
    lap = fd_laplacian(phi).values
    d2 = np.gradient(phi.values, phi.grid.hy, axis=1, edge_order=2)
    q2 = Q.values.real**2 + Q.values.imag**2
    out = (-lap - 1j * c * d2 - (1.0 - q2) * phi.values
           + 2.0 * (np.conj(Q.values) * phi.values).real * Q.values)
    return ComplexField(phi.grid, out)


# ----------------------------------------------------------------------
# quadratic forms

def _eta_values(eta, grid) -> np.ndarray:
    if eta is None:
        return np.ones((grid.nx, grid.ny))
    if isinstance(eta, CutoffEta):
        return eta.on_grid(grid)
    return np.asarray(eta, dtype=float)


def _edge_blocks(phi, Q, psi, mask, eta_n, h, axis):
    """Cutoff-split one-direction gradient energy, closed as the
    interior-row pairing with the second-difference stencil.

    Interior edges carry |D phi|^2, split exactly via the hatted psi
    difference defined by D phi = (D Q) psi_w + Q_e hat.  The two edges
    touching the boundary ring carry the Abel-summation closure terms
    Re(D phi conj(phi_inner))/h, so that the total equals
    sum_interior Re(-(d^2 phi) conj(phi)) for arbitrary ring values (in
    particular the form vanishes on the phase direction i Q up to the
    solver residual).  Boundary edges are booked as additive."""
    if axis == 1:
        phi, Q, psi, mask, eta_n = (a.T for a in (phi, Q, psi, mask, eta_n))
    # drop the perpendicular boundary columns (their nodes are not rows
    # of the interior pairing)
    phi, Q, psi, mask, eta_n = (a[:, 1:-1] for a in (phi, Q, psi, mask, eta_n))
    dphi = (phi[1:] - phi[:-1]) / h
    add = (np.sum((dphi[0] * np.conj(phi[1])).real)
           - np.sum((dphi[-1] * np.conj(phi[-2])).real)) / h
    dphi = dphi[1:-1]
    dQ = (Q[2:-1] - Q[1:-2]) / h
    psi_w = psi[1:-2]
    Q_e = Q[2:-1]
    mask_e = mask[2:-1] & mask[1:-2]
    eta_e = np.where(mask_e, eta_n[1:-2], 0.0)
    hat = np.zeros_like(dphi)
    np.divide(dphi - dQ * psi_w, Q_e, out=hat, where=mask_e)
    add += np.sum((1.0 - eta_e) * np.abs(dphi) ** 2)
    mult = np.sum(eta_e * (np.abs(dQ) ** 2 * np.abs(psi_w) ** 2
                           + np.abs(Q_e) ** 2 * np.abs(hat) ** 2))
    cross = np.sum(eta_e * 2.0 * (dQ * psi_w * np.conj(Q_e * hat)).real)
    return add, mult, cross


def form_blocks(phi: ComplexField, Q: ComplexField, c: float, eta=None) -> dict:
    """Cutoff-split blocks of the quadratic form; their sum is the form,
    equal to the interior pairing of the linearized operator."""
    if phi.grid != Q.grid:
        raise ValueError("fields live on different grids")
    g = phi.grid
    w = g.hx * g.hy
    pv, qv = phi.values, Q.values
    psi, mask = mult_ratio(pv, qv, resolution_floor(g))
    eta_n = _eta_values(eta, g) * mask

    ax, mx, cx = _edge_blocks(pv, qv, psi, mask, eta_n, g.hx, 0)
    ay, my, cy = _edge_blocks(pv, qv, psi, mask, eta_n, g.hy, 1)

    inner = np.s_[1:-1, 1:-1]
    q2 = (qv.real**2 + qv.imag**2)[inner]
    re_qphi = (np.conj(qv[inner]) * pv[inner]).real
    pot = -(1.0 - q2) * np.abs(pv[inner]) ** 2 + 2.0 * re_qphi**2
    eta_i = eta_n[inner]
    pot_add = np.sum((1.0 - eta_i) * pot)
    pot_mult = np.sum(eta_i * pot)

    d2phi = (pv[1:-1, 2:] - pv[1:-1, :-2]) / (2.0 * g.hy)
    d2Q = (qv[1:-1, 2:] - qv[1:-1, :-2]) / (2.0 * g.hy)
    psi_i, qv_i, mask_i = psi[inner], qv[inner], mask[inner]
    hat2 = np.zeros_like(d2phi)
    np.divide(d2phi - d2Q * psi_i, qv_i, out=hat2, where=mask_i)
    tr_add = -c * np.sum((1.0 - eta_i) * (1j * d2phi * np.conj(pv[inner])).real)
    tr_mult = -c * np.sum(eta_i * ((1j * d2Q * np.conj(qv_i)).real
                                   * np.abs(psi_i) ** 2
                                   + q2 * (1j * hat2 * np.conj(psi_i)).real))

    return {
        "grad_additive": (ax + ay) * w,
        "grad_multiplicative": (mx + my) * w,
        "grad_interface": (cx + cy) * w,
        "potential_additive": pot_add * w,
        "potential_multiplicative": pot_mult * w,
        "transport_additive": tr_add * w,
        "transport_multiplicative": tr_mult * w,
    }


def quadratic_form_B(phi: ComplexField, Q: ComplexField, c: float, eta=None) -> float:
    """Quadratic form of the linearized operator, assembled as the sum of
    the cutoff-split quadrature blocks (value independent of the cutoff)."""
    return float(sum(form_blocks(phi, Q, c, eta).values()))


def quadratic_form_Bexp(phi: ComplexField, Q: ComplexField, c: float,
                        eta=None) -> float:
    """Expanded quadratic form: same block algebra with the additive part
    confined to the cutoff holes, finite for phi = i Q."""
    blocks = form_blocks(phi, Q, c, eta)
    return float(sum(blocks.values()))


def quadratic_form_naive(phi: ComplexField, Q: ComplexField, c: float) -> float:
    """Plain discrete form |grad phi|^2 - (1-|Q|^2)|phi|^2
    + 2 Re^2(conj(Q) phi) - Re(ic d2 phi conj(phi)); the gradient energy
    is the stencil-edge sum so that the value matches <L phi, phi> exactly
    on fields vanishing at the boundary."""
    g = phi.grid
    w = g.hx * g.hy
    pv, qv = phi.values, Q.values
    gsum = (np.sum(np.abs(np.diff(pv, axis=0)) ** 2) / g.hx**2
            + np.sum(np.abs(np.diff(pv, axis=1)) ** 2) / g.hy**2)
    q2 = qv.real**2 + qv.imag**2
    pot = np.sum(-(1.0 - q2) * np.abs(pv) ** 2
                 + 2.0 * (np.conj(qv) * pv).real ** 2)
    d2phi = np.gradient(pv, g.hy, axis=1, edge_order=2)
    tr = -c * np.sum((1j * d2phi * np.conj(pv)).real)
    return float((gsum + pot + tr) * w)


# ----------------------------------------------------------------------
# energy and momentum

def energy(Q: ComplexField) -> float:
    """Ginzburg-Landau energy 1/2 int |grad Q|^2 + 1/4 int (1-|Q|^2)^2."""
    g = Q.grid
    w = g.hx * g.hy
    v = Q.values
    kin = (np.sum(np.abs(np.diff(v, axis=0)) ** 2) / g.hx**2
           + np.sum(np.abs(np.diff(v, axis=1)) ** 2) / g.hy**2)
    q2 = v.real**2 + v.imag**2
    return float(0.5 * kin * w + 0.25 * np.sum((1.0 - q2) ** 2) * w)


def momentum(Q: ComplexField) -> tuple[float, float]:
    """(P1, P2) with Pk = 1/2 <i dk Q, Q - 1>."""
    g = Q.grid
    w = g.hx * g.hy
    v = Q.values
    qm1 = np.conj(v) - 1.0
    p = []
    for axis, h in ((0, g.hx), (1, g.hy)):
        dv = np.gradient(v, h, axis=axis, edge_order=2)
        p.append(0.5 * float(np.sum((1j * dv * qm1).real) * w))
    return p[0], p[1]


# ----------------------------------------------------------------------
# the four symmetry directions

@dataclass
class DirectionSet:
    """Translation, speed-modulus, and rotation directions at one branch
    entry, with the scalings that keep them order one as c -> 0."""

    dx1: ComplexField
    dx2: ComplexField
    dc: ComplexField
    drot: ComplexField
    scale_c: float
    scale_rot: float
    provenance: dict


def _grad4(v: np.ndarray, h: float, axis: int) -> np.ndarray:
    """4th-order centered first derivative, 2nd-order near the edges."""
    out = np.gradient(v, h, axis=axis, edge_order=2)
    vv = np.moveaxis(v, axis, 0)
    oo = np.moveaxis(out, axis, 0)
    oo[2:-2] = (-vv[4:] + 8.0 * vv[3:-1] - 8.0 * vv[1:-3] + vv[:-4]) / (12.0 * h)
    return out


def rotation_direction(Q: ComplexField) -> ComplexField:
    """-x_perp . grad Q = x2 d1 Q - x1 d2 Q, pointwise.

    Built with 4th-order differences: the x-lever amplifies the stencil
    error of the gradient by the vortex separation, which at 2nd order
    pushes the form value on this direction out of its asymptotic
    corridor on the coarser desk grids."""
    g = Q.grid
    X, Y = g.mesh
    gx = _grad4(Q.values, g.hx, 0)
    gy = _grad4(Q.values, g.hy, 1)
    return ComplexField(g, Y * gx - X * gy)


def build_directions(branch, index: int) -> DirectionSet:
    """Directions at branch entry ``index``; the speed derivative is the
    centered difference over the two neighbouring entries (same grid)."""
    entries = branch.entries
    if index <= 0 or index >= len(entries) - 1:
        raise ValueError("need branch neighbours on both sides")
    lo, mid, hi = entries[index + 1], entries[index], entries[index - 1]
    if lo.field.grid != mid.field.grid or hi.field.grid != mid.field.grid:
        raise ValueError("neighbouring entries must share the grid")
    c = mid.c
    dc_step = max(abs(hi.c - c), abs(c - lo.c))
    if dc_step > 0.1 * c + 1e-15:
        raise ValueError(f"neighbour spacing {dc_step} exceeds 0.1 c")
    Q = mid.field
    gx, gy = fd_gradient(Q)
    dc_vals = (hi.field.values - lo.field.values) / (hi.c - lo.c)
    return DirectionSet(
        dx1=gx, dx2=gy, dc=ComplexField(Q.grid, dc_vals),
        drot=rotation_direction(Q), scale_c=c * c, scale_rot=c,
        provenance={"c": c, "c_lo": lo.c, "c_hi": hi.c})


def _interior_l2(field: ComplexField) -> float:
    v = field.values[1:-1, 1:-1]
    return float(np.sqrt(np.sum(np.abs(v) ** 2)
                         * field.grid.hx * field.grid.hy))


def direction_identity_residuals(dirs: DirectionSet, Q: ComplexField,
                                 c: float) -> dict:
    """Residuals of L(dc) = i dx2 and L(drot) = -ic dx1 on interior nodes.

    Reported both relative to the right-hand side and relative to the
    direction field itself (the rotation direction carries an x-lever
    that amplifies stencil commutators, so only the direction-relative
    number is resolution-robust at desk scale).
    """
    g = Q.grid
    r1 = ComplexField(g, apply_L(dirs.dc, Q, c).values - 1j * dirs.dx2.values)
    r2 = ComplexField(g, apply_L(dirs.drot, Q, c).values + 1j * c * dirs.dx1.values)
    n_dx1 = _interior_l2(dirs.dx1)
    n_dx2 = _interior_l2(dirs.dx2)
    return {
        "resid_dc_rhs": _interior_l2(r1) / n_dx2,
        "resid_dc_dir": _interior_l2(r1) / _interior_l2(dirs.dc),
        "resid_drot_rhs": _interior_l2(r2) / (c * n_dx1),
        "resid_drot_dir": _interior_l2(r2) / _interior_l2(dirs.drot),
    }


def curl_energy_ratio(Q: ComplexField, c: float) -> float:
    """int |Im(grad Q conj Q)|^2 / |Q|^2 divided by ln(1/c)."""
    g = Q.grid
    gx, gy = fd_gradient(Q)
    q2 = np.maximum(Q.values.real**2 + Q.values.imag**2, 1e-12)
    dens = ((gx.values * np.conj(Q.values)).imag ** 2
            + (gy.values * np.conj(Q.values)).imag ** 2) / q2
    val = float(np.sum(dens * g.trapezoid_weights))
    return val / np.log(1.0 / c)


def prop12_report(branch) -> list[dict]:
    """Per-speed diagnostic rows for every interior branch entry
    (energy/momentum derivatives, form values on the four directions,
    and the identity residuals)."""
    rows = []
    entries = branch.entries
    for i in range(1, len(entries) - 1):
        mid = entries[i]
        lo, hi = entries[i + 1], entries[i - 1]
        if lo.field.grid != mid.field.grid or hi.field.grid != mid.field.grid:
            continue
        if max(abs(hi.c - mid.c), abs(mid.c - lo.c)) > 0.1 * mid.c + 1e-15:
            continue
        dirs = build_directions(branch, i)
        Q, c = mid.field, mid.c
        eta = CutoffEta(mid.zeros)
        dE = (hi.energy - lo.energy) / (hi.c - lo.c)
        dP2 = (hi.p2 - lo.p2) / (hi.c - lo.c)
        resid = direction_identity_residuals(dirs, Q, c)
        row = {
            "c": c,
            "energy": mid.energy,
            "p2": mid.p2,
            "dE_dc": dE,
            "dP2_dc": dP2,
            "rel_dE_identity": abs(dE - c * dP2) / abs(dE),
            "B_dx1": quadratic_form_B(dirs.dx1, Q, c, eta),
            "B_dx2": quadratic_form_B(dirs.dx2, Q, c, eta),
            "c2_B_dc": c * c * quadratic_form_B(dirs.dc, Q, c, eta),
            "B_drot": quadratic_form_B(dirs.drot, Q, c, eta),
            "curl_ratio": curl_energy_ratio(Q, c),
        }
        row.update(resid)
        rows.append(row)
    return rows


def write_prop12_csv(rows: list[dict], path) -> None:
    """CSV with the frozen column order from PROP12_COLUMNS."""
    lines = [",".join(PROP12_COLUMNS)]
    for row in rows:
        lines.append(",".join(repr(float(row[k])) for k in PROP12_COLUMNS))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
