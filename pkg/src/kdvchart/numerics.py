"""Spectral-grid numerical lab.

Periodic pseudo-spectral discretization standing in for the line of rapidly
decreasing functions: fields are sampled on a uniform grid, derivatives are
Fourier multipliers, and the antiderivative is pinned to zero at the left
domain edge (with an exact linear ramp for integrands of nonzero mean, so
nonlocal atoms of background-carrying fields stay well defined).

Provides expression evaluation, method-of-lines evolution (integrating-factor
RK4 for the stiff third-derivative part), Backlund-relation transport checks,
the reciprocal (Dym) transport, and numeric hereditariness of recursion
operators via Richardson-extrapolated directional derivatives.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.interpolate import PchipInterpolator

import sympy as sp

from . import jets
from .jets import JetExpr
from .ops import D_FACTOR, DINV_FACTOR, Mul, PseudoOp


class NumericError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# grid and fields
# --------------------------------------------------------------------------

class SpectralGrid:
    """Uniform periodic grid on [-L/2, L/2) with rfft wavenumbers."""

    def __init__(self, length: float = 40.0, n: int = 256):
        if n < 64 or n & (n - 1):
            raise ValueError("grid size must be a power of two >= 64")
        self.length = float(length)
        self.n = int(n)
        self.x = -self.length / 2 + self.length * np.arange(n) / n
        self.k = 2 * np.pi * np.fft.rfftfreq(n, d=self.length / n)

    def deriv(self, values: np.ndarray, order: int = 1) -> np.ndarray:
        spec = np.fft.rfft(values) * (1j * self.k) ** order
        return np.fft.irfft(spec, n=self.n)

    def antideriv(self, values: np.ndarray) -> np.ndarray:
        """Antiderivative pinned to 0 at the left edge.  The mean component
        becomes an exact linear ramp; the oscillatory part is spectral."""
        spec = np.fft.rfft(values)
        mean = spec[0].real / self.n
        spec = spec.copy()
        spec[0] = 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            spec[1:] = spec[1:] / (1j * self.k[1:])
        periodic = np.fft.irfft(spec, n=self.n)
        ramp = mean * (self.x - self.x[0])
        out = periodic - periodic[0] + ramp
        return out

    def integral(self, values: np.ndarray) -> float:
        return float(np.sum(values) * self.length / self.n)

    def __eq__(self, other):
        return isinstance(other, SpectralGrid) and \
            self.length == other.length and self.n == other.n

    def __repr__(self):
        return f"SpectralGrid(length={self.length}, n={self.n})"


@dataclass
class GridField:
    grid: SpectralGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise ValueError("field shape does not match the grid")
        if not np.all(np.isfinite(self.values)):
            raise NumericError("field contains non-finite values")

    def deriv(self, order: int = 1) -> "GridField":
        return GridField(self.grid, self.grid.deriv(self.values, order))

    def antideriv(self) -> "GridField":
        return GridField(self.grid, self.grid.antideriv(self.values))

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def l2_norm(self) -> float:
        return float(np.sqrt(self.grid.integral(self.values ** 2)))

    def edge_magnitude(self) -> float:
        return float(max(abs(self.values[0]), abs(self.values[-1])))


def field_from_function(grid: SpectralGrid, fn) -> GridField:
    return GridField(grid, fn(grid.x))


def random_decayed_field(grid: SpectralGrid, seed: int = 0,
                         amplitude: float = 0.1) -> GridField:
    """Smooth random field localized near the domain center."""
    rng = random.Random(seed)
    x = grid.x
    out = np.zeros_like(x)
    for _ in range(3):
        center = rng.uniform(-grid.length / 8, grid.length / 8)
        width = rng.uniform(1.0, 3.0)
        wavenum = rng.uniform(0.0, 1.5)
        phase = rng.uniform(0, 2 * np.pi)
        out += np.exp(-((x - center) / width) ** 2) * np.cos(wavenum * x + phase)
    out *= amplitude / max(1e-12, np.max(np.abs(out)))
    return GridField(grid, out)


def kdv_soliton(grid: SpectralGrid, kappa: float = 1.0, t: float = 0.0,
                x0: float = 0.0) -> GridField:
    """One-soliton of u_t = u_xxx + 6 u u_x: travels left with speed 4 kappa^2."""
    arg = kappa * (grid.x - x0 + 4 * kappa ** 2 * t)
    return GridField(grid, 2 * kappa ** 2 / np.cosh(arg) ** 2)


# --------------------------------------------------------------------------
# expression evaluation
# --------------------------------------------------------------------------

@dataclass
class EvalConfig:
    denominator_tol: float = 1e-8
    decay_tol: float = 1e-10
    require_decay: bool = True


def _gather_symbol_values(e: JetExpr, binding, params, cfg: EvalConfig,
                          grid: SpectralGrid) -> dict:
    values = {}
    for s in sorted(e.symbols(), key=lambda x: x.name):
        a = jets.atom_of(s)
        if isinstance(a, jets.Jet):
            f = binding.get(a.field)
            if f is None:
                raise NumericError(f"field {a.field!r} is not bound")
            values[s] = grid.deriv(f.values, a.order) if a.order else f.values
        elif isinstance(a, jets.Param):
            if params is None or a.name not in params:
                raise NumericError(f"parameter {a.name!r} is not bound")
            values[s] = float(params[a.name])
        else:
            body = jets.dinv_body(a.index)
            body_vals = eval_expr(body, binding, params, cfg).values
            if cfg.require_decay:
                edge = max(abs(body_vals[0]), abs(body_vals[-1]))
                if edge > cfg.decay_tol:
                    raise NumericError(
                        f"field not decayed at boundary: |Dinv integrand| = "
                        f"{edge:.3e} at the domain edge")
            values[s] = grid.antideriv(body_vals)
    return values


def eval_expr(e: JetExpr, binding, params=None,
              cfg: EvalConfig | None = None) -> GridField:
    """Evaluate a jet expression on grid fields: jets by spectral
    differentiation, nonlocal atoms by the pinned antiderivative."""
    cfg = cfg or EvalConfig()
    e = JetExpr.wrap(e)
    grid = next(iter(binding.values())).grid
    values = _gather_symbol_values(e, binding, params, cfg, grid)
    num, den = e.pair()
    syms = sorted(values, key=lambda s: s.name)
    args = [values[s] for s in syms]
    if syms:
        fn = sp.lambdify(syms, num, modules="numpy")
        num_vals = np.broadcast_to(np.asarray(fn(*args), dtype=float),
                                   (grid.n,)).copy()
        fd = sp.lambdify(syms, den, modules="numpy")
        den_vals = np.broadcast_to(np.asarray(fd(*args), dtype=float),
                                   (grid.n,)).copy()
    else:
        num_vals = np.full(grid.n, float(num))
        den_vals = np.full(grid.n, float(den))
    min_den = float(np.min(np.abs(den_vals)))
    if min_den < cfg.denominator_tol:
        loc = grid.x[int(np.argmin(np.abs(den_vals)))]
        raise NumericError(
            f"denominator near zero: min |den| = {min_den:.3e} at x = {loc:.3f}")
    return GridField(grid, num_vals / den_vals)


# --------------------------------------------------------------------------
# evolution: integrating-factor RK4
# --------------------------------------------------------------------------

@dataclass
class EvolveConfig:
    dt: float | None = None
    cfl: float = 1.0
    dealias: bool = True
    store_every: int = 10
    blowup_max: float = 1e8
    positivity_floor: float = 1e-6
    monitor_positivity: bool = False


@dataclass
class Trajectory:
    grid: SpectralGrid
    field: str
    times: list[float]
    states: list[np.ndarray]
    l2_drift: float = 0.0

    def at(self, i: int) -> GridField:
        return GridField(self.grid, self.states[i])

    def __len__(self):
        return len(self.times)


def _flow_splitting(eq) -> tuple[int, float, JetExpr]:
    """(top order, constant linear coefficient, nonlinear remainder)."""
    fld = eq.field
    top = eq.flow.max_order(fld)
    if top < 1:
        return 0, 0.0, eq.flow
    s_top = jets._jet_symbol(fld, top)
    coeff = JetExpr(sp.diff(eq.flow._quotient(), s_top))
    if coeff.is_rational_constant:
        c = float(coeff.as_fraction())
        rest = eq.flow - jets.const(coeff.as_fraction()) * jets.jet(fld, top)
        return top, c, rest
    return top, 0.0, eq.flow


def _compile(e: JetExpr, fld: str):
    """Compile a nonlocal-free expression of one field into an array function
    of the jet arrays."""
    if e.has_nonlocal():
        raise NumericError("cannot compile a nonlocal flow")
    max_k = max(e.max_order(fld), 0)
    syms = [jets._jet_symbol(fld, k) for k in range(max_k + 1)]
    fn = sp.lambdify(syms, e._quotient(), modules="numpy")

    def call(grid: SpectralGrid, u: np.ndarray) -> np.ndarray:
        args = [u]
        for k in range(1, max_k + 1):
            args.append(grid.deriv(u, k))
        return np.broadcast_to(np.asarray(fn(*args), dtype=float),
                               (grid.n,)).copy()

    return call


def evolve(eq, initial: GridField, t_end: float,
           cfg: EvolveConfig | None = None) -> Trajectory:
    """Method of lines with spectral right side and integrating-factor RK4
    treatment of the constant-coefficient top derivative."""
    cfg = cfg or EvolveConfig()
    grid = initial.grid
    top, lin_c, nonlinear = _flow_splitting(eq)
    if top == 0:
        raise NumericError(f"flow of {eq.name!r} has no x-derivatives")
    h = cfg.dt if cfg.dt is not None else cfg.cfl * (grid.length / grid.n) ** 3
    steps = max(1, math.ceil(t_end / h))
    # keep stored samples uniformly spaced
    if steps % cfg.store_every:
        steps += cfg.store_every - steps % cfg.store_every
    h = t_end / steps

    nl = _compile(nonlinear, eq.field)
    k = grid.k
    lin = lin_c * (1j * k) ** top
    E = np.exp(h * lin / 2)
    E2 = E * E
    mask = np.ones_like(k)
    if cfg.dealias:
        mask[k > (2.0 / 3.0) * np.max(k)] = 0.0

    def nhat(spec: np.ndarray) -> np.ndarray:
        u = np.fft.irfft(spec, n=grid.n)
        if np.max(np.abs(u)) > cfg.blowup_max:
            raise NumericError("blow-up detected")
        if cfg.monitor_positivity and np.min(u) < cfg.positivity_floor:
            raise NumericError(
                f"positivity lost: min field = {np.min(u):.3e}")
        return mask * np.fft.rfft(nl(grid, u))

    spec = np.fft.rfft(initial.values)
    times = [0.0]
    states = [initial.values.copy()]
    l2_0 = float(np.sum(initial.values ** 2))
    t = 0.0
    for i in range(steps):
        try:
            a = h * nhat(spec)
            b = h * nhat(E * (spec + a / 2))
            c = h * nhat(E * spec + b / 2)
            d = h * nhat(E2 * spec + E * c)
        except NumericError as exc:
            raise NumericError(f"{exc} at t = {t:.4f}") from exc
        spec = E2 * spec + (E2 * a + 2 * E * (b + c) + d) / 6
        t = (i + 1) * h
        if (i + 1) % cfg.store_every == 0 or i + 1 == steps:
            times.append(t)
            states.append(np.fft.irfft(spec, n=grid.n))
    l2_end = float(np.sum(states[-1] ** 2))
    drift = abs(l2_end - l2_0) / max(l2_0, 1e-300)
    return Trajectory(grid=grid, field=eq.field, times=times, states=states,
                      l2_drift=drift)


def flow_residual(eq, traj: Trajectory) -> float:
    """Max norm of d/dt(field) - flow along the trajectory, with the time
    derivative from 4th-order central differences of the stored samples."""
    if len(traj) < 5:
        raise NumericError("need at least 5 samples for the residual")
    dt = traj.times[1] - traj.times[0]
    for i in range(1, len(traj.times) - 1):
        if not math.isclose(traj.times[i + 1] - traj.times[i], dt,
                            rel_tol=1e-9, abs_tol=1e-12):
            raise NumericError("residual needs uniform snapshot spacing")
    rhs = _compile(eq.flow, eq.field)
    worst = 0.0
    for i in range(2, len(traj) - 2):
        du = (traj.states[i - 2] - 8 * traj.states[i - 1]
              + 8 * traj.states[i + 1] - traj.states[i + 2]) / (12 * dt)
        res = du - rhs(traj.grid, traj.states[i])
        worst = max(worst, float(np.max(np.abs(res))))
    return worst


# --------------------------------------------------------------------------
# Backlund relation transport in time
# --------------------------------------------------------------------------

@dataclass
class TransportReport:
    name: str
    norms: list[float]
    tolerance: float
    relative_to: float
    verdict: str

    @property
    def ok(self) -> bool:
        return self.verdict == "verified"

    def to_dict(self) -> dict:
        return {"check": self.name, "norms": self.norms,
                "tolerance": self.tolerance, "relative_to": self.relative_to,
                "verdict": self.verdict}


def bt_time_preservation(relation: JetExpr, field_src: str, field_tgt: str,
                         traj_src: Trajectory, traj_tgt: Trajectory,
                         tol: float = 1e-5,
                         cfg: EvalConfig | None = None) -> TransportReport:
    """Evaluate the relation along two independently evolved trajectories;
    verified when the max norm stays below `tol` relative to the initial
    field norms."""
    if len(traj_src) != len(traj_tgt) or any(
            not math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12)
            for a, b in zip(traj_src.times, traj_tgt.times)):
        raise NumericError("trajectories do not share time samples")
    scale = max(traj_src.at(0).max_norm(), traj_tgt.at(0).max_norm(), 1e-30)
    norms = []
    for i in range(len(traj_src)):
        val = eval_expr(relation,
                        {field_src: traj_src.at(i), field_tgt: traj_tgt.at(i)},
                        cfg=cfg)
        norms.append(val.max_norm() / scale)
    verdict = "verified" if max(norms) <= tol else "failed"
    return TransportReport(name="bt-time-preservation", norms=norms,
                           tolerance=tol, relative_to=scale, verdict=verdict)


# --------------------------------------------------------------------------
# reciprocal transformation (the Dym link)
# --------------------------------------------------------------------------

@dataclass
class ReciprocalResult:
    rho: GridField
    xbar_nodes: np.ndarray
    new_length: float
    roundtrip_error: float


def reciprocal_transform(s: GridField, out_grid: SpectralGrid | None = None
                         ) -> ReciprocalResult:
    """xbar := antiderivative of s (pinned 0 at the left edge), rho(xbar) :=
    s(x), resampled on a uniform xbar grid by monotone cubic interpolation."""
    vals = s.values
    if np.min(vals) <= 1e-6:
        raise NumericError("non-monotone transformation: field must be "
                           "strictly positive")
    grid = s.grid
    xbar = grid.antideriv(vals)
    total = grid.integral(vals)
    xb_ext = np.append(xbar, total)
    s_ext = np.append(vals, vals[0])
    interp = PchipInterpolator(xb_ext, s_ext)
    new_grid = out_grid or SpectralGrid(total, grid.n)
    # target nodes shifted into [0, total)
    xi = new_grid.x - new_grid.x[0]
    rho_vals = interp(xi)
    back = PchipInterpolator(xb_ext, np.append(grid.x, grid.x[0] + grid.length))
    x_back = back(xi)
    rho_check = PchipInterpolator(np.append(grid.x, grid.x[0] + grid.length),
                                  s_ext)(x_back)
    roundtrip = float(np.max(np.abs(rho_check - rho_vals)))
    return ReciprocalResult(rho=GridField(new_grid, rho_vals),
                            xbar_nodes=xbar, new_length=total,
                            roundtrip_error=roundtrip)


def dym_transport_residual(traj: Trajectory, dym_flow_fn=None) -> dict:
    """Transport every snapshot through the reciprocal transformation and
    measure the Dym residual || rho_t - rho^3 rho_xxx || on the common
    transformed grid (time derivative by 4th-order central differences)."""
    if len(traj) < 5:
        raise NumericError("need at least 5 snapshots")
    first = reciprocal_transform(traj.at(0))
    common = first.rho.grid
    rhos = []
    roundtrips = []
    for i in range(len(traj)):
        res = reciprocal_transform(traj.at(i), out_grid=common)
        rhos.append(res.rho.values)
        roundtrips.append(res.roundtrip_error)
    dt = traj.times[1] - traj.times[0]
    worst = 0.0
    norms = []
    for i in range(2, len(traj) - 2):
        rho_t = (rhos[i - 2] - 8 * rhos[i - 1]
                 + 8 * rhos[i + 1] - rhos[i + 2]) / (12 * dt)
        rho = rhos[i]
        flow = rho ** 3 * common.deriv(rho, 3) if dym_flow_fn is None \
            else dym_flow_fn(common, rho)
        norm = float(np.max(np.abs(rho_t - flow)))
        norms.append(norm)
        worst = max(worst, norm)
    return {"residual_max": worst, "residuals": norms,
            "roundtrip_max": float(max(roundtrips)),
            "new_length": first.new_length}


# --------------------------------------------------------------------------
# numeric pseudo-differential operator application
# --------------------------------------------------------------------------

def numeric_apply(op: PseudoOp, binding, vec: GridField, params=None,
                  cfg: EvalConfig | None = None) -> GridField:
    """Apply a formal operator to a grid field, factors right to left."""
    cfg = cfg or EvalConfig(require_decay=False)
    grid = vec.grid
    out = np.zeros(grid.n)
    for weight, factors in op.terms:
        cur = vec.values.copy()
        for f in reversed(factors):
            if isinstance(f, Mul):
                cur = eval_expr(f.coeff, binding, params, cfg).values * cur
            elif f is D_FACTOR:
                cur = grid.deriv(cur)
            elif f is DINV_FACTOR:
                cur = grid.antideriv(cur)
        out += float(weight) * cur
    return GridField(grid, out)


def attach_numeric_probes(report, a: PseudoOp, b: PseudoOp, binding,
                          count: int = 5, seed: int = 0,
                          tol: float = 1e-7, params=None):
    """Append numeric residuals of (a - b) on random decayed grid fields to an
    operator-equivalence report."""
    grid = next(iter(binding.values())).grid
    residuals = []
    for i in range(count):
        probe = random_decayed_field(grid, seed=seed + 17 * i)
        ia = numeric_apply(a, binding, probe, params)
        ib = numeric_apply(b, binding, probe, params)
        scale = max(ia.max_norm(), ib.max_norm(), 1e-30)
        residuals.append(float(np.max(np.abs(ia.values - ib.values))) / scale)
    report.numeric_residuals = residuals
    report.numeric_tolerance = tol
    return report


# --------------------------------------------------------------------------
# hereditariness
# --------------------------------------------------------------------------

@dataclass
class HereditaryResult:
    asymmetry: float
    richardson_gap: float
    eps: float

    @property
    def ok(self) -> bool:
        return self.richardson_gap <= 1e-3


def hereditary_check(op: PseudoOp, fld: str, base: GridField,
                     f: GridField, g: GridField,
                     eps: float = 1e-5, params=None) -> HereditaryResult:
    """Relative asymmetry of h(f,g) := Phi'[Phi f]g - Phi Phi'[f]g under
    swapping f and g; the directional operator derivative Phi' is a central
    finite difference in a scalar deformation, Richardson extrapolated."""
    grid = base.grid
    cfg = EvalConfig(require_decay=False)

    def apply_at(shift: np.ndarray, vec: np.ndarray) -> np.ndarray:
        binding = {fld: GridField(grid, base.values + shift)}
        return numeric_apply(op, binding, GridField(grid, vec), params,
                             cfg).values

    def dphi(p: np.ndarray, vec: np.ndarray, e: float) -> np.ndarray:
        return (apply_at(e * p, vec) - apply_at(-e * p, vec)) / (2 * e)

    gap = 0.0

    def dphi_rich(p: np.ndarray, vec: np.ndarray) -> np.ndarray:
        nonlocal gap
        d1 = dphi(p, vec, eps)
        d2 = dphi(p, vec, eps / 2)
        scale = max(float(np.max(np.abs(d2))), 1e-30)
        gap = max(gap, float(np.max(np.abs(d1 - d2))) / scale)
        return (4 * d2 - d1) / 3

    def h(p: np.ndarray, q: np.ndarray) -> np.ndarray:
        phi_p = apply_at(np.zeros(grid.n), p)
        term1 = dphi_rich(phi_p, q)
        term2 = apply_at(np.zeros(grid.n), dphi_rich(p, q))
        return term1 - term2

    hfg = h(f.values, g.values)
    hgf = h(g.values, f.values)
    denom = max(f.l2_norm() * g.l2_norm(), 1e-30)
    asym = float(np.sqrt(grid.integral((hfg - hgf) ** 2))) / denom
    result = HereditaryResult(asymmetry=asym, richardson_gap=gap, eps=eps)
    if not result.ok:
        raise NumericError(
            f"step-size failure: Richardson stages disagree by {gap:.2e}")
    return result
