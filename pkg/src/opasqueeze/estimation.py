"""Fitting noise data and correcting for downstream loss.

Three estimators live here:

* :func:`fit_pump_sweep` fits loss ``L`` and SHG efficiency ``a`` to
  squeezed / anti-squeezed levels measured at several pump powers. Both
  branches are fit jointly in dB with a damped Gauss-Newton (Levenberg-
  Marquardt) iteration, ``L`` through a logit and ``a`` through a log so
  the bounds hold without constraints. The start point is the best node
  of a coarse 10x10 grid.
* :func:`oracle_fit_pump_sweep` minimizes the same objective by
  exhaustive grid search. It shares no code with the fitter and exists to
  check it.
* :func:`fit_trace` recovers ``(R+, R-, phase offset)`` from a scanned
  noise trace, modelling the known triangle scan and video filter.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, logit

from ._io import atomic_write_text
from .errors import InsufficientSpanError, InvalidArgumentError, NonIdentifiableError, ParseError, UnphysicalInputError
from .squeezer import noise_levels_db
from .traces import NoiseTrace, smooth, triangle

DB = 10.0 / math.log(10.0)

SWEEP_HEADER = ("power_w", "squeezed_db", "antisqueezed_db")


# ---------------------------------------------------------------------------
# data containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PumpSweep:
    """Noise levels (dB relative to shot noise) versus incident pump power (W).

    A NaN in either level column marks a branch that was not measured at
    that power.
    """

    power_w: np.ndarray
    squeezed_db: np.ndarray
    antisqueezed_db: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.power_w, dtype=float))
        m = np.atleast_1d(np.asarray(self.squeezed_db, dtype=float))
        q = np.atleast_1d(np.asarray(self.antisqueezed_db, dtype=float))
        if not (p.shape == m.shape == q.shape) or p.ndim != 1:
            raise InvalidArgumentError("sweep columns must be 1-D and equal length")
        if np.any(~np.isfinite(p)) or np.any(p < 0):
            raise InvalidArgumentError("pump powers must be finite and >= 0")
        if len(np.unique(p)) != len(p):
            raise InvalidArgumentError("pump powers must be distinct")
        if np.any(np.isinf(m)) or np.any(np.isinf(q)):
            raise InvalidArgumentError("noise levels must be finite (or NaN for a missing branch)")
        for name, arr in (("power_w", p), ("squeezed_db", m), ("antisqueezed_db", q)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_points(cls, points) -> "PumpSweep":
        points = list(points)
        if not points:
            return cls(np.empty(0), np.empty(0), np.empty(0))
        p, m, q = zip(*points)
        return cls(np.array(p, float), np.array(m, float), np.array(q, float))

    def __len__(self):
        return len(self.power_w)

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return [(float(p), float(m), float(q)) for p, m, q in zip(self.power_w, self.squeezed_db, self.antisqueezed_db)]

    def observations(self):
        """Flatten to ``(power, branch_sign, level_db)`` for the measured entries."""
        p = np.concatenate([self.power_w, self.power_w])
        sign = np.concatenate([-np.ones(len(self)), np.ones(len(self))])
        y = np.concatenate([self.squeezed_db, self.antisqueezed_db])
        keep = np.isfinite(y)
        return p[keep], sign[keep], y[keep]

    def to_csv(self) -> str:
        lines = [",".join(SWEEP_HEADER)]
        for p, m, q in self.points:
            lines.append(",".join("" if math.isnan(v) else repr(v) for v in (p, m, q)))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        atomic_write_text(path, self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "PumpSweep":
        rows = text.splitlines()
        if not rows or not rows[0].strip():
            raise ParseError("empty sweep file", 1)
        header = tuple(h.strip() for h in rows[0].split(","))
        if header != SWEEP_HEADER:
            raise ParseError(f"expected header {','.join(SWEEP_HEADER)!r}, got {rows[0]!r}", 1)
        points = []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row.strip():
                continue
            parts = [c.strip() for c in row.split(",")]
            if len(parts) != 3:
                raise ParseError(f"expected 3 columns, got {len(parts)}", lineno)
            try:
                vals = tuple(float(c) if c else math.nan for c in parts)
            except ValueError:
                raise ParseError(f"non-numeric value in {row!r}", lineno) from None
            if math.isnan(vals[0]):
                raise ParseError("missing pump power", lineno)
            points.append(vals)
        if not points:
            raise ParseError("no data rows", len(rows))
        try:
            return cls.from_points(points)
        except InvalidArgumentError as exc:
            raise ParseError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "PumpSweep":
        return cls.from_csv(Path(path).read_text())


def simulate_sweep(a: float, loss: float, powers, jitter_db: float = 0.0, seed: int = 0) -> PumpSweep:
    """Forward-model a pump sweep, optionally with Gaussian jitter in dB."""
    powers = np.asarray(powers, dtype=float)
    m, q = noise_levels_db(a, powers, loss)
    m = np.atleast_1d(m).astype(float)
    q = np.atleast_1d(q).astype(float)
    if jitter_db > 0:
        rng = np.random.default_rng(seed)
        m = m + rng.normal(0.0, jitter_db, m.shape)
        q = q + rng.normal(0.0, jitter_db, q.shape)
    return PumpSweep(np.atleast_1d(powers), m, q)


@dataclass
class FitResult:
    """Outcome of a fit.

    ``param_stderr`` comes from the Gauss-Newton approximation to the
    Hessian at the optimum and is approximate; it is infinite when the
    data cannot constrain a parameter.
    """

    kind: str
    params: dict
    residual_ss: float
    iterations: int
    converged: bool
    param_stderr: dict
    extra: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.params[key]

    def to_dict(self) -> dict:
        def clean(v):
            v = float(v)
            return None if not math.isfinite(v) else v

        return {
            "kind": self.kind,
            "params": {k: clean(v) for k, v in self.params.items()},
            "stderr": {k: clean(v) for k, v in self.param_stderr.items()},
            "stderr_approximate": True,
            "residual_ss": float(self.residual_ss),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


# ---------------------------------------------------------------------------
# damped least squares
# ---------------------------------------------------------------------------

@dataclass
class _LMOutcome:
    x: np.ndarray
    residual: np.ndarray
    iterations: int
    converged: bool


def levenberg_marquardt(residual, jacobian, x0, max_iter=500, xtol=1e-10, gtol=1e-10):
    """Minimize ``sum(residual(x)**2)`` by Levenberg-Marquardt.

    Converged means the relative step fell below ``xtol`` or the gradient
    infinity-norm fell below ``gtol``. Non-finite trial points are rejected
    like uphill steps.
    """
    x = np.array(x0, dtype=float)
    r = residual(x)
    cost = float(r @ r)
    lam = 1e-3
    for it in range(1, max_iter + 1):
        J = jacobian(x)
        g = J.T @ r
        if np.max(np.abs(g)) < gtol:
            return _LMOutcome(x, r, it, True)
        A = J.T @ J
        d = np.maximum(np.diag(A), 1e-12 * max(1.0, np.max(np.diag(A))))
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                step = np.full_like(x, np.nan)
            small = np.linalg.norm(step) <= xtol * (np.linalg.norm(x) + xtol)
            x_new = x + step
            with np.errstate(all="ignore"):
                r_new = residual(x_new)
            cost_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else math.inf
            if cost_new < cost:
                x, r, cost = x_new, r_new, cost_new
                lam = max(lam / 10.0, 1e-15)
                break
            # no downhill step exists at this scale: we are at the floor
            if small or lam > 1e20:
                return _LMOutcome(x, r, it, bool(small))
            lam *= 10.0
        if small:
            return _LMOutcome(x, r, it, True)
    return _LMOutcome(x, r, max_iter, False)


def _gauss_newton_stderr(J: np.ndarray, residual: np.ndarray) -> np.ndarray:
    m, n = J.shape
    if m <= n or not np.all(np.isfinite(J)):
        return np.full(n, math.inf)
    s2 = float(residual @ residual) / (m - n)
    A = J.T @ J
    if np.linalg.cond(A) > 1e14:
        return np.full(n, math.inf)
    return np.sqrt(np.diag(np.linalg.inv(A)) * s2)


# ---------------------------------------------------------------------------
# pump sweep
# ---------------------------------------------------------------------------

def _sweep_model(loss, a, p, sign):
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        e = np.exp(sign * 2.0 * np.sqrt(a * p))
        R = loss + (1.0 - loss) * e
        return DB * np.log(R), e, R


def _sweep_natural_jacobian(loss, a, p, sign):
    """Jacobian of the dB model w.r.t. ``(L, a)``."""
    _, e, R = _sweep_model(loss, a, p, sign)
    dL = DB * (1.0 - e) / R
    with np.errstate(divide="ignore", invalid="ignore"):
        da = DB * (1.0 - loss) * e * sign * np.sqrt(p / a) / R
    da = np.where(p == 0, 0.0, da)
    return np.column_stack([dL, da])


# coarse start grid in (L, a[W^-1])
_SEED_LOSS = np.linspace(0.05, 0.95, 10)
_SEED_A = np.logspace(-2, 3, 10)


def fit_pump_sweep(sweep: PumpSweep, fixed_loss: float | None = None, max_iter: int = 500) -> FitResult:
    """Least-squares estimate of ``(L, a)`` from a pump sweep.

    Args:
        sweep: measured levels. NaN entries are skipped.
        fixed_loss: hold ``L`` at this value and fit ``a`` alone.
        max_iter: Levenberg-Marquardt iteration cap. Hitting it returns the
            best point so far with ``converged=False``.

    Raises:
        NonIdentifiableError: no nonzero pump power, or too few points.
    """
    p, sign, y = sweep.observations()
    if not np.any(p > 0):
        raise NonIdentifiableError("sweep has no measurement at nonzero pump power")
    free_loss = fixed_loss is None
    if free_loss and len(sweep) < 3:
        raise NonIdentifiableError(f"a joint (L, a) fit needs at least 3 sweep points, got {len(sweep)}")
    if not free_loss and not (0.0 <= fixed_loss < 1.0):
        raise InvalidArgumentError(f"fixed_loss must lie in [0, 1), got {fixed_loss!r}")

    def unpack(x):
        if free_loss:
            return expit(x[0]), math.exp(x[1]) if x[1] < 700 else math.inf
        return fixed_loss, math.exp(x[0]) if x[0] < 700 else math.inf

    def residual(x):
        loss, a = unpack(x)
        return _sweep_model(loss, a, p, sign)[0] - y

    def jacobian(x):
        loss, a = unpack(x)
        J = _sweep_natural_jacobian(loss, a, p, sign)
        if free_loss:
            return np.column_stack([J[:, 0] * loss * (1.0 - loss), J[:, 1] * a])
        return J[:, 1:2] * a

    # grid seed
    best, best_cost = None, math.inf
    losses = _SEED_LOSS if free_loss else [fixed_loss]
    for loss in losses:
        for a in _SEED_A:
            r = _sweep_model(loss, a, p, sign)[0] - y
            c = float(r @ r) if np.all(np.isfinite(r)) else math.inf
            if c < best_cost:
                best, best_cost = (loss, a), c
    x0 = [logit(best[0]), math.log(best[1])] if free_loss else [math.log(best[1])]

    out = levenberg_marquardt(residual, jacobian, x0, max_iter=max_iter)
    loss, a = unpack(out.x)
    J = _sweep_natural_jacobian(loss, a, p, sign)
    if free_loss:
        se = _gauss_newton_stderr(J, out.residual)
        stderr = {"L": float(se[0]), "a": float(se[1])}
    else:
        stderr = {"L": 0.0, "a": float(_gauss_newton_stderr(J[:, 1:2], out.residual)[0])}
    return FitResult(
        kind="pump-sweep",
        params={"L": float(loss), "a": float(a)},
        residual_ss=float(out.residual @ out.residual),
        iterations=out.iterations,
        converged=out.converged,
        param_stderr=stderr,
        extra={"a_pct_per_w": 100.0 * float(a), "fixed_loss": fixed_loss is not None},
    )


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Search grid for the oracle.

    ``L`` runs over ``[l_min, l_max)`` and ``a`` over ``[a_min, a_max]``
    (W^-1) with the given steps. With ``refine_levels > 0`` the search is
    repeated on successively finer grids (steps divided by
    ``refine_factor``) spanning ``window`` parent cells either side of the
    previous minimum, re-centred until the minimum is interior. The
    reported resolution stays ``(l_step, a_step)``.
    """

    l_step: float = 0.001
    a_step: float = 0.01
    a_max: float = 50.0
    l_min: float = 0.0
    l_max: float = 1.0
    a_min: float = 0.0
    refine_levels: int = 0
    refine_factor: int = 10
    window: int = 3

    def __post_init__(self):
        if not (self.l_step > 0 and self.a_step > 0):
            raise InvalidArgumentError("grid steps must be positive")
        if not (0.0 <= self.l_min < self.l_max <= 1.0) or not (0.0 <= self.a_min <= self.a_max):
            raise InvalidArgumentError("grid bounds out of range")
        if self.refine_levels < 0 or self.refine_factor < 2 or self.window < 1:
            raise InvalidArgumentError("bad refinement settings")

    def losses(self) -> np.ndarray:
        n = int(math.ceil((self.l_max - self.l_min) / self.l_step - 1e-9))
        return self.l_min + self.l_step * np.arange(n)

    def efficiencies(self) -> np.ndarray:
        n = int(math.floor((self.a_max - self.a_min) / self.a_step + 1e-9)) + 1
        return self.a_min + self.a_step * np.arange(n)


def _grid_costs(Ls, As, power, level, sgn):
    with np.errstate(over="ignore"):
        E = np.exp(sgn[None, :] * 2.0 * np.sqrt(As[:, None] * power[None, :]))
    cost = np.empty((len(Ls), len(As)))
    chunk = max(1, 4_000_000 // max(1, E.size))
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for i in range(0, len(Ls), chunk):
            Lc = Ls[i:i + chunk, None, None]
            model = 10.0 * np.log10(Lc + (1.0 - Lc) * E[None, :, :])
            c = np.sum((model - level) ** 2, axis=2)
            cost[i:i + chunk] = np.where(np.isfinite(c), c, np.inf)
    # first minimum of a C-ordered (L, a) array: smallest L, then smallest a
    i, j = np.unravel_index(int(np.argmin(cost)), cost.shape)
    return i, j, float(cost[i, j]), cost.size


def oracle_fit_pump_sweep(sweep: PumpSweep, grid: Grid = Grid()) -> FitResult:
    """Exhaustive grid minimization of the dB-space sweep objective.

    Ties go to the smallest ``L``, then the smallest ``a``.
    """
    power = np.concatenate([sweep.power_w, sweep.power_w])
    level = np.concatenate([sweep.squeezed_db, sweep.antisqueezed_db])
    sgn = np.repeat([-1.0, 1.0], len(sweep))
    keep = ~np.isnan(level)
    power, level, sgn = power[keep], level[keep], sgn[keep]

    Ls, As = grid.losses(), grid.efficiencies()
    i, j, cost, evaluated = _grid_costs(Ls, As, power, level, sgn)
    loss, a = float(Ls[i]), float(As[j])

    l_step, a_step = grid.l_step, grid.a_step
    l_hi = Ls[-1]
    for _ in range(grid.refine_levels):
        parent_l, parent_a = l_step, a_step
        l_step /= grid.refine_factor
        a_step /= grid.refine_factor
        half = grid.window * grid.refine_factor
        for _ in range(100):
            Ls = loss + l_step * np.arange(-half, half + 1)
            As = a + a_step * np.arange(-half, half + 1)
            Ls = Ls[(Ls >= grid.l_min - 1e-15) & (Ls <= l_hi + parent_l)]
            Ls = Ls[Ls < grid.l_max]
            As = As[(As >= grid.a_min - 1e-15) & (As <= grid.a_max + 1e-15)]
            i, j, c, n = _grid_costs(Ls, As, power, level, sgn)
            evaluated += n
            moved = (Ls[i], As[j]) != (loss, a)
            if c <= cost:
                loss, a, cost = float(Ls[i]), float(As[j]), c
            on_edge = ((i in (0, len(Ls) - 1) and 0 < Ls[i] - grid.l_min and Ls[i] + l_step < grid.l_max)
                       or (j in (0, len(As) - 1) and As[j] > grid.a_min and As[j] < grid.a_max))
            if not (on_edge and moved):
                break

    J = _sweep_natural_jacobian(loss, a, power, sgn)
    resid = _sweep_model(loss, a, power, sgn)[0] - level
    se = _gauss_newton_stderr(J, resid)
    return FitResult(
        kind="pump-sweep-grid",
        params={"L": loss, "a": a},
        residual_ss=cost,
        iterations=int(evaluated),
        converged=True,
        param_stderr={"L": float(se[0]), "a": float(se[1])},
        extra={"a_pct_per_w": 100.0 * a,
               "grid": {"l_step": grid.l_step, "a_step": grid.a_step, "a_max": grid.a_max,
                        "refine_levels": grid.refine_levels}},
    )


def agrees_with_oracle(fit: FitResult, oracle: FitResult, grid: Grid) -> bool:
    """True if the fitter lands within one grid step of the oracle in both parameters."""
    slack = 1e-9
    return (abs(fit["L"] - oracle["L"]) <= grid.l_step * (1 + slack)
            and abs(fit["a"] - oracle["a"]) <= grid.a_step * (1 + slack))


# ---------------------------------------------------------------------------
# scanned trace
# ---------------------------------------------------------------------------

_OFFSET_SEEDS = np.linspace(0.0, math.pi, 64, endpoint=False)


def fit_trace(trace: NoiseTrace, max_iter: int = 200) -> FitResult:
    """Recover ``(R+, R-, phase offset)`` from a scanned noise trace.

    The scan frequency, phase span, sample rate and video bandwidth are
    taken from ``trace.config``; the phase offset is estimated. The offset
    is reported in ``[0, pi)`` and ``R+ >= R-`` always holds.

    Raises:
        InsufficientSpanError: the trace covers less than half a scan period.
    """
    cfg = trace.config
    t = trace.t
    y = trace.power_db
    if len(t) / cfg.sample_rate < 0.5 * cfg.period - 1e-12:
        raise InsufficientSpanError(
            f"trace spans {len(t) / cfg.sample_rate:.4g} s, need at least half a scan period "
            f"({0.5 * cfg.period:.4g} s)"
        )
    sweep_phase = cfg.phase_span * triangle(t, cfg.period)

    def parts(x):
        rp, rm = 10.0 ** (x[0] / 10.0), 10.0 ** (x[1] / 10.0)
        theta = x[2] + sweep_phase
        c2, s2 = np.cos(theta) ** 2, np.sin(theta) ** 2
        V = rp * c2 + rm * s2
        return rp, rm, theta, c2, s2, V

    def residual(x):
        *_, V = parts(x)
        return smooth(DB * np.log(V), cfg) - y

    def jacobian(x):
        rp, rm, theta, c2, s2, V = parts(x)
        cols = np.column_stack([rp * c2 / V, rm * s2 / V, DB * (rm - rp) * np.sin(2 * theta) / V])
        return smooth(cols, cfg)

    hi, lo = float(np.max(y)), float(np.min(y))
    best, best_cost = None, math.inf
    for off in _OFFSET_SEEDS:
        r = residual(np.array([hi, lo, off]))
        c = float(r @ r)
        if c < best_cost:
            best, best_cost = off, c
    out = levenberg_marquardt(residual, jacobian, [hi, lo, best], max_iter=max_iter)
    x_plus, x_minus, offset = out.x
    se = _gauss_newton_stderr(jacobian(out.x), out.residual)
    se_plus, se_minus, se_off = se
    if x_plus < x_minus:
        # same variance law with quadratures exchanged
        x_plus, x_minus = x_minus, x_plus
        se_plus, se_minus = se_minus, se_plus
        offset += math.pi / 2
    offset = float(np.mod(offset, math.pi))
    contrast = x_plus - x_minus
    identifiable = bool(math.isfinite(se_off) and contrast > 3.0 * math.hypot(se_plus, se_minus)
                        and contrast > 1e-6)
    return FitResult(
        kind="trace",
        params={
            "R_plus": float(10.0 ** (x_plus / 10.0)),
            "R_minus": float(10.0 ** (x_minus / 10.0)),
            "phase_offset": offset,
        },
        residual_ss=float(out.residual @ out.residual),
        iterations=out.iterations,
        converged=out.converged,
        param_stderr={"R_plus_db": float(se_plus), "R_minus_db": float(se_minus), "phase_offset": float(se_off)},
        extra={
            "R_plus_db": float(x_plus),
            "R_minus_db": float(x_minus),
            "offset_identifiable": identifiable,
        },
    )


# ---------------------------------------------------------------------------
# loss correction
# ---------------------------------------------------------------------------

def remove_downstream_loss(R, downstream_loss: float):
    """Invert a loss channel on a noise level: ``(R - L) / (1 - L)``.

    Raises:
        UnphysicalInputError: ``R <= L``, i.e. noise below the floor that a
            loss ``L`` imposes on any state.
    """
    if not (0.0 <= downstream_loss < 1.0):
        raise InvalidArgumentError(f"downstream loss must lie in [0, 1), got {downstream_loss!r}")
    R_arr = np.asarray(R, dtype=float)
    if np.any(R_arr <= downstream_loss):
        raise UnphysicalInputError(
            f"noise level {R!r} is at or below the loss floor {downstream_loss!r}"
        )
    out = (R_arr - downstream_loss) / (1.0 - downstream_loss)
    return float(out) if out.ndim == 0 else out
