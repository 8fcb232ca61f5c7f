"""Stability sweeps, empirical Holder envelope fitting, and the
flat-vs-analytic counterexample study.

A sweep samples parameter pairs from a compact ellipticity class,
evaluates the forward map on both, and records the recovered-quantity
distance, the operator distance, the scalarization value, and
optionally a finite-measurement distance. The envelope fit estimates
(theta, C) so that every record lies below
log delta_R <= theta * log delta_F + log C + slack.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import conductivity as cd
from . import elasticity as el
from .errors import HolderLabError, InsufficientSpread
from .numerics import adaptive_quadrature, flat_integrand, symmetrize
from .operators import operator_distance
from .scalarization import finite_distance, phi, probe_weights

KINDS = ("conductivity", "elasticity")

# rng stream tags so every sampled object is a pure function of
# (seed, stream, index)
_STREAM_RANDOM_P = 1
_STREAM_RANDOM_Q = 2
_STREAM_RAY_BASE = 3
_STREAM_RAY_DIR = 4


@dataclass(frozen=True)
class CompactSetSpec:
    """Ellipticity class: all cell matrices have eigenvalues in
    [lambda_lo, lambda_hi]."""

    lambda_lo: float
    lambda_hi: float
    n_cells: int
    kind: str

    def __post_init__(self):
        if not (0.0 < self.lambda_lo <= self.lambda_hi):
            raise ValueError("need 0 < lambda_lo <= lambda_hi")
        if self.kind not in KINDS:
            raise ValueError("kind must be one of %s" % (KINDS,))
        if self.n_cells < 1:
            raise ValueError("need at least one cell")


@dataclass(frozen=True)
class RecoveredQuantity:
    """Cell labels (1-based) whose matrices the stability estimate
    recovers; the max Frobenius distance over these cells is
    delta_R."""

    cell_subset: tuple

    def __post_init__(self):
        if len(self.cell_subset) == 0:
            raise ValueError("recovered quantity needs at least one cell")
        if len(set(self.cell_subset)) != len(self.cell_subset):
            raise ValueError("duplicate cell indices")
        if min(self.cell_subset) < 1:
            raise ValueError("cell labels are 1-based")


@dataclass
class StabilityRecord:
    pair_id: int
    kind: str  # "random_random" or "near_diagonal"
    t: float | None
    delta_R: float
    delta_F: float
    phi: float
    delta_finite: float | None = None
    flags: tuple = ()


@dataclass
class SweepResult:
    records: list
    dropped: int
    operators: list | None = None  # (op_p, op_q) per record when kept


@dataclass
class HolderFit:
    theta: float
    theta_precap: float
    log_C: float
    n_bins: int
    slack: float
    max_violation: float
    records_used: int
    constant_R: bool = False


@dataclass
class FlatMapSample:
    t: float
    F_t: float
    local_slope: float


def _rng(seed, stream, index):
    return np.random.default_rng([int(seed), int(stream), int(index)])


def _conductivity_cells(rng, spec):
    cells = np.empty((spec.n_cells, 3))
    for j in range(spec.n_cells):
        e = rng.uniform(spec.lambda_lo, spec.lambda_hi, 2)
        th = rng.uniform(0.0, np.pi)
        c, s = math.cos(th), math.sin(th)
        rot = np.array([[c, -s], [s, c]])
        a = rot @ np.diag(e) @ rot.T
        cells[j] = (a[0, 0], a[1, 1], 0.5 * (a[0, 1] + a[1, 0]))
    return cells


def _elasticity_cells(rng, spec):
    cells = np.empty((spec.n_cells, 3, 3))
    for j in range(spec.n_cells):
        e = rng.uniform(spec.lambda_lo, spec.lambda_hi, 3)
        g = rng.standard_normal((3, 3))
        q, r = np.linalg.qr(g)
        q = q * np.sign(np.diag(r))
        cells[j] = symmetrize(q @ np.diag(e) @ q.T)
    return cells


def sample_cells(spec, count, seed, stream=0):
    """Raw cell arrays for `count` parameter points; point i depends
    only on (seed, stream, i)."""
    draw = _conductivity_cells if spec.kind == "conductivity" else _elasticity_cells
    return [draw(_rng(seed, stream, i), spec) for i in range(count)]


def sample_params(spec, count, seed, stream=0):
    """Parameter points inside the compact class, counter-seeded."""
    wrap = cd.ConductivityParams if spec.kind == "conductivity" else el.ElasticityParams
    return [wrap(c) for c in sample_cells(spec, count, seed, stream)]


def sample_direction(spec, seed, index=0):
    """Unit-Frobenius perturbation direction, counter-seeded like the
    ray directions of a sweep."""
    return _direction(_rng(seed, _STREAM_RAY_DIR, index), spec)


def _direction(rng, spec):
    """Random symmetric per-cell direction with unit global Frobenius
    norm over the whole tuple."""
    if spec.kind == "conductivity":
        d = rng.standard_normal((spec.n_cells, 3))
        norm = math.sqrt(float(np.sum(d[:, 0] ** 2 + d[:, 1] ** 2 + 2.0 * d[:, 2] ** 2)))
    else:
        d = rng.standard_normal((spec.n_cells, 3, 3))
        d = 0.5 * (d + d.transpose(0, 2, 1))
        norm = float(np.linalg.norm(d))
    return d / norm


def _cell_frobenius(spec, cells_a, cells_b, subset):
    """Max Frobenius distance between cell matrices over the subset of
    1-based cell labels."""
    idx = np.array(subset, dtype=int) - 1
    if spec.kind == "conductivity":
        diff = cd.cell_matrices(cells_a)[idx] - cd.cell_matrices(cells_b)[idx]
    else:
        diff = np.asarray(cells_a)[idx] - np.asarray(cells_b)[idx]
    return float(np.max(np.sqrt(np.sum(diff**2, axis=(1, 2)))))


def _forward_factory(mesh, spec):
    if spec.kind == "conductivity":
        basis = cd.current_basis(mesh)

        def forward(cells):
            return cd.nd_matrix(mesh, cd.ConductivityParams(cells), basis)

    else:
        basis = el.displacement_basis(mesh)

        def forward(cells):
            return el.dn_matrix(mesh, el.ElasticityParams(cells), basis)

    return forward, basis


def default_ray_steps(n):
    """Log-spaced ray parameters spanning the near-diagonal regime
    while staying above solver noise."""
    return np.geomspace(1e-6, 1e-1, n)


def sweep(
    mesh,
    spec,
    rq,
    n_random_pairs,
    n_rays,
    ray_steps,
    seed,
    probe_k=None,
    fm=None,
    threads=1,
    keep_operators=False,
):
    """Stability records for random pairs and near-diagonal rays.

    Rays fix a base point p and a unit direction dp per ray and walk
    q = p + t*dp along the given steps. Records are ordered by pair id
    regardless of the thread count; a record whose solve fails is
    dropped and counted.
    """
    if max(rq.cell_subset) > spec.n_cells:
        raise ValueError("recovered cell label outside the partition")
    ray_steps = np.asarray(ray_steps, dtype=float)
    forward, basis = _forward_factory(mesh, spec)
    k = basis.k if probe_k is None else probe_k
    weights = probe_weights(k)

    ps = sample_cells(spec, n_random_pairs, seed, _STREAM_RANDOM_P)
    qs = sample_cells(spec, n_random_pairs, seed, _STREAM_RANDOM_Q)
    bases = sample_cells(spec, n_rays, seed, _STREAM_RAY_BASE)
    dirs = [_direction(_rng(seed, _STREAM_RAY_DIR, i), spec) for i in range(n_rays)]

    jobs = []
    for i in range(n_random_pairs):
        jobs.append(("random_random", None, ps[i], qs[i]))
    for r in range(n_rays):
        for t in ray_steps:
            jobs.append(("near_diagonal", float(t), bases[r], bases[r] + t * dirs[r]))

    def run(job):
        kind, t, cells_p, cells_q = job
        try:
            op_p = forward(cells_p)
            op_q = forward(cells_q)
        except HolderLabError as exc:
            return ("dropped", kind, t, type(exc).__name__)
        d_r = _cell_frobenius(spec, cells_p, cells_q, rq.cell_subset)
        d_f = operator_distance(op_p, op_q)
        ph = phi(op_p, op_q, weights)
        d_fin = finite_distance(fm, op_p, op_q) if fm is not None else None
        flags = ()
        if d_f == 0.0 and d_r > 0.0:
            flags = ("injectivity_violation",)
        return ("ok", kind, t, d_r, d_f, ph, d_fin, flags, (op_p, op_q))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]

    records = []
    operators = [] if keep_operators else None
    dropped = 0
    pair_id = 0
    for res in results:
        if res[0] == "dropped":
            dropped += 1
            continue
        _, kind, t, d_r, d_f, ph, d_fin, flags, ops = res
        records.append(
            StabilityRecord(pair_id, kind, t, d_r, d_f, ph, d_fin, flags)
        )
        if keep_operators:
            operators.append(ops)
        pair_id += 1
    return SweepResult(records, dropped, operators)


def add_finite_distances(result, fm):
    """Copy of the sweep records with delta_finite filled from the
    retained operator pairs."""
    if result.operators is None:
        raise ValueError("sweep was run without keep_operators")
    records = [
        replace(rec, delta_finite=finite_distance(fm, a, b))
        for rec, (a, b) in zip(result.records, result.operators)
    ]
    return SweepResult(records, result.dropped, result.operators)


def fit_holder(records, n_bins=8, slack=0.1):
    """Upper-envelope power-law fit of delta_R against delta_F.

    Records are binned by log delta_F; the per-bin maximum of
    log delta_R anchors a least-squares line whose slope is theta
    (capped at 1, pre-cap value kept); the intercept is then lifted
    minimally so every record sits within `slack` log units of the
    envelope.
    """
    if n_bins < 2:
        raise ValueError("need at least two bins")
    if slack < 0:
        raise ValueError("slack must be nonnegative")
    records = list(records)
    if all(r.delta_R == 0.0 for r in records):
        return HolderFit(
            theta=1.0,
            theta_precap=1.0,
            log_C=float("-inf"),
            n_bins=n_bins,
            slack=slack,
            max_violation=0.0,
            records_used=0,
            constant_R=True,
        )
    usable = [r for r in records if r.delta_F > 0.0 and r.delta_R > 0.0]
    if len(usable) < 2:
        raise InsufficientSpread("need at least two records with positive distances")
    x = np.log(np.array([r.delta_F for r in usable]))
    y = np.log(np.array([r.delta_R for r in usable]))
    span = (x.max() - x.min()) / math.log(10.0)
    if span < 2.0:
        raise InsufficientSpread(
            "delta_F spans %.2f decades, need at least 2" % span
        )
    edges_lo, edges_hi = x.min(), x.max()
    idx = np.clip(
        ((x - edges_lo) / (edges_hi - edges_lo) * n_bins).astype(int), 0, n_bins - 1
    )
    anchors_x, anchors_y = [], []
    for b in range(n_bins):
        mask = idx == b
        if not mask.any():
            continue
        top = np.argmax(y[mask])
        anchors_x.append(x[mask][top])
        anchors_y.append(y[mask][top])
    ax = np.array(anchors_x)
    ay = np.array(anchors_y)
    design = np.column_stack([ax, np.ones_like(ax)])
    (theta_precap, intercept), *_ = np.linalg.lstsq(design, ay, rcond=None)
    theta = min(float(theta_precap), 1.0)
    if theta != theta_precap:
        intercept = float(np.mean(ay - theta * ax))
    excess = y - (theta * x + intercept)
    lift = max(0.0, float(excess.max()) - slack)
    log_c = float(intercept) + lift
    return HolderFit(
        theta=theta,
        theta_precap=float(theta_precap),
        log_C=log_c,
        n_bins=n_bins,
        slack=slack,
        max_violation=float(excess.max()) - lift,
        records_used=len(usable),
        constant_R=False,
    )


def _log_slopes(ts, fs):
    """Centered log-log difference quotients, one-sided at the ends."""
    lt = np.log(ts)
    lf = np.log(fs)
    n = len(ts)
    slopes = np.empty(n)
    for i in range(n):
        lo = max(i - 1, 0)
        hi = min(i + 1, n - 1)
        slopes[i] = (lf[hi] - lf[lo]) / (lt[hi] - lt[lo])
    return slopes


def flat_counterexample(ts, tol=1e-14):
    """F(t) = integral of exp(-1/s^2) over [0, t] with local log-log
    slopes; the slopes blow up as t decreases, defeating any power-law
    envelope."""
    ts = np.sort(np.asarray(ts, dtype=float))
    if ts[0] <= 0.0 or ts[-1] > 1.0:
        raise ValueError("sample points must lie in (0, 1]")
    fs = np.array([adaptive_quadrature(flat_integrand, 0.0, t, tol) for t in ts])
    slopes = _log_slopes(ts, fs)
    return [FlatMapSample(float(t), float(f), float(s)) for t, f, s in zip(ts, fs, slopes)]


@dataclass
class AnalyticControl:
    samples: list
    fit: HolderFit


def analytic_control(ts, tol=1e-14, grid_n=100, n_bins=8, slack=0.1):
    """Same pipeline on the analytic map F(t) = t^3: quadrature of the
    exact derivative, local slopes (all 3), and an envelope fit over a
    brute-force grid of parameter pairs."""
    ts = np.sort(np.asarray(ts, dtype=float))
    if ts[0] <= 0.0 or ts[-1] > 1.0:
        raise ValueError("sample points must lie in (0, 1]")
    fs = np.array(
        [adaptive_quadrature(lambda s: 3.0 * s * s, 0.0, t, tol) for t in ts]
    )
    slopes = _log_slopes(ts, fs)
    samples = [
        FlatMapSample(float(t), float(f), float(s)) for t, f, s in zip(ts, fs, slopes)
    ]
    grid = np.linspace(-1.0, 1.0, grid_n)
    p, q = np.meshgrid(grid, grid)
    p = p.ravel()
    q = q.ravel()
    keep = p != q
    d_f = np.abs(p[keep] ** 3 - q[keep] ** 3)
    d_r = np.abs(p[keep] - q[keep])
    records = [
        StabilityRecord(i, "grid_pair", None, float(r), float(f), 0.0)
        for i, (r, f) in enumerate(zip(d_r, d_f))
    ]
    return AnalyticControl(samples, fit_holder(records, n_bins=n_bins, slack=slack))


def injectivity_probe(records, floor):
    """Records whose recovered-quantity distance clears the floor while
    the operator distance sits below floor times the data scale; an
    empty list is a pass for the exact-recovery hypothesis.

    The scale is the largest observed delta_F, or 1 if all operator
    distances vanish.
    """
    records = list(records)
    scale = max((r.delta_F for r in records), default=0.0)
    if scale == 0.0:
        scale = 1.0
    return [
        r for r in records if r.delta_R > floor and r.delta_F < floor * scale
    ]
