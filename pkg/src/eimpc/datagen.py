"""Training data over the feasible-parameter set.

The set of feasible initial states has no explicit description; the QP solver
is its membership oracle. Samples are produced by walking from known feasible
states toward quasi-random goal points in small steps, hot-starting each solve
from the previous one and stopping at the first infeasible point (the set is
convex, so nothing further along the ray can be feasible).
"""

import logging
import math
import os
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .active_set import Status, Termination, get_solver
from .batch_qp import assemble_batch
from .errors import FormatError, InfeasibleError, InvalidArgumentError, IterationLimitError
from .formats import problem_hash
from .geometry import hit_and_run

log = logging.getLogger(__name__)

MAX_SOBOL_DIM = 40
DATA_MAGIC = b"MPCD"
DATA_VERSION = 1
_HEADER = struct.Struct("<5I")


@dataclass(frozen=True, eq=False)
class SampleRecord:
    """Optimal primal-dual tuple at ``x``; ``aux`` is the final working set."""

    x: np.ndarray
    z: np.ndarray
    nu: np.ndarray
    lam: np.ndarray
    aux: tuple = ()


@dataclass(frozen=True)
class WalkConfig:
    n_train: int
    n_buffer: int
    n_test: int
    step_d: float = None
    seed: int = 0

    def __post_init__(self):
        if min(self.n_train, self.n_buffer, self.n_test) < 0:
            raise InvalidArgumentError("goal counts must be non-negative")
        if self.step_d is not None and not self.step_d > 0:
            raise InvalidArgumentError("step_d must be positive")


def default_step(spec):
    """One twentieth of the shortest edge of the bounding box of ``X``."""
    lo, hi = _bounding_box(spec.X)
    return float((hi - lo).min()) / 20.0


def _bounding_box(P):
    bb = P.box_bounds()
    if bb is not None:
        return bb
    d = P.dim
    hi = np.array([P.support(e) for e in np.eye(d)])
    lo = -np.array([P.support(-e) for e in np.eye(d)])
    return lo, hi


# -- Sobol goals ----------------------------------------------------------

def sobol(dim, count, lower=None, upper=None):
    """First ``count`` unscrambled Sobol points (zero point skipped) mapped to a box."""
    if not 1 <= dim <= MAX_SOBOL_DIM:
        raise InvalidArgumentError(f"Sobol dimension must lie in [1, {MAX_SOBOL_DIM}], got {dim}")
    if count < 0:
        raise InvalidArgumentError("count must be non-negative")
    lower = np.zeros(dim) if lower is None else np.asarray(lower, dtype=float)
    upper = np.ones(dim) if upper is None else np.asarray(upper, dtype=float)
    if count == 0:
        return np.zeros((0, dim))
    eng = qmc.Sobol(dim, scramble=False)
    eng.fast_forward(1)
    with warnings.catch_warnings():
        # balance warning for counts that are not powers of two
        warnings.simplefilter("ignore", UserWarning)
        u = eng.random(count)
    return lower + u * (upper - lower)


# -- dataset files --------------------------------------------------------

def write_dataset(path, records, dims):
    """Write records in the MPCD binary layout.

    ``dims`` is ``(n, d_p, d_eq, d_in)``.
    """
    with open(path, "wb") as f:
        f.write(dataset_bytes(records, dims))


def dataset_bytes(records, dims):
    n, d_p, d_eq, d_in = (int(v) for v in dims)
    out = [DATA_MAGIC, bytes([DATA_VERSION]), _HEADER.pack(n, d_p, d_eq, d_in, len(records))]
    for r in records:
        vals = np.concatenate([r.x, r.z, r.nu, r.lam]).astype("<f8")
        if vals.size != n + d_p + d_eq + d_in:
            raise InvalidArgumentError("record does not match the dataset dimensions")
        out.append(vals.tobytes())
        aux = np.asarray(r.aux, dtype="<u4")
        out.append(struct.pack("<I", aux.size))
        out.append(aux.tobytes())
    return b"".join(out)


def read_dataset(path):
    """Return ``(dims, records)``; raises FormatError with the byte offset on damage."""
    with open(path, "rb") as f:
        return parse_dataset(f.read())


def parse_dataset(buf):
    if buf[:4] != DATA_MAGIC:
        raise FormatError("missing MPCD magic", 0)
    if len(buf) < 5 + _HEADER.size:
        raise FormatError("truncated header", len(buf))
    if buf[4] != DATA_VERSION:
        raise FormatError(f"unsupported dataset version {buf[4]}", 4)
    n, d_p, d_eq, d_in, count = _HEADER.unpack_from(buf, 5)
    pos = 5 + _HEADER.size
    width = n + d_p + d_eq + d_in
    records = []
    cuts = np.cumsum([0, n, d_p, d_eq])
    for _ in range(count):
        if pos + 8 * width + 4 > len(buf):
            raise FormatError("truncated record", pos)
        vals = np.frombuffer(buf, dtype="<f8", count=width, offset=pos).astype(float)
        pos += 8 * width
        (k,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        if pos + 4 * k > len(buf):
            raise FormatError("truncated auxiliary section", pos)
        aux = tuple(int(i) for i in np.frombuffer(buf, dtype="<u4", count=k, offset=pos))
        pos += 4 * k
        x, z, nu, lam = np.split(vals, cuts[1:])
        records.append(SampleRecord(x, z, nu, lam, aux))
    if pos != len(buf):
        raise FormatError("trailing bytes after the last record", pos)
    return (n, d_p, d_eq, d_in), records


def stack_records(records):
    """Stack records into arrays ``(X, Z, Nu, Lam)``."""
    return tuple(np.array([getattr(r, a) for r in records]) for a in ("x", "z", "nu", "lam"))


# -- walks ----------------------------------------------------------------

def solve_record(solver, x, seed=None):
    """Optimal record at ``x`` (hot started from ``seed`` if given), or None if infeasible."""
    if seed is None:
        res = solver.solve(x)
    else:
        res = solver.solve(x, z_init=seed.z, working_hint=seed.aux)
    if res.status != Status.OPTIMAL:
        return None, res
    return SampleRecord(np.array(x, dtype=float), res.z, res.nu, res.lam, tuple(res.working)), res


def line_solve(seed, x_goal, step_d, qp, solver=None, stats=None):
    """Records along the segment from ``seed.x`` toward ``x_goal``.

    Points are spaced ``step_d`` apart with the last one clamped to the goal.
    The walk stops at the first infeasible point or iteration-limit failure.
    """
    solver = solver or get_solver(qp)
    x0 = seed.x
    gap = np.asarray(x_goal, dtype=float) - x0
    dist = float(np.linalg.norm(gap))
    if dist == 0.0:
        return []
    steps = math.ceil(dist / step_d)
    unit = gap / dist
    out = []
    prev = seed
    for i in range(1, steps + 1):
        x = x_goal if i == steps else x0 + i * step_d * unit
        try:
            rec, res = solve_record(solver, x, prev)
        except IterationLimitError as e:
            log.warning("walk stopped at %s: %s", x, e)
            break
        if stats is not None:
            stats.append(res.iterations)
        if rec is None:
            break
        out.append(rec)
        prev = rec
    return out


def random_walk(goals, seeds, step_d, qp, solver=None, rng=None):
    """Walk from a randomly drawn seed toward each goal in turn.

    Returns
    -------
    seeds : list of SampleRecord
        Input pool extended by the last record of every non-empty walk.
    records : list of SampleRecord
    """
    if not seeds:
        raise InvalidArgumentError("the seed pool is empty")
    rng = np.random.default_rng(rng)
    solver = solver or get_solver(qp)
    seeds = list(seeds)
    records = []
    for g in goals:
        s = seeds[int(rng.integers(len(seeds)))]
        walk = line_solve(s, g, step_d, qp, solver)
        records.extend(walk)
        if walk:
            seeds.append(walk[-1])
        else:
            log.debug("empty walk toward %s; seed pool unchanged", g)
    return seeds, records


@dataclass
class GeneratedData:
    train: list
    test: list
    manifest: dict = field(default_factory=dict)
    dims: tuple = ()


def generate_data(spec, config, qp=None, solver=None, x0=None):
    """Train and test records from three chained walk stages.

    Train walks start from the optimal record at ``x0`` (the origin by
    default); buffer walks start from the train seed pool; test walks start
    only from seeds created during the buffer stage. Buffer records are
    discarded.

    Raises
    ------
    InfeasibleError
        If ``x0`` is infeasible.
    """
    qp = qp or assemble_batch(spec)
    solver = solver or get_solver(qp)
    step_d = config.step_d or default_step(spec)
    x0 = np.zeros(spec.n) if x0 is None else np.asarray(x0, dtype=float)
    s0, _ = solve_record(solver, x0)
    if s0 is None:
        raise InfeasibleError(f"initial state {x0} is infeasible")
    lo, hi = _bounding_box(spec.X)
    total = config.n_train + config.n_buffer + config.n_test
    goals = sobol(spec.n, total, lo, hi)
    g_trn = goals[:config.n_train]
    g_bf = goals[config.n_train:config.n_train + config.n_buffer]
    g_tst = goals[config.n_train + config.n_buffer:]
    rng = np.random.default_rng(config.seed)

    s_trn, d_trn = random_walk(g_trn, [s0], step_d, qp, solver, rng)
    s_bf, _ = random_walk(g_bf, s_trn, step_d, qp, solver, rng)
    test_seeds = s_bf[len(s_trn):]
    if not test_seeds and len(g_tst):
        log.warning("buffer stage produced no seeds; test walks start from the train pool")
        test_seeds = s_bf
    _, d_tst = random_walk(g_tst, test_seeds, step_d, qp, solver, rng) if len(g_tst) else (None, [])

    train = [s0] + d_trn
    seen = {r.x.tobytes() for r in train}
    test = [r for r in d_tst if r.x.tobytes() not in seen]
    manifest = {
        "problem": spec.name,
        "problem_sha256": problem_hash(spec),
        "seed": config.seed,
        "step_d": step_d,
        "goals": [config.n_train, config.n_buffer, config.n_test],
        "train_records": len(train),
        "test_records": len(test),
        "train_seeds": len(s_trn),
        "buffer_seeds": len(s_bf) - len(s_trn),
    }
    dims = (qp.dims.n, qp.dims.d_p, qp.dims.d_eq, qp.dims.d_in)
    return GeneratedData(train, test, manifest, dims)


def manifest_text(manifest):
    """Key-value text; the timestamp honours SOURCE_DATE_EPOCH for reproducible output."""
    stamp = os.environ.get("SOURCE_DATE_EPOCH")
    lines = [f"{k} = {v}" for k, v in manifest.items()]
    lines.append(f"generated = {int(stamp) if stamp else 'unset'}")
    return "\n".join(lines) + "\n"


# -- rejection sampling ---------------------------------------------------

@dataclass(frozen=True)
class RejectionResult:
    fraction: float
    half_width: float
    samples: int
    feasible: int
    cut_hits: int = 0


def rejection_rate(spec, sample_count, rng=None, qp=None, solver=None, use_cuts=True):
    """Fraction of uniform samples from ``X`` whose QP is feasible.

    Each infeasible solve yields a certificate ``a' x < beta`` valid for all
    states; later samples violating a stored certificate are counted as
    infeasible without a solve. The 95% half-width uses the normal
    approximation of the binomial.
    """
    if sample_count < 1:
        raise InvalidArgumentError("sample_count must be >= 1")
    rng = np.random.default_rng(rng)
    qp = qp or assemble_batch(spec)
    solver = solver or get_solver(qp)
    bb = spec.X.box_bounds()
    if bb is not None:
        xs = rng.uniform(bb[0], bb[1], (sample_count, spec.n))
    else:
        xs = hit_and_run(spec.X, sample_count, rng)
    crit = Termination.parse("pf")
    cut_A = np.zeros((0, spec.n))
    cut_b = np.zeros(0)
    feasible = hits = 0
    for x in xs:
        if cut_b.size and np.any(cut_A @ x < cut_b):
            hits += 1
            continue
        res = solver.solve(x, criterion=crit)
        if res.feasible:
            feasible += 1
        elif use_cuts and res.farkas is not None:
            a, beta = res.farkas
            scale = np.linalg.norm(a)
            if scale > 0:
                # small safety margin so rounding never rejects a feasible state
                cut_A = np.vstack([cut_A, a / scale])
                cut_b = np.append(cut_b, beta / scale - 1e-9)
    p = feasible / sample_count
    hw = 1.96 * math.sqrt(p * (1.0 - p) / sample_count)
    return RejectionResult(p, hw, sample_count, feasible, hits)
