"""Two-block alternating minimization and model persistence.

Each outer iteration solves the duration subproblem exactly (per-category
breakpoint sweeps), then runs inner proximal-gradient steps on the utility
matrix.  Both blocks can only lower the joint objective

    eta * hinge(positives) + (1 - eta) * shrinkage(unlabeled) + lam ||X||_*

so the recorded trace is non-increasing; an increase beyond float tolerance
aborts with a diagnostic.
"""

from __future__ import annotations

import dataclasses
import hashlib
import struct
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data import CategoryMap, PurchaseLog, RecencyIndex, build_recency_index
from .durations import build_worksets, update_durations
from .errors import ModelFileError, SolverError
from .utility import (
    FactoredUtilityMatrix,
    MatrixOperator,
    SolverConfig,
    compute_targets,
    hinge_objective,
    randomized_svd,
    update_X,
)

_MAGIC = b"DRECMDL\x00"
_VERSION = 1


@dataclass(eq=False)
class ModelState:
    """Fitted model: factored utilities, durations, and provenance."""

    X: FactoredUtilityMatrix
    d: np.ndarray
    config: SolverConfig
    objective_history: list
    iterations: int
    duration_flags: tuple
    l: int

    @property
    def m(self) -> int:
        return self.X.m

    @property
    def n(self) -> int:
        return self.X.n

    @property
    def r(self) -> int:
        return self.d.shape[0]


@dataclass(eq=False)
class FitReport:
    converged: bool
    iterations: int
    objective_history: list
    duration_flags: tuple
    seconds_per_iteration: list
    final_objective: float

    def to_text(self) -> str:
        lines = [
            f"converged = {self.converged}",
            f"iterations = {self.iterations}",
            f"final_objective = {self.final_objective!r}",
            f"empty_categories = {','.join(map(str, self.duration_flags))}",
        ]
        for i, (obj, sec) in enumerate(
            zip(self.objective_history[1:], self.seconds_per_iteration), start=1
        ):
            lines.append(f"iteration_{i} = {obj!r} ({sec:.2f}s)")
        return "\n".join(lines) + "\n"


def evaluate_objective(
    X: FactoredUtilityMatrix,
    d,
    log: PurchaseLog,
    cats: CategoryMap,
    rec: RecencyIndex,
    cfg: SolverConfig,
) -> float:
    """Joint objective at (X, d), never touching all m*n*l cells."""
    targets = compute_targets(log, cats, rec, d)
    return hinge_objective(X, targets, cfg.eta) + cfg.lam * float(X.sigma.sum())


def init_utility(log: PurchaseLog, cfg: SolverConfig) -> FactoredUtilityMatrix:
    """Start X from a randomized SVD of the purchase-count matrix
    sum_k p_ijk, rescaled to unit spectral norm."""
    pairs = log.pairs()
    indptr = np.searchsorted(pairs.users, np.arange(log.m + 1))
    counts = sp.csr_matrix(
        (pairs.counts.astype(float), pairs.items, indptr), shape=(log.m, log.n)
    )
    rng = np.random.default_rng(cfg.seed)
    U, sig, V = randomized_svd(
        MatrixOperator(counts), cfg.max_rank, cfg.oversample, cfg.power_iters, rng
    )
    keep = sig > 0
    U, sig, V = U[:, keep], sig[keep], V[:, keep]
    if sig.shape[0]:
        sig = sig / sig[0]
    return FactoredUtilityMatrix(U, sig, V)


def fit(
    log: PurchaseLog,
    cats: CategoryMap,
    cfg: SolverConfig,
    init: ModelState | None = None,
):
    """Alternate duration and utility updates until the relative objective
    change drops below ``cfg.tol`` or ``cfg.outer_iters`` is reached.

    Returns ``(ModelState, FitReport)``.  Deterministic: the same inputs and
    seed reproduce the model exactly.  ``init`` warm-starts from a previous
    state.
    """
    rec = build_recency_index(log, cats)
    if init is not None:
        if init.m != log.m or init.n != log.n or init.r != cats.r:
            raise SolverError("warm-start state does not match the data dimensions")
        X = init.X
        d = init.d.copy()
    else:
        X = init_utility(log, cfg)
        d = np.zeros(cats.r)

    f = evaluate_objective(X, d, log, cats, rec, cfg)
    history = [f]
    flags: tuple = ()
    seconds = []
    converged = False
    iteration = 0
    for iteration in range(1, cfg.outer_iters + 1):
        t0 = time.perf_counter()
        worksets = build_worksets(log, cats, rec, X)
        d, flags = update_durations(worksets)
        targets = compute_targets(log, cats, rec, d)
        X = update_X(X, targets, cfg)
        f_new = hinge_objective(X, targets, cfg.eta) + cfg.lam * float(X.sigma.sum())
        seconds.append(time.perf_counter() - t0)
        if f_new > f + 1e-8 * max(1.0, abs(f)):
            raise SolverError(
                f"objective increased across outer iteration {iteration}: "
                f"{f:.8g} -> {f_new:.8g}"
            )
        rel = abs(f_new - f) / max(1.0, abs(f))
        history.append(f_new)
        f = f_new
        if rel < cfg.tol:
            # a single iteration cannot witness stabilization; the trivial
            # stop (e.g. tol = inf) is recorded as not converged
            converged = iteration >= 2
            break

    state = ModelState(
        X=X,
        d=d,
        config=cfg,
        objective_history=list(history),
        iterations=iteration,
        duration_flags=flags,
        l=log.l,
    )
    report = FitReport(
        converged=converged,
        iterations=iteration,
        objective_history=list(history),
        duration_flags=flags,
        seconds_per_iteration=seconds,
        final_objective=f,
    )
    return state, report


# ---------------------------------------------------------------------------
# model file: magic, version, dims, little-endian float64 arrays, config text
# with a sha256 digest.  save -> load -> save is byte-identical.


def _config_text(cfg: SolverConfig) -> bytes:
    fields = sorted(f.name for f in dataclasses.fields(cfg))
    text = "".join(f"{name} = {getattr(cfg, name)!r}\n" for name in fields)
    return text.encode()


def _config_from_text(text: str) -> SolverConfig:
    values = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    defaults = SolverConfig()
    kwargs = {}
    for key, val in values.items():
        if not hasattr(defaults, key):
            raise ModelFileError(f"unknown config key in model file: {key!r}")
        kwargs[key] = type(getattr(defaults, key))(val)
    return SolverConfig(**kwargs)


def save_model(state: ModelState, path) -> None:
    cfg_bytes = _config_text(state.config)
    k = state.X.rank
    parts = [
        _MAGIC,
        struct.pack("<I", _VERSION),
        struct.pack("<5Q", state.m, state.n, state.l, state.r, k),
        np.ascontiguousarray(state.X.U, dtype="<f8").tobytes(),
        np.ascontiguousarray(state.X.sigma, dtype="<f8").tobytes(),
        np.ascontiguousarray(state.X.V, dtype="<f8").tobytes(),
        np.ascontiguousarray(state.d, dtype="<f8").tobytes(),
        struct.pack("<Q", len(state.objective_history)),
        np.asarray(state.objective_history, dtype="<f8").tobytes(),
        struct.pack("<Q", state.iterations),
        struct.pack("<Q", len(state.duration_flags)),
        np.asarray(state.duration_flags, dtype="<i8").tobytes(),
        struct.pack("<Q", len(cfg_bytes)),
        cfg_bytes,
        hashlib.sha256(cfg_bytes).digest(),
    ]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_model(path) -> ModelState:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < len(_MAGIC) + 4 or buf[: len(_MAGIC)] != _MAGIC:
        raise ModelFileError(f"{path}: not a model file")
    off = len(_MAGIC)

    def take(n):
        nonlocal off
        if off + n > len(buf):
            raise ModelFileError(f"{path}: truncated model file")
        out = buf[off : off + n]
        off += n
        return out

    (version,) = struct.unpack("<I", take(4))
    if version != _VERSION:
        raise ModelFileError(f"{path}: unsupported model version {version}")
    m, n, l, r, k = struct.unpack("<5Q", take(40))

    def farray(count):
        return np.frombuffer(take(8 * count), dtype="<f8").astype(float)

    U = farray(m * k).reshape(m, k)
    sigma = farray(k)
    V = farray(n * k).reshape(n, k)
    d = farray(r)
    (hist_len,) = struct.unpack("<Q", take(8))
    history = farray(hist_len).tolist()
    (iterations,) = struct.unpack("<Q", take(8))
    (n_flags,) = struct.unpack("<Q", take(8))
    flags = tuple(
        int(x) for x in np.frombuffer(take(8 * n_flags), dtype="<i8")
    )
    (cfg_len,) = struct.unpack("<Q", take(8))
    cfg_bytes = take(cfg_len)
    digest = take(32)
    if off != len(buf):
        raise ModelFileError(f"{path}: trailing bytes in model file")
    if hashlib.sha256(cfg_bytes).digest() != digest:
        raise ModelFileError(f"{path}: config digest mismatch (corrupt file)")
    cfg = _config_from_text(cfg_bytes.decode())
    return ModelState(
        X=FactoredUtilityMatrix(U, sigma, V),
        d=d,
        config=cfg,
        objective_history=history,
        iterations=int(iterations),
        duration_flags=flags,
        l=int(l),
    )
