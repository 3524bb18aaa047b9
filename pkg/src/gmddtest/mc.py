"""Simulation designs and the replication engine.

Nine data-generating processes are built in: five linear-model designs
(LS1-LS5) for the specification test and four conditional-mean designs
(MI1-MI4) for the mean-independence test.  LS1 has exogenous regressors
(fit by OLS); LS2-LS4 make the first regressor endogenous and are fit by
just-identified IV on (z1, z2); LS5 is exogenous with an interaction
alternative.  MI designs split four correlated predictors into an active
and an inactive pair and condition on two of them.  gamma scales the
deviation from each null; gamma = 0 restores it.

Randomness comes from counter-based streams: every replicate derives its
own generator from (master seed, replicate index), normal draws go
through the inverse CDF, and correlated pairs use the lower-triangular
factor of the target covariance.  Results are therefore bitwise
reproducible and independent of the worker-pool schedule.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtri

from .bootstrap_icm import (
    FAMILIES as BOOT_FAMILIES,
    BootstrapConfig,
    mi_wild_bootstrap_pvalue,
    wild_bootstrap_many,
    wild_bootstrap_pvalue,
)
from .dataio import Dataset
from .estimators import ModelSpec
from .kernels import KernelSpec
from .mi_test import VSpec, default_h, mi_test
from .spec_test import SpecVSpec, spec_test

__all__ = [
    "LS_IDS",
    "MI_IDS",
    "TEST_NAMES",
    "DgpSpec",
    "SimRow",
    "TimingRow",
    "SimResult",
    "generate",
    "default_model",
    "default_spec_vspec",
    "default_mi_vspec",
    "default_kernel",
    "replicate_rng",
    "standard_normal",
    "run_size_experiment",
    "run_power_curve",
    "run_timing_benchmark",
]

LS_IDS = ("LS1", "LS2", "LS3", "LS4", "LS5")
MI_IDS = ("MI1", "MI2", "MI3", "MI4")
TEST_NAMES = ("chi2",) + BOOT_FAMILIES

_Z_CORR = 0.25
_UV_CORR = 0.5

# Stream tags keep dataset draws, bootstrap draws, and replicate keys in
# disjoint parts of the counter space.
_TAG_DGP = 101
_TAG_SIM = 202

_DGP_INDEX = {name: i for i, name in enumerate(LS_IDS + MI_IDS)}


@dataclass(frozen=True)
class DgpSpec:
    """One simulation design instance: identifier, size, deviation, seed."""

    id: str
    n: int
    gamma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "id", str(self.id).upper())
        if self.id not in _DGP_INDEX:
            raise ValueError(f"unknown DGP {self.id!r}; known: {LS_IDS + MI_IDS}")
        if self.n < 8:
            raise ValueError("n must be at least 8")
        if not np.isfinite(self.gamma):
            raise ValueError("gamma must be finite")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")


@dataclass
class SimRow:
    dgp: str
    test: str
    n: int
    gamma: float
    level: float
    rate: float
    mc_se: float


@dataclass
class TimingRow:
    dgp: str
    test: str
    n: int
    reps: int
    mean_s: float
    sd_s: float
    median_s: float
    median_rel: float
    iqr_rel: float


@dataclass
class SimResult:
    rows: list = field(default_factory=list)
    timings: list = field(default_factory=list)
    reps: int = 0
    failed: int = 0

    def to_json_dict(self) -> dict:
        return {
            "reps": self.reps,
            "failed": self.failed,
            "rows": [vars(r) for r in self.rows],
            "timings": [vars(t) for t in self.timings],
        }


def replicate_rng(*key) -> np.random.Generator:
    """Counter-based generator for an integer key tuple."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def standard_normal(gen: np.random.Generator, size) -> np.ndarray:
    """Standard normals via the inverse CDF, for cross-run determinism."""
    u = gen.random(size)
    return ndtri(np.maximum(u, 2.0**-54))


def _correlated_pair(gen: np.random.Generator, n: int, rho: float):
    # Lower-triangular factor of [[1, rho], [rho, 1]].
    e = standard_normal(gen, (2, n))
    return e[0], rho * e[0] + np.sqrt(1.0 - rho * rho) * e[1]


def generate(dgp: DgpSpec) -> Dataset:
    """Draw one dataset from the design, deterministically in the seed."""
    gen = replicate_rng(_TAG_DGP, _DGP_INDEX[dgp.id], dgp.seed)
    n, gamma = dgp.n, dgp.gamma
    provenance = f"{dgp.id}(n={n}, gamma={gamma}, seed={dgp.seed})"

    if dgp.id in LS_IDS:
        z1, z2 = _correlated_pair(gen, n, _Z_CORR)
        if dgp.id in ("LS1", "LS5"):
            u = standard_normal(gen, n)
            x1, x2 = z1, z2
            cols = ["y", "x1", "x2", "z1", "z2", "u"]
        else:
            u, u_tilde = _correlated_pair(gen, n, _UV_CORR)
            x1 = (z1 + u_tilde) / np.sqrt(2.0)
            x2 = z2
            cols = ["y", "x1", "x2", "z1", "z2", "u", "u_tilde"]
        noise = u / np.sqrt(1.0 + x2 * x2)
        if dgp.id == "LS1":
            term = 0.0
        elif dgp.id == "LS2":
            term = gamma * z1 * z1 / np.sqrt(2.0)
        elif dgp.id == "LS3":
            term = 5.0 * gamma * z1 * z1 / np.sqrt(n)
        elif dgp.id == "LS4":
            term = gamma * np.sin(2.0 * z1) / np.sqrt((1.0 - np.exp(-8.0)) / 2.0)
        else:
            term = gamma * x1 * x2
        y = x1 + x2 + term + noise
        data = [y, x1, x2, z1, z2, u]
        if dgp.id not in ("LS1", "LS5"):
            data.append(u_tilde)
        return Dataset(tuple(cols), np.column_stack(data), provenance=provenance)

    xi1, xi2 = _correlated_pair(gen, n, _Z_CORR)
    xi3, xi4 = _correlated_pair(gen, n, _Z_CORR)
    eps = standard_normal(gen, n)
    if dgp.id == "MI1":
        u = xi1 + xi2 + eps / np.sqrt(1.0 + xi3 * xi3 + xi4 * xi4)
        zc1, zc2 = xi3, xi4
    else:
        noise = eps / np.sqrt(2.0 * (1.0 + xi3 * xi3 + xi4 * xi4))
        zc1, zc2 = xi1, xi4
        if dgp.id == "MI2":
            u = 0.5 * gamma * np.sqrt(xi1 * xi1 + xi2 * xi2) + noise
        elif dgp.id == "MI3":
            cut = -ndtri(0.25)
            u = 0.5 * gamma * (np.abs(xi1) < cut).astype(float) + noise
        else:
            u = gamma * (xi1 + xi2) ** 2 / np.sqrt(n) + noise
    return Dataset(
        ("u", "z1", "z2", "xi1", "xi2", "xi3", "xi4", "eps"),
        np.column_stack([u, zc1, zc2, xi1, xi2, xi3, xi4, eps]),
        provenance=provenance,
    )


def default_model(dgp_id: str) -> ModelSpec:
    """The null model fit in each LS design."""
    dgp_id = dgp_id.upper()
    if dgp_id in ("LS1", "LS5"):
        return ModelSpec("ols", "y", ("x1", "x2"))
    if dgp_id in LS_IDS:
        return ModelSpec("iv", "y", ("x1", "x2"), iv_cols=("z1", "z2"))
    raise ValueError(f"{dgp_id} has no regression model")


def _aug_quad(z: np.ndarray) -> np.ndarray:
    return z[:, 0] ** 2 + z[:, 1] ** 2 + z[:, 0] * z[:, 1]


def _aug_cross(z: np.ndarray) -> np.ndarray:
    return z[:, 0] * z[:, 1]


def default_spec_vspec(dgp_id: str) -> SpecVSpec:
    """Scalar V with delta_b = 0.5 per coordinate, plus the per-design
    additive augmentation (quadratic for LS3/LS4, interaction for LS5)."""
    dgp_id = dgp_id.upper()
    if dgp_id in ("LS1", "LS2"):
        return SpecVSpec()
    if dgp_id in ("LS3", "LS4"):
        return SpecVSpec(augmentation=_aug_quad)
    if dgp_id == "LS5":
        return SpecVSpec(augmentation=_aug_cross)
    raise ValueError(f"{dgp_id} has no specification-test setup")


def default_mi_vspec() -> VSpec:
    return VSpec(symmetrized_h=(default_h,))


def default_kernel(p_z: int = 2) -> KernelSpec:
    return KernelSpec("gauss", p_z)


def _chi2_pvalue(ds: Dataset, dgp_id: str, iota: float) -> float:
    if dgp_id in LS_IDS:
        res = spec_test(ds, default_model(dgp_id), default_spec_vspec(dgp_id), default_kernel(), iota)
    else:
        res = mi_test(ds.col("u"), ds.cols(("z1", "z2")), default_mi_vspec(), default_kernel(), iota)
    return res.p_value


def _replicate_pvalues(
    dgp_id: str,
    n: int,
    gamma: float,
    master_seed: int,
    rep: int,
    tests: tuple[str, ...],
    B: int,
    multiplier: str,
    iota: float,
) -> dict[str, float]:
    state = np.random.SeedSequence([_TAG_SIM, master_seed, rep]).generate_state(2, np.uint64)
    ds = generate(DgpSpec(dgp_id, n, gamma, seed=int(state[0])))
    out: dict[str, float] = {}
    if "chi2" in tests:
        out["chi2"] = _chi2_pvalue(ds, dgp_id, iota)
    boot_fams = tuple(t for t in tests if t in BOOT_FAMILIES)
    if boot_fams:
        cfg = BootstrapConfig(B=B, multiplier=multiplier, seed=int(state[1]))
        if dgp_id in LS_IDS:
            results = wild_bootstrap_many(ds, default_model(dgp_id), boot_fams, cfg)
            for fam in boot_fams:
                out[fam] = results[fam].p_value
        else:
            u = ds.col("u")
            z = ds.cols(("z1", "z2"))
            for fam in boot_fams:
                out[fam] = mi_wild_bootstrap_pvalue(u, z, fam, cfg).p_value
    return out


def _replicate_task(args):
    rep = args[4]
    try:
        return rep, _replicate_pvalues(*args)
    except Exception as exc:  # recorded and excluded by the caller
        return rep, f"{type(exc).__name__}: {exc}"


def _map_ordered(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    chunksize = max(1, len(items) // (threads * 4))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))


def _validate_tests(tests) -> tuple[str, ...]:
    tests = tuple(tests)
    if not tests:
        raise ValueError("need at least one test")
    for t in tests:
        if t not in TEST_NAMES:
            raise ValueError(f"unknown test {t!r}; known: {TEST_NAMES}")
    return tests


def _collect_pvalues(dgp, tests, R, B, multiplier, iota, threads):
    args = [(dgp.id, dgp.n, dgp.gamma, dgp.seed, rep, tests, B, multiplier, iota) for rep in range(R)]
    results = _map_ordered(_replicate_task, args, threads)
    pvals: dict[str, list[float]] = {t: [] for t in tests}
    failures: list[str] = []
    for rep, payload in results:
        if isinstance(payload, str):
            failures.append(f"rep {rep}: {payload}")
            continue
        for t in tests:
            pvals[t].append(payload[t])
    if len(failures) > 0.01 * R:
        raise RuntimeError(
            f"{len(failures)} of {R} replicates failed (limit 1%); first: {failures[0]}"
        )
    return pvals, failures


def run_size_experiment(
    dgp: DgpSpec,
    tests,
    R: int,
    levels=(0.10, 0.05, 0.01),
    B: int = 499,
    multiplier: str = "mammen",
    iota: float = 0.001,
    threads: int = 1,
) -> SimResult:
    """Empirical rejection rates of the requested tests at each level.

    Replicate r uses seeds derived from (dgp.seed, r); failed replicates
    are excluded and counted, and more than 1% of them aborts the run.
    """
    tests = _validate_tests(tests)
    if R < 1:
        raise ValueError("R must be at least 1")
    pvals, failures = _collect_pvalues(dgp, tests, R, B, multiplier, iota, threads)
    result = SimResult(reps=R, failed=len(failures))
    for t in tests:
        p = np.asarray(pvals[t])
        for level in levels:
            rate = float(np.mean(p <= level)) if p.size else float("nan")
            se = float(np.sqrt(rate * (1.0 - rate) / p.size)) if p.size else float("nan")
            result.rows.append(
                SimRow(dgp.id, t, dgp.n, dgp.gamma, float(level), rate, se)
            )
    return result


def run_power_curve(
    dgp: DgpSpec,
    tests,
    gamma_grid,
    R: int,
    levels=(0.10, 0.05, 0.01),
    B: int = 499,
    multiplier: str = "mammen",
    iota: float = 0.001,
    threads: int = 1,
) -> SimResult:
    """Rejection rates along a gamma grid at fixed n.

    The same replicate seeds are reused at every gamma (common random
    numbers), so the gamma = 0 row reproduces the size experiment run
    with the same master seed exactly.
    """
    tests = _validate_tests(tests)
    out = SimResult(reps=R)
    for gamma in gamma_grid:
        step = run_size_experiment(
            replace(dgp, gamma=float(gamma)), tests, R, levels, B, multiplier, iota, threads
        )
        out.rows.extend(step.rows)
        out.failed += step.failed
    return out


def run_timing_benchmark(
    dgp: DgpSpec,
    tests,
    n_grid,
    R: int,
    B: int = 499,
    multiplier: str = "mammen",
    iota: float = 0.001,
) -> SimResult:
    """Wall-clock comparison of the tests over a grid of sample sizes.

    Each replicate times every test on the same dataset; the relative
    columns are the median and IQR of the per-replicate ratios of a
    test's time to the chi2 time (1 and 0 for chi2 itself).  Runs
    single-process so timings are not distorted by pool contention.
    """
    tests = _validate_tests(tests)
    if R < 1:
        raise ValueError("R must be at least 1")
    out = SimResult(reps=R)
    for n in n_grid:
        times: dict[str, list[float]] = {t: [] for t in tests}
        for rep in range(R):
            state = np.random.SeedSequence([_TAG_SIM, dgp.seed, rep]).generate_state(2, np.uint64)
            ds = generate(DgpSpec(dgp.id, int(n), dgp.gamma, seed=int(state[0])))
            for t in tests:
                t0 = time.perf_counter()
                if t == "chi2":
                    _chi2_pvalue(ds, dgp.id, iota)
                elif dgp.id in LS_IDS:
                    cfg = BootstrapConfig(B=B, multiplier=multiplier, seed=int(state[1]))
                    wild_bootstrap_pvalue(ds, default_model(dgp.id), t, cfg)
                else:
                    cfg = BootstrapConfig(B=B, multiplier=multiplier, seed=int(state[1]))
                    mi_wild_bootstrap_pvalue(ds.col("u"), ds.cols(("z1", "z2")), t, cfg)
                times[t].append(time.perf_counter() - t0)
        chi2_times = np.asarray(times.get("chi2", []))
        for t in tests:
            arr = np.asarray(times[t])
            if t != "chi2" and chi2_times.size:
                ratios = arr / chi2_times
                med_rel = float(np.median(ratios))
                q75, q25 = np.percentile(ratios, [75, 25])
                iqr_rel = float(q75 - q25)
            elif t == "chi2":
                med_rel, iqr_rel = 1.0, 0.0
            else:
                med_rel, iqr_rel = 0.0, 0.0
            out.timings.append(
                TimingRow(
                    dgp=dgp.id,
                    test=t,
                    n=int(n),
                    reps=R,
                    mean_s=float(arr.mean()),
                    sd_s=float(arr.std(ddof=1)) if R > 1 else 0.0,
                    median_s=float(np.median(arr)),
                    median_rel=med_rel,
                    iqr_rel=iqr_rel,
                )
            )
    return out
