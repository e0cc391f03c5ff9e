"""Command-line harness: property suites, alpha sweep, rank demo, scaling bench, oracles.

Every subcommand produces a report whose checks each carry an anchor string
naming the result they exercise. The exit status is 0 iff every check passed,
1 if any failed, and 2 for usage errors or size-cap refusals.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import statistics
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import jsonschema
import numpy as np

from .attention import (
    apply_attention,
    dense_score_matrix,
    effective_rank,
    osa_head_forward,
    rank_collapse_experiment,
    score_matrix_small,
    skew_part,
    ssa_head_forward,
)
from .basis import BasisMethod, measured_ortho_error, ortho_error_bound
from .init import InitConfig, init_osa_head, random_input, sample_stiefel, split
from .jacobian import (
    MAX_JACOBIAN_SIZE,
    condition_report,
    ds_dx_exact,
    effective_condition,
    expm_frechet,
    expm_frechet_operator,
    jacobian_fd,
    jacobian_full,
    kappa_bound,
    skew_weight,
)
from .linalg import ContractError, SizeCapError, singular_values, spectral_norm
from .oracles import MAX_DENSE_TOKENS, dense_exp_attention, expm_frechet_quadrature

log = logging.getLogger(__name__)

REPORT_VERSION = "1.0"
SUITES = ("orthogonality", "rank", "jacobian", "init", "bounds")
RANK_DEPTH = 16

REPORT_SCHEMA = {
    "type": "object",
    "required": ["version", "suite", "config", "checks", "passed"],
    "properties": {
        "version": {"type": "string"},
        "suite": {"type": "string"},
        "config": {"type": "object"},
        "passed": {"type": "boolean"},
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "anchor", "measured", "bound", "status", "wall_time"],
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "anchor": {"type": "string", "minLength": 1},
                    "measured": {"type": ["number", "null"]},
                    "bound": {"type": ["number", "null"]},
                    "status": {"enum": ["pass", "fail"]},
                    "wall_time": {"type": "number", "minimum": 0},
                },
            },
        },
        "table": {"type": "array"},
    },
}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    n: int = 8
    d: int = 8
    heads: int = 2
    alpha: float = 0.1
    basis: str = "qr"
    ns_iters: int = 6
    eps: float = 1e-6
    trials: int = 5
    out: str | None = None
    format: str = "json"

    def validate(self, uses_n: bool = True):
        if self.n < 1 or self.d < 1 or self.heads < 1:
            raise UsageError("n, d and heads must be >= 1")
        if self.trials < 0:
            raise UsageError("trials must be >= 0")
        if self.d % self.heads:
            raise UsageError(f"heads={self.heads} does not divide d={self.d}")
        if 2 * self.d_v > self.d:
            raise UsageError("need 2 * (d / heads) <= d, i.e. heads >= 2")
        if self.basis not in ("qr", "ns"):
            raise UsageError(f"basis must be qr or ns, got {self.basis!r}")
        if self.ns_iters < 0:
            raise UsageError("ns-iters must be >= 0")
        if self.eps <= 0:
            raise UsageError("eps must be positive")
        if self.format not in ("json", "csv"):
            raise UsageError("format must be json or csv")
        if uses_n and self.n < 2 * self.d_v:
            raise UsageError(f"need n >= 2 * d_v = {2 * self.d_v} tokens for a full-width basis")
        return self

    @property
    def d_v(self) -> int:
        return self.d // self.heads

    @property
    def method(self) -> BasisMethod:
        if self.basis == "qr":
            return BasisMethod.qr()
        return BasisMethod.newton_schulz(self.ns_iters, self.eps)

    def init_config(self, alpha: float | None = None) -> InitConfig:
        return InitConfig(self.d, self.heads, self.alpha if alpha is None else alpha)

    def echo(self) -> dict:
        out = asdict(self)
        out.pop("out")
        return out


@dataclass
class Check:
    name: str
    anchor: str
    measured: float | None
    bound: float | None
    passed: bool
    wall_time: float = 0.0

    def as_dict(self) -> dict:
        def num(v):
            if v is None:
                return None
            v = float(v)
            return v if np.isfinite(v) else None

        return {
            "name": self.name,
            "anchor": self.anchor,
            "measured": num(self.measured),
            "bound": num(self.bound),
            "status": "pass" if self.passed else "fail",
            "wall_time": self.wall_time,
        }


@dataclass
class SuiteReport:
    suite: str
    config: dict
    checks: list[Check] = field(default_factory=list)
    table: list[dict] | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, anchor, measured, bound, passed, started=None):
        wall = time.perf_counter() - started if started is not None else 0.0
        self.checks.append(Check(name, anchor, measured, bound, bool(passed), wall))

    def extend(self, other: "SuiteReport"):
        self.checks.extend(other.checks)

    def as_dict(self) -> dict:
        doc = {
            "version": REPORT_VERSION,
            "suite": self.suite,
            "config": self.config,
            "passed": self.passed,
            "checks": [c.as_dict() for c in self.checks],
        }
        if self.table is not None:
            doc["table"] = self.table
        jsonschema.validate(doc, REPORT_SCHEMA)
        return doc


def _trial_rngs(cfg: RunConfig, stream: int):
    """Per-trial generators; ``stream`` separates suites so they never share draws."""
    return split(np.random.SeedSequence([cfg.seed, stream]), cfg.trials)


# ---------------------------------------------------------------------------
# check suites
# ---------------------------------------------------------------------------


def suite_orthogonality(cfg: RunConfig) -> SuiteReport:
    rep = SuiteReport("orthogonality", cfg.echo())
    if cfg.n > MAX_DENSE_TOKENS:
        raise SizeCapError(f"orthogonality suite uses a dense oracle; n <= {MAX_DENSE_TOKENS}")
    for t, rng in enumerate(_trial_rngs(cfg, 1)):
        head = init_osa_head(cfg.init_config(), rng)
        x = random_input(cfg.n, cfg.d, rng, spectral_norm=2.0)

        t0 = time.perf_counter()
        dense = dense_exp_attention(x, head)
        low = score_matrix_small(x, head, BasisMethod.qr()).dense()
        err = np.linalg.norm(low - dense) / np.linalg.norm(dense)
        rep.add(f"lowrank-vs-dense[{t}]", "low-rank exponential identity", err, 1e-9, err <= 1e-9, t0)

        t0 = time.perf_counter()
        att = score_matrix_small(x, head, cfg.method)
        measured = measured_ortho_error(att.b, att.exp_s)
        tight, loose = ortho_error_bound(
            spectral_norm(dense_score_matrix(x, head)), np.minimum(singular_values(att.b), 1 + 1e-9)
        )
        ok = measured <= tight * (1 + 1e-9) + 1e-13 and tight <= loose + 1e-15
        rep.add(f"ortho-error-bound[{t}]", "orthogonality-error bound", measured, tight, ok, t0)

        t0 = time.perf_counter()
        z = rng.standard_normal((cfg.n, 3))
        drift = abs(np.linalg.norm(apply_attention(att, z)) - np.linalg.norm(z)) / np.linalg.norm(z)
        # ||Yz||^2 - ||z||^2 = z^T (Y^T Y - I) z, so the relative drift is at most sqrt(1 + e) - 1.
        allowed = 1e-8 if cfg.basis == "qr" else np.sqrt(1 + tight) - 1 + 1e-12
        rep.add(f"norm-preservation[{t}]", "attention matrix is orthogonal", drift, allowed, drift <= allowed, t0)
    return rep


def suite_rank(cfg: RunConfig) -> SuiteReport:
    rep = SuiteReport("rank", cfg.echo())
    n = max(cfg.n, 2 * cfg.d)
    for t, rng in enumerate(_trial_rngs(cfg, 2)):
        t0 = time.perf_counter()
        x0 = random_input(n, cfg.d, rng)
        spectra = rank_collapse_experiment(
            x0, RANK_DEPTH, cfg.d, int(rng.integers(2**31)), "osa", BasisMethod.qr(), alpha=1.0
        )
        ref = spectra[0]
        dev = max(float(np.max(np.abs(s - ref))) for s in spectra) / max(1.0, ref[0])
        rep.add(f"kernel-spectrum[{t}]", "kernel spectrum preserved with depth", dev, 1e-8, dev <= 1e-8, t0)
    return rep


def suite_jacobian(cfg: RunConfig) -> SuiteReport:
    rep = SuiteReport("jacobian", cfg.echo())
    if cfg.n * cfg.d > MAX_JACOBIAN_SIZE:
        raise SizeCapError(f"jacobian suite needs n*d <= {MAX_JACOBIAN_SIZE}")
    for t, rng in enumerate(_trial_rngs(cfg, 3)):
        head = init_osa_head(cfg.init_config(), rng)
        x = random_input(cfg.n, cfg.d, rng)
        t0 = time.perf_counter()
        err = float(np.max(np.abs(jacobian_full(x, head, cfg.method) - jacobian_fd(x, head, cfg.method))))
        rep.add(f"jvp-vs-fd[{t}]", "Jacobian split J1 + J2", err, 1e-5, err <= 1e-5, t0)
    return rep


def suite_init(cfg: RunConfig) -> SuiteReport:
    rep = SuiteReport("init", cfg.echo())
    d, d_v = cfg.d, cfg.d_v
    target = np.concatenate([np.ones(2 * d_v), np.zeros(d - 2 * d_v)])
    for t, rng in enumerate(_trial_rngs(cfg, 4)):
        t0 = time.perf_counter()
        head = init_osa_head(cfg.init_config(), rng)
        dev = float(np.max(np.abs(singular_values(skew_weight(head)) - target)))
        rep.add(f"qk-singular-values[{t}]", "query-key init gives unit singular values", dev, 1e-9, dev <= 1e-9, t0)

        t0 = time.perf_counter()
        _, _, kappa = effective_condition(singular_values(head.value_output))
        rep.add(f"vo-condition[{t}]", "value-output init is perfectly conditioned", kappa - 1, 1e-9, abs(kappa - 1) <= 1e-9, t0)

        t0 = time.perf_counter()
        u = sample_stiefel(d, d_v, rng)
        res = float(np.linalg.norm(u.T @ u - np.eye(d_v)))
        rep.add(f"stiefel-orthonormal[{t}]", "Stiefel sampling", res, 1e-12, res <= 1e-12, t0)
    return rep


def suite_bounds(cfg: RunConfig) -> SuiteReport:
    rep = SuiteReport("bounds", cfg.echo())
    if cfg.n * cfg.d > MAX_JACOBIAN_SIZE:
        raise SizeCapError(f"bounds suite needs n*d <= {MAX_JACOBIAN_SIZE}")
    for t, rng in enumerate(_trial_rngs(cfg, 5)):
        head = init_osa_head(cfg.init_config(), rng)
        x = random_input(cfg.n, cfg.d, rng)

        t0 = time.perf_counter()
        r = condition_report(x, head, cfg.method)
        rep.add(f"weyl[{t}]", "Weyl perturbation of J2 by J1", r.weyl_excess, 1e-8, r.weyl_excess <= 1e-8, t0)

        rhs = r.bound_rhs()
        rep.add(f"kappa-bound[{t}]", "condition-number bound", r.kappa_eff, rhs, r.kappa_eff <= rhs * (1 + 1e-10))

        t0 = time.perf_counter()
        att = score_matrix_small(x, head, cfg.method)
        op_norm = float(singular_values(expm_frechet_operator(skew_part(att.s_small)))[0])
        rep.add(f"frechet-norm[{t}]", "exponential Jacobian has norm at most one", op_norm, 1 + 1e-8, op_norm <= 1 + 1e-8, t0)

        t0 = time.perf_counter()
        lhs = float(singular_values(ds_dx_exact(x, head))[0])
        bound = abs(head.alpha) / np.sqrt(head.d_v) * 2 * spectral_norm(x) * spectral_norm(skew_weight(head))
        rep.add(f"ds-dx-bound[{t}]", "score Jacobian linear in alpha", lhs, bound, lhs <= bound * (1 + 1e-10), t0)
    return rep


SUITE_FUNCS = {
    "orthogonality": suite_orthogonality,
    "rank": suite_rank,
    "jacobian": suite_jacobian,
    "init": suite_init,
    "bounds": suite_bounds,
}


def cmd_check(cfg: RunConfig, suites=SUITES) -> SuiteReport:
    cfg.validate()
    unknown = set(suites) - set(SUITES)
    if unknown:
        raise UsageError(f"unknown suites: {sorted(unknown)}")
    rep = SuiteReport("check:" + ",".join(suites), cfg.echo())
    for name in suites:
        log.info("running suite %s", name)
        rep.extend(SUITE_FUNCS[name](cfg))
    return rep


# ---------------------------------------------------------------------------
# alpha sweep
# ---------------------------------------------------------------------------


def cmd_sweep_alpha(cfg: RunConfig, alphas) -> SuiteReport:
    cfg.validate()
    alphas = sorted(float(a) for a in alphas)
    if not alphas or any(a <= 0 for a in alphas):
        raise UsageError("alphas must be a non-empty list of positive numbers")
    if cfg.n * cfg.d > MAX_JACOBIAN_SIZE:
        raise SizeCapError(f"sweep-alpha needs n*d <= {MAX_JACOBIAN_SIZE}")
    rep = SuiteReport("sweep-alpha", cfg.echo() | {"alphas": alphas}, table=[])
    for t, rng in enumerate(_trial_rngs(cfg, 6)):
        head = init_osa_head(cfg.init_config(), rng)
        x = random_input(cfg.n, cfg.d, rng)
        reports = []
        for alpha in alphas:
            t0 = time.perf_counter()
            r = condition_report(x, head.with_alpha(alpha), cfg.method)
            reports.append(r)
            rep.table.append(
                {
                    "alpha": alpha,
                    "trial": t,
                    "kappa_eff": r.kappa_eff,
                    "j1_norm": r.j1_norm,
                    "delta_hat": r.delta_hat,
                    "bound_rhs": r.bound_rhs(),
                }
            )
            rep.add(f"fd-agreement[a={alpha:g},{t}]", "Jacobian split J1 + J2", r.fd_max_abs_err, 1e-5, r.fd_max_abs_err <= 1e-5, t0)
            rep.add(f"weyl[a={alpha:g},{t}]", "Weyl perturbation of J2 by J1", r.weyl_excess, 1e-8, r.weyl_excess <= 1e-8)

        slopes = [r.j1_norm / r.alpha for r in reports]
        spread = max(slopes) / min(slopes) if min(slopes) > 0 else float("inf")
        rep.add(f"j1-linear-in-alpha[{t}]", "J1 norm linear in alpha", spread, 3.0, spread < 3.0)

        c_hat = slopes[-1]
        for r in reports[:-1]:
            rhs = kappa_bound(r.delta_hat, c_hat * r.alpha)
            if np.isfinite(rhs):
                rep.add(
                    f"kappa-bound[a={r.alpha:g},{t}]",
                    "condition-number bound",
                    r.kappa_eff,
                    rhs,
                    r.kappa_eff <= rhs * (1 + 1e-10),
                )
    rep.table.sort(key=lambda row: (row["alpha"], row["trial"]))
    return rep


# ---------------------------------------------------------------------------
# rank demo
# ---------------------------------------------------------------------------


def cmd_rank_demo(cfg: RunConfig, depth: int, mechanism: str = "both", top_k: int = 4, identical_rows: bool = False) -> SuiteReport:
    cfg.validate()
    if depth < 1:
        raise UsageError("depth must be >= 1")
    if mechanism not in ("osa", "ssa", "both"):
        raise UsageError("mechanism must be osa, ssa or both")
    mechanisms = ["osa", "ssa"] if mechanism == "both" else [mechanism]
    n = max(cfg.n, 2 * cfg.d) if "osa" in mechanisms else cfg.n
    rng = split(np.random.SeedSequence([cfg.seed, 7]), 1)[0]
    if identical_rows:
        x0 = np.tile(rng.standard_normal((1, cfg.d)), (n, 1))
    else:
        x0 = random_input(n, cfg.d, rng)
    layer_seed = int(rng.integers(2**31))
    rep = SuiteReport("rank-demo", cfg.echo() | {"depth": depth, "mechanism": mechanism, "n_tokens": n}, table=[])
    series = {m: rank_collapse_experiment(x0, depth, cfg.d, layer_seed, m, BasisMethod.qr(), alpha=1.0) for m in mechanisms}
    k = min(top_k, n)
    for layer in range(depth + 1):
        for m in mechanisms:
            spectrum = series[m][layer]
            row = {"layer": layer, "mechanism": m}
            row.update({f"lambda_{i + 1}": float(spectrum[i]) for i in range(k)})
            row["effective_rank"] = effective_rank(spectrum)
            rep.table.append(row)
    if "osa" in series:
        ranks = [effective_rank(s) for s in series["osa"]]
        rep.add("osa-effective-rank", "kernel spectrum preserved with depth", max(ranks) - min(ranks), 0, len(set(ranks)) == 1)
        ref = series["osa"][0]
        dev = max(float(np.max(np.abs(s - ref))) for s in series["osa"]) / max(ref[0], 1.0)
        rep.add("osa-spectrum", "kernel spectrum preserved with depth", dev, 1e-8, dev <= 1e-8)
    return rep


# ---------------------------------------------------------------------------
# scaling benchmark
# ---------------------------------------------------------------------------


def osa_buffer_bytes(n: int, d: int, d_v: int) -> int:
    """Float64 bytes of the buffers one OSA head allocates (no N x N terms)."""
    r = 2 * d_v
    per_token = d + 2 * d_v + 3 * r + d_v + 2 * d  # x, Q/K, M/B/QR workspace, XW^V, z/out
    fixed = 4 * r * r + r * d + 4 * d * d_v
    return 8 * (n * per_token + fixed)


def ssa_buffer_bytes(n: int, d: int, d_v: int) -> int:
    per_token = d + 3 * d_v + 2 * d
    return 8 * (2 * n * n + n * per_token + 4 * d * d_v)


def _median_time(fn, reps: int) -> float:
    fn()  # warm-up, discarded
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


def cmd_bench_scaling(cfg: RunConfig, n_list, reps: int = 5) -> SuiteReport:
    from threadpoolctl import threadpool_limits

    cfg.validate(uses_n=False)
    n_list = sorted(int(n) for n in n_list)
    if len(n_list) < 2:
        raise UsageError("bench needs at least two sequence lengths")
    if any(n < 4 * cfg.d_v for n in n_list):
        raise UsageError(f"every N must be >= 4 * d_v = {4 * cfg.d_v}")
    if reps < 5:
        raise UsageError("reps must be >= 5")
    rng = split(np.random.SeedSequence([cfg.seed, 8]), 1)[0]
    head = init_osa_head(cfg.init_config(), rng)
    runners = {
        "osa-qr": lambda x: osa_head_forward(x, head, BasisMethod.qr()),
        "osa-ns": lambda x: osa_head_forward(x, head, BasisMethod.newton_schulz(cfg.ns_iters, cfg.eps)),
        "ssa": lambda x: ssa_head_forward(x, head),
    }
    rep = SuiteReport("bench", cfg.echo() | {"n_list": n_list, "reps": reps}, table=[])
    times = {name: [] for name in runners}
    with threadpool_limits(limits=1):
        for n in n_list:
            x = random_input(n, cfg.d, rng)
            for name, fn in runners.items():
                med = _median_time(lambda: fn(x), reps)
                times[name].append(med)
                nbytes = (ssa_buffer_bytes if name == "ssa" else osa_buffer_bytes)(n, cfg.d, cfg.d_v)
                rep.table.append({"N": n, "mechanism": name, "median_s": med, "peak_bytes": nbytes})
                log.info("N=%d %s %.3g s", n, name, med)

    for name, ts in times.items():
        # time ratio per doubling of N over the largest step
        ratio = 2.0 ** (np.log(ts[-1] / ts[-2]) / np.log(n_list[-1] / n_list[-2]))
        if name == "ssa":
            rep.add("ssa-doubling-ratio", "softmax attention is quadratic in N", ratio, 3.0, ratio >= 3.0)
        else:
            rep.add(f"{name}-doubling-ratio", "OSA cost linear in N", ratio, 3.0, ratio <= 3.0)
    slope = loglog_slope(n_list, [osa_buffer_bytes(n, cfg.d, cfg.d_v) for n in n_list])
    rep.add("osa-buffer-exponent", "OSA memory linear in N", slope, 1.1, 0.9 <= slope <= 1.1)
    return rep


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------


def cmd_oracle(cfg: RunConfig, which: str) -> SuiteReport:
    cfg.validate()
    rep = SuiteReport(f"oracle:{which}", cfg.echo())
    rngs = _trial_rngs(cfg, 9)
    if which == "theorem1":
        if cfg.n > MAX_DENSE_TOKENS:
            raise SizeCapError(f"dense exponential oracle needs n <= {MAX_DENSE_TOKENS}")
        for t, rng in enumerate(rngs):
            t0 = time.perf_counter()
            head = init_osa_head(cfg.init_config(), rng)
            x = rng.standard_normal((cfg.n, cfg.d))
            dense = dense_exp_attention(x, head)
            err = np.linalg.norm(score_matrix_small(x, head, BasisMethod.qr()).dense() - dense) / np.linalg.norm(dense)
            rep.add(f"lowrank-vs-dense[{t}]", "low-rank exponential identity", err, 1e-9, err <= 1e-9, t0)
    elif which == "frechet":
        r = 2 * cfg.d_v
        for t, rng in enumerate(rngs):
            t0 = time.perf_counter()
            a = rng.standard_normal((r, r))
            a = a - a.T
            a *= rng.uniform(0.1, 2.0) / spectral_norm(a)
            e = rng.standard_normal((r, r))
            err = float(np.max(np.abs(expm_frechet(a, e) - expm_frechet_quadrature(a, e))))
            rep.add(f"frechet-vs-quadrature[{t}]", "integral form of the exponential Jacobian", err, 1e-8, err <= 1e-8, t0)
    elif which == "jacobian":
        if cfg.n * cfg.d > MAX_JACOBIAN_SIZE:
            raise SizeCapError(f"jacobian oracle needs n*d <= {MAX_JACOBIAN_SIZE}")
        for t, rng in enumerate(rngs):
            t0 = time.perf_counter()
            head = init_osa_head(cfg.init_config(), rng)
            x = random_input(cfg.n, cfg.d, rng)
            err = float(np.max(np.abs(jacobian_full(x, head, cfg.method) - jacobian_fd(x, head, cfg.method))))
            rep.add(f"jvp-vs-fd[{t}]", "Jacobian split J1 + J2", err, 1e-5, err <= 1e-5, t0)
    else:
        raise UsageError(f"unknown oracle {which!r}")
    return rep


# ---------------------------------------------------------------------------
# output and CLI
# ---------------------------------------------------------------------------


def render(rep: SuiteReport, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rep.as_dict(), indent=2) + "\n"
    rows = rep.table if rep.table is not None else [c.as_dict() for c in rep.checks]
    rep.as_dict()  # schema check even when emitting CSV
    buf = io.StringIO()
    if rows:
        keys = list(rows[0].keys())
        for row in rows[1:]:
            keys += [k for k in row if k not in keys]
        writer = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return buf.getvalue()


def read_config_file(path: str | Path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; dashes and underscores are interchangeable."""
    known = {f.name: f.type for f in fields(RunConfig)}
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "heads" or key == "h":
            key = "heads"
        if key not in known:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _coerce(cfg: RunConfig, values: dict) -> RunConfig:
    casts = {"seed": int, "n": int, "d": int, "heads": int, "alpha": float, "ns_iters": int, "eps": float, "trials": int}
    updates = {}
    for key, value in values.items():
        try:
            updates[key] = casts.get(key, str)(value)
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {value!r}") from exc
    return replace(cfg, **updates)


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--n", type=int, help="number of tokens N")
    common.add_argument("--d", type=int, help="model width")
    common.add_argument("--heads", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--basis", choices=["qr", "ns"])
    common.add_argument("--ns-iters", type=int, dest="ns_iters")
    common.add_argument("--eps", type=float)
    common.add_argument("--trials", type=int)
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--format", choices=["json", "csv"])
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="osa", description="Orthogonal self-attention checks and experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[common], help="run property suites")
    p.add_argument("--suites", default=",".join(SUITES))

    p = sub.add_parser("sweep-alpha", parents=[common], help="Jacobian conditioning across alpha")
    p.add_argument("--alphas", type=_float_list, default=[1e-4, 1e-3, 1e-2, 1e-1])

    p = sub.add_parser("rank-demo", parents=[common], help="per-layer kernel spectra, OSA vs softmax")
    p.add_argument("--depth", type=int, default=12)
    p.add_argument("--mechanism", choices=["osa", "ssa", "both"], default="both")
    p.add_argument("--top-k", type=int, default=4, dest="top_k")
    p.add_argument("--identical-rows", action="store_true", dest="identical_rows")

    p = sub.add_parser("bench", parents=[common], help="runtime scaling in N")
    p.add_argument("--n-list", type=_int_list, default=[512, 1024, 2048, 4096], dest="n_list")
    p.add_argument("--reps", type=int, default=5)

    p = sub.add_parser("oracle", parents=[common], help="fast path vs slow oracle")
    p.add_argument("--which", choices=["theorem1", "frechet", "jacobian"], required=True)
    return parser


def config_from_args(args) -> RunConfig:
    """Defaults, then the config file, then explicit flags."""
    cfg = RunConfig()
    if args.command in ("sweep-alpha", "bench", "rank-demo"):
        cfg = replace(cfg, format="csv")
    if args.command == "bench":
        cfg = replace(cfg, d=64, heads=4)
    if args.config:
        cfg = _coerce(cfg, read_config_file(args.config))
    flags = {f.name: getattr(args, f.name) for f in fields(RunConfig) if getattr(args, f.name, None) is not None}
    return _coerce(cfg, flags)


def run(args) -> tuple[SuiteReport, RunConfig]:
    cfg = config_from_args(args)
    if args.command == "check":
        suites = [s.strip() for s in args.suites.split(",") if s.strip()]
        return cmd_check(cfg, suites), cfg
    if args.command == "sweep-alpha":
        return cmd_sweep_alpha(cfg, args.alphas), cfg
    if args.command == "rank-demo":
        return cmd_rank_demo(cfg, args.depth, args.mechanism, args.top_k, args.identical_rows), cfg
    if args.command == "bench":
        return cmd_bench_scaling(cfg, args.n_list, args.reps), cfg
    return cmd_oracle(cfg, args.which), cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        rep, cfg = run(args)
    except (UsageError, ContractError, SizeCapError) as exc:
        print(f"osa {args.command}: error: {exc}", file=sys.stderr)
        return 2
    text = render(rep, cfg.format)
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)
    failed = [c for c in rep.checks if not c.passed]
    for c in failed:
        print(f"FAIL {c.name}: measured={c.measured} bound={c.bound}", file=sys.stderr)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
