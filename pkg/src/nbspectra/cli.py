"""Experiment driver: spectrum scatter data, detection runs, branching-process
verification and operator diagnostics, with seed management and CSV/JSON
persistence.

Exit codes: 0 success, 2 configuration error, 3 numeric/solver failure,
4 statistical band failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from nbspectra import branching, detection, localstats
from nbspectra.graphs import LabeledGraph, build_edge_index, generate_er, generate_sbm, write_edge_list
from nbspectra.model import SbmParams, derive_spectral_data, preset, read_params
from nbspectra.nbops import dense_nb_matrix
from nbspectra.spectral import (
    SolverConvergenceError,
    full_spectrum_companion,
    full_spectrum_dense,
    leading_eigenpairs,
)

DEFAULT_OUT_ENV = "NBSPECTRA_OUT"
DEFAULT_KAPPA = 0.125
THRESHOLD_MC_SEED = 1234567


@dataclass
class RunConfig:
    command: str
    model: str
    n: int = 500
    seeds: list[int] = field(default_factory=lambda: [0])
    ell: int | None = None
    kappa: float = DEFAULT_KAPPA
    tau: float | None = None
    tol: float = 1e-8
    samples: int = 10000
    k: int = 3
    jobs: int = 1
    out: str = "nbspectra_out"

    def validate(self) -> None:
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.ell is None and not 0 < self.kappa < 0.5:
            raise ValueError("kappa must lie in (0, 1/2)")
        if self.ell is not None and self.ell < 0:
            raise ValueError("ell must be >= 0")

    def resolved_ell(self, alpha: float) -> int:
        # an explicit --ell always wins over the kappa-derived value
        if self.ell is not None:
            return self.ell
        if alpha <= 1:
            return 1
        return max(1, round(self.kappa * math.log(self.n) / math.log(alpha)))


def _load_params(model: str) -> SbmParams:
    try:
        return preset(model)
    except ValueError:
        pass
    path = Path(model)
    if not path.exists():
        raise ValueError(f"{model!r} is neither a preset nor a params file")
    return read_params(path)


def _generate(params: SbmParams, n: int, seed: int) -> LabeledGraph:
    if params.r == 1:
        return generate_er(n, float(params.W[0, 0]), seed)
    return generate_sbm(params.pi, params.W, n, seed=seed)


def _config_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: str, rows: list[str], config: dict) -> None:
    lines = ["# " + json.dumps(config, sort_keys=True), header] + rows
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------


def _spectrum_one(args: tuple) -> tuple[int, np.ndarray]:
    cfg_dict, seed = args
    cfg = RunConfig(**cfg_dict)
    params = _load_params(cfg.model)
    graph = _generate(params, cfg.n, seed)
    index = build_edge_index(graph)
    if index.m == 0:
        return seed, np.empty(0, dtype=np.complex128)
    if index.m <= 1200:
        report = full_spectrum_dense(index)
    else:
        report = full_spectrum_companion(graph)
    return seed, report.eigenvalues


def cmd_spectrum(cfg: RunConfig) -> int:
    params = _load_params(cfg.model)
    data = derive_spectral_data(params)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    config = _config_dict(cfg)

    jobs = [(config | {"seeds": [s]}, s) for s in sorted(cfg.seeds)]
    results = _map_jobs(_spectrum_one, jobs, cfg.jobs)

    summary = {"config": config, "sqrt_alpha": math.sqrt(data.alpha), "per_seed": {}}
    for seed, vals in sorted(results):
        rows = [f"{v.real:.12g},{v.imag:.12g}" for v in vals]
        _write_csv(out / f"spectrum_{seed}.csv", "re,im", rows, config | {"seed": seed})
        lam1 = float(abs(vals[0])) if len(vals) else 0.0
        lam2 = float(abs(vals[1])) if len(vals) > 1 else 0.0
        summary["per_seed"][str(seed)] = {"lambda1": lam1, "abs_lambda2": lam2}
    _write_json(out / "spectrum_summary.json", summary)
    return 0


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------


def _detect_one(args: tuple) -> tuple[int, dict, np.ndarray]:
    cfg_dict, seed, tau = args
    cfg = RunConfig(**cfg_dict)
    params = _load_params(cfg.model)
    data = derive_spectral_data(params)
    graph = _generate(params, cfg.n, seed)
    record: dict = {"seed": seed}

    if data.r0 < 2:
        rng = np.random.default_rng(seed)
        labels = rng.integers(1, data.r + 1, size=graph.n)
        record["below_threshold"] = True
        record["note"] = "below threshold: detection not attempted, overlap of random labels reported"
    else:
        record["below_threshold"] = False
        index = build_edge_index(graph)
        report = leading_eigenpairs(
            index, count=2, tol=cfg.tol, seed=seed, krylov_dim=max(60, 8 * 2)
        )
        xi = report.vector(1)
        stats = detection.vertex_statistic(index, xi)
        ell_mc = min(cfg.resolved_ell(data.alpha), 3)
        omega = detection.estimate_sign(stats, data, 2, ell_mc, THRESHOLD_MC_SEED + 2)
        record["estimated_sign"] = omega if omega else "undetermined"
        if omega == -1:
            stats = -stats
        labels = detection.assign_labels(graph, data, 2, stats, tau, seed)
        record["lambda2"] = float(report.eigenvalues[1].real)

    rep = detection.overlap(labels, graph.types, data.pi)
    record["overlap"] = rep.overlap
    record["agreement"] = rep.agreement
    record["best_permutation"] = list(rep.best_permutation)
    return seed, record, labels


def cmd_detect(cfg: RunConfig) -> int:
    params = _load_params(cfg.model)
    data = derive_spectral_data(params)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    config = _config_dict(cfg)

    tau = cfg.tau
    if tau is None and data.r0 >= 2:
        ell_mc = min(cfg.resolved_ell(data.alpha), 3)
        t0 = detection.choose_threshold(
            data, 2, ell_mc, cfg.samples, THRESHOLD_MC_SEED
        )
        rho, _ = branching.q_second_moment(
            data, 2, ell_mc, cfg.samples, THRESHOLD_MC_SEED + 1
        )
        # The limit threshold t0 lives on the scale of sqrt(n) * s times the
        # eigenvector statistic, so the raw-statistic threshold is t0 / s.
        tau = float(t0 / np.sqrt(data.alpha * rho))
    elif tau is None:
        tau = 0.0

    jobs = [(config | {"seeds": [s]}, s, tau) for s in sorted(cfg.seeds)]
    results = _map_jobs(_detect_one, jobs, cfg.jobs)

    overlaps = []
    aggregate = {"config": config, "tau": tau, "per_seed": {}}
    for seed, record, labels in sorted(results, key=lambda t: t[0]):
        rows = [f"{v},{labels[v]}" for v in range(len(labels))]
        _write_csv(out / f"assignment_{seed}.csv", "vertex,label", rows, config | {"seed": seed})
        _write_json(out / f"overlap_{seed}.json", {"config": config | {"seed": seed}, **record})
        aggregate["per_seed"][str(seed)] = record
        overlaps.append(record["overlap"])
    overlaps = np.array(sorted(overlaps))
    aggregate["mean_overlap"] = float(overlaps.mean())
    aggregate["se_overlap"] = float(
        overlaps.std(ddof=1) / np.sqrt(len(overlaps)) if len(overlaps) > 1 else 0.0
    )
    _write_json(out / "detect_summary.json", aggregate)
    return 0


# ---------------------------------------------------------------------------
# bp-verify
# ---------------------------------------------------------------------------


def _band_check(name: str, estimate: float, se: float, target: float) -> dict:
    return {
        "name": name,
        "estimate": estimate,
        "se": se,
        "target": target,
        "pass": bool(abs(estimate - target) <= 4.0 * se),
    }


def cmd_bp_verify(cfg: RunConfig) -> int:
    params = _load_params(cfg.model)
    data = derive_spectral_data(params)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    checks: list[dict] = []
    ell = cfg.ell if cfg.ell is not None else 5
    ell = max(1, ell)
    n_mart = min(cfg.samples, 5000)
    seed0 = cfg.seeds[0]

    # Martingale suite: centered projections at every horizon t <= 6.
    rng = np.random.default_rng(seed0)
    roots = 1 + rng.choice(data.r, size=n_mart, p=data.pi)
    chains = branching.population_chain(data, roots, 6, rng)
    for k in range(1, data.r0 + 1):
        phi = data.phi[k - 1]
        x0 = chains[:, 0, :] @ phi
        for t in range(1, 7):
            x = chains[:, t, :] @ phi / data.mu[k - 1] ** t - x0
            checks.append(
                _band_check(
                    f"martingale_k{k}_t{t}",
                    float(x.mean()),
                    float(x.std(ddof=1) / np.sqrt(len(x))),
                    0.0,
                )
            )

    # Once-turning functional mean per root type.
    k_q = 2 if data.r0 >= 2 else 1
    rho_k = data.mu[k_q - 1] ** 2 / data.alpha
    for x in range(1, data.r + 1):
        q = branching.q_samples(data, k_q, ell, x, cfg.samples, seed0 + 10 + x)
        q = q / data.mu[k_q - 1] ** (2 * ell)
        target = data.mu[k_q - 1] * data.phi[k_q - 1][x - 1] / (rho_k - 1)
        checks.append(
            _band_check(
                f"q_mean_k{k_q}_root{x}",
                float(q.mean()),
                float(q.std(ddof=1) / np.sqrt(len(q))),
                float(target),
            )
        )

    # Cross-block decorrelation (needs two distinct blocks).
    if data.r >= 2:
        k, j = (2, 3) if data.r >= 3 else (1, 2)
        mean, se = branching.q_decorrelation(data, k, j, min(ell, 3), cfg.samples, seed0 + 50)
        checks.append(_band_check(f"decorrelation_q{k}q{j}", mean, se, 0.0))

    # Vertex-statistic limit model per root type.
    if data.r0 >= 1:
        k_j = 2 if data.r0 >= 2 else 1
        rho_j = data.mu[k_j - 1] ** 2 / data.alpha
        for x in range(1, data.r + 1):
            vals = branching.limit_statistic_samples(
                data, k_j, ell, x, cfg.samples, seed0 + 100 + x
            )
            target = data.alpha * data.mu[k_j - 1] * data.phi[k_j - 1][x - 1] / (rho_j - 1)
            checks.append(
                _band_check(
                    f"limit_statistic_k{k_j}_root{x}",
                    float(vals.mean()),
                    float(vals.std(ddof=1) / np.sqrt(len(vals))),
                    float(target),
                )
            )

    payload = {"config": _config_dict(cfg), "checks": checks}
    _write_json(out / "mc_report.json", payload)
    return 0 if all(c["pass"] for c in checks) else 4


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def cmd_diagnostics(cfg: RunConfig) -> int:
    params = _load_params(cfg.model)
    data = derive_spectral_data(params)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    seed0 = cfg.seeds[0]
    graph = _generate(params, cfg.n, seed0)
    index = build_edge_index(graph)
    ell = cfg.resolved_ell(data.alpha)

    ok, offending = localstats.tangle_free(graph, ell)
    cyclic = localstats.cyclic_ball_count(graph, ell)
    k = max(1, cfg.k)
    lhs, rhs = localstats.weak_ramanujan_bound(index, k)
    if lhs < rhs - 1e-6 * max(1.0, abs(rhs)):
        raise RuntimeError(f"weak Ramanujan bound violated: lhs={lhs}, rhs={rhs}")
    s = localstats.nb_power_singular_values(index, k, 2)

    # Degree identity of the symmetrized operator on a dense-capable subsample.
    small = _generate(params, 50, seed0 + 1)
    small_index = build_edge_index(small)
    B = dense_nb_matrix(small_index)
    BP = B[:, small_index.inv_perm]
    got = np.sort(np.linalg.eigvalsh(BP))
    expected = _expected_bp_eigenvalues(small)
    bp_max_dev = float(np.max(np.abs(got - expected))) if len(got) else 0.0

    tiny = {}
    for name, g in localstats.tiny_graph_corpus().items():
        gi = build_edge_index(g)
        h, gap = localstats.cheeger_bruteforce(gi, 1)
        violations = localstats.diameter_bound_check(gi, 2)
        tiny[name] = {
            "h1": h if np.isfinite(h) else None,
            "gap1": gap,
            "diameter_violations": len(violations),
        }
        if violations:
            raise RuntimeError(f"diameter bound violated on {name}")

    payload = {
        "config": _config_dict(cfg),
        "tangle_free": ok,
        "tangled_vertex_count": len(offending),
        "cycle_vertex_count": cyclic,
        "weak_ramanujan": {"k": k, "lhs": lhs, "rhs": rhs},
        "s1": float(s[0]),
        "s2": float(s[1]) if len(s) > 1 else 0.0,
        "bp_identity_max_deviation": bp_max_dev,
        "tiny_suite": tiny,
    }
    _write_json(out / "diagnostics.json", payload)
    return 0


def _expected_bp_eigenvalues(graph: LabeledGraph) -> np.ndarray:
    """Degree multiset identity: deg(v)-1 over vertices plus m-n extra -1
    entries, m the oriented edge count (negative surplus cancels the -1
    entries contributed by isolated vertices)."""
    vals = list(graph.degrees - 1)
    surplus = 2 * graph.edge_count - graph.n
    if surplus >= 0:
        vals.extend([-1] * surplus)
    else:
        for _ in range(-surplus):
            vals.remove(-1)
    return np.sort(np.array(vals, dtype=np.float64))


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def cmd_generate(cfg: RunConfig) -> int:
    params = _load_params(cfg.model)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for seed in sorted(cfg.seeds):
        graph = _generate(params, cfg.n, seed)
        write_edge_list(graph, out / f"graph_{seed}.txt")
    _write_json(out / "generate_summary.json", {"config": _config_dict(cfg)})
    return 0


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def _map_jobs(fn, jobs: list, n_workers: int) -> list:
    if n_workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, jobs))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nbspectra")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("spectrum", "detect", "bp-verify", "diagnostics", "generate"):
        p = sub.add_parser(name)
        group = p.add_mutually_exclusive_group(required=True)
        group.add_argument("--preset", help="named parameter set")
        group.add_argument("--params", help="path to a params JSON file")
        p.add_argument("--n", type=int, default=500)
        p.add_argument("--seeds", type=int, nargs="+", default=[0])
        p.add_argument("--ell", type=int, default=None)
        p.add_argument("--kappa", type=float, default=DEFAULT_KAPPA)
        p.add_argument("--tau", type=float, default=None)
        p.add_argument("--tol", type=float, default=1e-8)
        p.add_argument("--samples", type=int, default=10000)
        p.add_argument("--k", type=int, default=3)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument(
            "--out", default=os.environ.get(DEFAULT_OUT_ENV, "nbspectra_out")
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    cfg = RunConfig(
        command=args.command,
        model=args.preset or args.params,
        n=args.n,
        seeds=list(args.seeds),
        ell=args.ell,
        kappa=args.kappa,
        tau=args.tau,
        tol=args.tol,
        samples=args.samples,
        k=args.k,
        jobs=args.jobs,
        out=args.out,
    )
    try:
        cfg.validate()
        _load_params(cfg.model)
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        handler = {
            "spectrum": cmd_spectrum,
            "detect": cmd_detect,
            "bp-verify": cmd_bp_verify,
            "diagnostics": cmd_diagnostics,
            "generate": cmd_generate,
        }[cfg.command]
        return handler(cfg)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverConvergenceError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
