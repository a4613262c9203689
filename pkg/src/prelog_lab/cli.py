"""Command-line entry point.

Exit codes: 0 on success, 1 on a failed numerical check, 2 on an invalid
configuration.  Every output carries the config, the seed (when sampling is
involved), and the package version, so runs are reproducible byte for byte.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict

import click
import numpy as np

from . import SCHEMA, __version__
from .analysis import (
    assemble_prelog_report,
    estimate_E_logdet_J4,
    fit_entropy_slope,
    pilot_data_log_terms,
)
from .channel import (
    ChannelConfig,
    CorrelationMatrix,
    dft_correlation,
    load_correlation,
    save_correlation,
    validate_config,
)
from .jacobian import (
    build_J,
    extract_J4,
    homogeneity_check,
    homogeneity_degree,
    is_detJ4_nonzero,
    laplace_split_check,
)
from .pilots import build_projection, plan_pilots, prelog_bound, required_K_cardinality
from .property_a import find_K, verify_property_A
from .rng import complex_normal, substream
from .witness import witness_certificate

PRESETS = {
    "A": (5, 3, 2),
    "B": (6, 4, 3),
    "C": (4, 3, 2),
    "D": (6, 3, 2),
}


def _config(preset, L, Q, R) -> ChannelConfig:
    if preset is not None:
        L, Q, R = PRESETS[preset]
    if L is None or Q is None or R is None:
        raise click.UsageError("give --preset or all of --L --Q --R")
    cfg = ChannelConfig(L, Q, R)
    bad = validate_config(cfg)
    if bad:
        click.echo(json.dumps({"error": "invalid config", "violations": bad}))
        sys.exit(2)
    return cfg


def _qmat(cfg: ChannelConfig, q_file) -> CorrelationMatrix:
    if q_file is not None:
        qm = load_correlation(q_file)
        if (qm.L, qm.Q) != (cfg.L, cfg.Q):
            click.echo(json.dumps({"error": "q-file dimensions do not match config"}))
            sys.exit(2)
        return qm
    return dft_correlation(cfg.L, cfg.Q)


def _emit(payload: dict, out, fmt: str) -> None:
    if fmt == "json":
        text = json.dumps(payload, indent=2) + "\n"
    else:
        rows = payload["csv_rows"]
        header = payload["csv_header"]
        lines = [",".join(header)]
        lines += [",".join(str(v) for v in row) for row in rows]
        text = "\n".join(lines) + "\n"
    if out is None:
        click.echo(text, nl=False)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _stamp(payload: dict, cfg=None, seed=None) -> dict:
    stamped = {"schema": SCHEMA, "version": __version__}
    if cfg is not None:
        stamped["config"] = {"L": cfg.L, "Q": cfg.Q, "R": cfg.R}
    if seed is not None:
        stamped["seed"] = seed
    stamped.update(payload)
    return stamped


config_options = [
    click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None),
    click.option("--L", "L", type=int, default=None),
    click.option("--Q", "Q", type=int, default=None),
    click.option("--R", "R", type=int, default=None),
]


def with_config(fn):
    for opt in reversed(config_options):
        fn = opt(fn)
    return fn


@click.group()
def main() -> None:
    """Constructions and numerical checks for the block-fading SIMO pre-log bound."""


@main.command("gen-q")
@click.option("--L", "L", type=int, required=True)
@click.option("--Q", "Q", type=int, required=True)
@click.option("--out", type=click.Path(), required=True)
def gen_q(L, Q, out) -> None:
    """Write the DFT-based whitening factor as JSON."""
    if Q >= L:
        click.echo(json.dumps({"error": "invalid config", "violations": ["Q<L required"]}))
        sys.exit(2)
    save_correlation(out, dft_correlation(L, Q))
    click.echo(json.dumps({"schema": SCHEMA, "written": out}))


@main.command("plan")
@with_config
def plan_cmd(preset, L, Q, R) -> None:
    """Print the pilot plan (alpha, k, l, case, index sets)."""
    cfg = _config(preset, L, Q, R)
    plan = plan_pilots(cfg)
    click.echo(json.dumps(_stamp(plan.to_dict(), cfg), indent=2))


@main.command("prelog-table")
@with_config
@click.option("--out", type=click.Path(), default=None)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json")
def prelog_table(preset, L, Q, R, out, fmt) -> None:
    """Exact SIMO lower bound and SISO pre-log for a config."""
    cfg = _config(preset, L, Q, R)
    simo, siso = prelog_bound(cfg)
    payload = _stamp(
        {
            "simo_lower_bound": str(simo),
            "siso": str(siso),
            "csv_header": ["L", "Q", "R", "simo_lower_bound", "siso"],
            "csv_rows": [[cfg.L, cfg.Q, cfg.R, simo, siso]],
        },
        cfg,
    )
    if fmt == "json":
        payload.pop("csv_header")
        payload.pop("csv_rows")
    _emit(payload, out, fmt)


@main.command("check-a")
@with_config
@click.option("--q-file", type=click.Path(exists=True), default=None)
@click.option("--K", "K_spec", type=str, default=None, help="comma-separated 1-based indices")
def check_a(preset, L, Q, R, q_file, K_spec) -> None:
    """Verify the subset rank condition, or search for a passing index set."""
    cfg = _config(preset, L, Q, R)
    qm = _qmat(cfg, q_file)
    if K_spec is not None:
        K = tuple(int(t) for t in K_spec.split(","))
    else:
        K = tuple(range(1, required_K_cardinality(cfg) + 1))
    report = verify_property_A(qm, K)
    found = find_K(qm, cfg) if cfg.R >= 2 else None
    payload = _stamp(
        {
            "holds": report.holds,
            "K": list(report.K),
            "violating_subset": list(report.violating_subset) if report.violating_subset else None,
            "min_singular_ratio": report.min_singular_ratio,
            "search_result": list(found) if found else None,
        },
        cfg,
    )
    click.echo(json.dumps(payload, indent=2))
    sys.exit(0 if report.holds else 1)


@main.command("jacobian-verify")
@with_config
@click.option("--q-file", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=0)
@click.option("--trials", type=int, default=10)
def jacobian_verify(preset, L, Q, R, q_file, seed, trials) -> None:
    """Check the factorization, homogeneity and Laplace-split identities."""
    cfg = _config(preset, L, Q, R)
    qm = _qmat(cfg, q_file)
    plan = plan_pilots(cfg)
    rng = substream(seed, 0)
    worst_fact = 0.0
    homo_ok = True
    lap_worst = 0.0
    for _ in range(trials):
        x = complex_normal(rng, cfg.L)
        s = complex_normal(rng, cfg.Q * cfg.R)
        bundle = build_J(plan, qm, x, s)
        res = np.abs(bundle.J - bundle.product).max() / max(np.abs(bundle.J).max(), 1e-300)
        worst_fact = max(worst_fact, float(res))
        if cfg.R >= 2:
            lam = complex(*rng.standard_normal(2))
            homo_ok = homo_ok and homogeneity_check(plan, qm, s, lam)
            lhs, rhs, _ = laplace_split_check(plan, qm, s)
            lap_worst = max(lap_worst, abs(lhs - rhs) / max(lhs, rhs, 1e-300))
    checks = {
        "factorization_max_rel_residual": worst_fact,
        "factorization_ok": worst_fact <= 1e-10,
        "homogeneity_ok": homo_ok,
        "laplace_max_rel_residual": lap_worst,
        "laplace_ok": lap_worst <= 1e-9,
        "trials": trials,
    }
    if cfg.R >= 2:
        checks["homogeneity_degree"] = homogeneity_degree(plan)
    click.echo(json.dumps(_stamp(checks, cfg, seed), indent=2))
    ok = checks["factorization_ok"] and homo_ok and checks["laplace_ok"]
    sys.exit(0 if ok else 1)


@main.command("nonzero-test")
@with_config
@click.option("--q-file", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=0)
@click.option("--trials", type=int, default=8)
def nonzero_test(preset, L, Q, R, q_file, seed, trials) -> None:
    """Randomized test of det(J4) not being identically zero."""
    cfg = _config(preset, L, Q, R)
    qm = _qmat(cfg, q_file)
    plan = plan_pilots(cfg)
    verdict = is_detJ4_nonzero(plan, qm, substream(seed, 0), trials=trials)
    click.echo(json.dumps(_stamp(asdict(verdict), cfg, seed), indent=2))
    sys.exit(0 if verdict.nonzero else 1)


@main.command("witness")
@with_config
@click.option("--q-file", type=click.Path(exists=True), default=None)
def witness_cmd(preset, L, Q, R, q_file) -> None:
    """Constructive determinant certificate from the chosen zero sets."""
    cfg = _config(preset, L, Q, R)
    qm = _qmat(cfg, q_file)
    plan = plan_pilots(cfg)
    K = find_K(qm, cfg)
    if K is None:
        click.echo(json.dumps({"error": "no index set passes the rank condition"}))
        sys.exit(1)
    wplan, wvecs, report = witness_certificate(cfg, plan, qm, K)
    payload = _stamp(
        {
            "K": list(K),
            "K_sets": [list(t) for t in wplan.K_sets],
            "nonzero_counts": list(wplan.nonzero_counts),
            "column_owner": {str(k): v for k, v in wplan.column_owner.items()},
            "s_vectors": [[[z.real, z.imag] for z in s] for s in wvecs.s_list],
            "detJ4": report.det_abs,
            "product_formula_value": report.product_value,
            "constant": report.constant,
            "rel_error": report.rel_error,
            "residual_matches_blocks": report.residual_matches_blocks,
            "extrapolated_construction": report.extrapolated,
        },
        cfg,
    )
    click.echo(json.dumps(payload, indent=2))
    sys.exit(0 if report.certifies_nonzero and report.residual_matches_blocks else 1)


def _parse_rho_grid(spec: str) -> list[float]:
    """'a:b:steps' means `steps` points with log2(rho) even from a to b."""
    a, b, steps = spec.split(":")
    exps = np.linspace(float(a), float(b), int(steps))
    return [float(2.0**e) for e in exps]


@main.command("estimate")
@with_config
@click.option("--what", type=click.Choice(["logdetJ4", "hyx", "pilot-terms", "report"]), required=True)
@click.option("--q-file", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=0)
@click.option("--N", "n", type=int, default=100_000)
@click.option("--rho-grid", type=str, default="10:30:5")
@click.option("--workers", type=int, default=1)
@click.option("--out", type=click.Path(), default=None)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json")
def estimate(preset, L, Q, R, what, q_file, seed, n, rho_grid, workers, out, fmt) -> None:
    """Monte Carlo estimates with finiteness diagnostics."""
    cfg = _config(preset, L, Q, R)
    qm = _qmat(cfg, q_file)
    plan = plan_pilots(cfg)
    rows = []
    extra: dict = {}
    if what == "logdetJ4":
        est = estimate_E_logdet_J4(plan, qm, seed, n, workers=workers)
        flags = "finite" if est.finiteness_ok() else "finiteness-diagnostic-failed"
        rows.append(["E_log2_det_J4", est.mean, est.stderr, est.n, flags])
        extra = {"estimate": asdict(est)}
    elif what == "hyx":
        grid = _parse_rho_grid(rho_grid)
        fit = fit_entropy_slope(cfg, qm, grid, min(n, 2048), seed=seed)
        rows.append(["hyx_slope_bits_per_log2rho", fit.slope, 0.0, min(n, 2048), "slope-fit"])
        extra = {"slope_fit": asdict(fit)}
    elif what == "pilot-terms":
        terms = pilot_data_log_terms(plan, seed, n, workers=workers)
        flags = "finite" if terms.finiteness_ok() else "finiteness-diagnostic-failed"
        rows.append(["pilot_data_log_terms", terms.total_mean, terms.total_stderr, n, flags])
        extra = {
            "pilot_term_bits": terms.pilot_term,
            "data_position_count": terms.data_position_count,
        }
    else:
        report = assemble_prelog_report(cfg, qm, plan, seed, n, workers=workers)
        flags = "finite" if report["all_components_finite"] else "finiteness-diagnostic-failed"
        rows.append(["h_projected_output_given_pilots",
                     report["h_projected_output_given_pilots_bits"], 0.0, n, flags])
        extra = {"report": report}
    payload = _stamp(
        {"csv_header": ["quantity", "mean_bits", "stderr", "N", "diag_flags"],
         "csv_rows": rows, **extra},
        cfg,
        seed,
    )
    if fmt == "json":
        payload.pop("csv_header")
        payload.pop("csv_rows")
        payload["rows"] = rows
    _emit(payload, out, fmt)


@main.command("verify-all")
@with_config
@click.option("--q-file", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=0)
@click.option("--N", "n", type=int, default=20_000)
def verify_all(preset, L, Q, R, q_file, seed, n) -> None:
    """Run the full check suite; nonzero exit on any failure."""
    cfg = _config(preset, L, Q, R)
    qm = _qmat(cfg, q_file)
    plan = plan_pilots(cfg)
    rng = substream(seed, 0)
    results: list[tuple[str, bool]] = []

    results.append(("config-valid", cfg.is_valid))
    results.append(("dimension-identity", sum(plan.set_sizes) == plan.dim))
    results.append(("projection-rows", build_projection(plan).rows == plan.dim))

    worst = 0.0
    for _ in range(20):
        x = complex_normal(rng, cfg.L)
        s = complex_normal(rng, cfg.Q * cfg.R)
        bundle = build_J(plan, qm, x, s)
        worst = max(worst, float(np.abs(bundle.J - bundle.product).max() / np.abs(bundle.J).max()))
    results.append(("factorization", worst <= 1e-10))

    if cfg.R >= 2:
        K = find_K(qm, cfg)
        results.append(("rank-condition", K is not None))
        homo = all(
            homogeneity_check(plan, qm, complex_normal(rng, cfg.Q * cfg.R), complex(*rng.standard_normal(2)))
            for _ in range(20)
        )
        results.append(("homogeneity", homo))
        lap = all(
            laplace_split_check(plan, qm, complex_normal(rng, cfg.Q * cfg.R))[2]
            for _ in range(20)
        )
        results.append(("laplace-split", lap))
        verdict = is_detJ4_nonzero(plan, qm, substream(seed, 1))
        results.append(("detJ4-nonzero", verdict.nonzero))
        if K is not None:
            try:
                _, _, wreport = witness_certificate(cfg, plan, qm, K)
                results.append(("witness", wreport.certifies_nonzero and wreport.residual_matches_blocks))
            except ValueError:
                results.append(("witness", False))
        est = estimate_E_logdet_J4(plan, qm, seed, n, verdict=verdict)
        results.append(("logdetJ4-finiteness", est.finiteness_ok()))
    terms = pilot_data_log_terms(plan, seed, n)
    results.append(("pilot-data-terms-finiteness", terms.finiteness_ok()))

    failed = False
    for name, ok in results:
        click.echo(f"{'PASS' if ok else 'FAIL'} {name}")
        failed = failed or not ok
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
