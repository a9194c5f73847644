"""JSON-configured command line for design, power, expectation and simulation.

Every command is a pure function of its configuration file (plus seed):
outputs are written with fixed formatting and deterministic numerics, so
repeated runs produce byte-identical files. Configurations are validated
against the bundled schema before anything is computed; unknown keys are
rejected.
"""

from __future__ import annotations

import json
import math
from dataclasses import replace
from importlib import resources
from pathlib import Path

import click
import jsonschema

from .ahr import ahr_lr
from .design import (
    SpendingFunction,
    asymptotic_power,
    build_design,
    planned_n,
    sample_size_dn,
    sample_size_nd,
    schedule_times,
)
from .expect import pooled_expected_events
from .model import AnalysisSchedule, TestSpec, TrialModel, WeightSpec, validate
from .sim import SimTest, run_study, scenario_model

_ASYMPTOTIC_KINDS = ("wlr", "maxcombo")


# ---------------------------------------------------------------------------
# configuration loading


def load_schema() -> dict:
    """The bundled configuration schema."""
    text = resources.files("nphgsd").joinpath("configs/schema.json").read_text()
    return json.loads(text)


def bundled_config(name: str) -> dict:
    """A golden configuration shipped with the package."""
    text = resources.files("nphgsd").joinpath(f"configs/{name}").read_text()
    return json.loads(text)


def load_config(path: str) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise click.ClickException(f"cannot read configuration: {err}")
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as err:
        where = "/".join(str(p) for p in err.absolute_path) or "(top level)"
        raise click.ClickException(f"invalid configuration at {where}: {err.message}")
    return cfg


def _piecewise_arg(node):
    if isinstance(node, (int, float)):
        return float(node)
    bp = tuple(float(x) for x in node["breakpoints"])
    values = tuple(float(x) for x in node["values"])
    if len(values) != len(bp) + 1:
        raise click.ClickException("piecewise values must have one more entry than breakpoints")
    if any(b >= c for b, c in zip(bp, bp[1:])):
        raise click.ClickException("piecewise breakpoints must be strictly increasing")
    return (bp, values)


def model_from_config(section: dict) -> TrialModel:
    drop_both = section.get("dropout", 0.0)
    model = TrialModel(
        enroll_rate=_piecewise_arg(section["enroll_rate"]),
        control_hazard=_piecewise_arg(section["control_hazard"]),
        hazard_ratio=_piecewise_arg(section["hazard_ratio"]),
        dropout_control=_piecewise_arg(section.get("dropout_control", drop_both)),
        dropout_experimental=_piecewise_arg(section.get("dropout_experimental", drop_both)),
        p_experimental=float(section.get("p_experimental", 0.5)),
        enroll_duration=float(section["enroll_duration"]),
        total_duration=float(section["total_duration"]),
    )
    report = validate(model)
    if not report.ok:
        raise click.ClickException("invalid model: " + "; ".join(report.problems))
    return model


def weight_from_config(node) -> WeightSpec:
    if node == "logrank":
        return WeightSpec.logrank()
    if "fh" in node:
        p, q = node["fh"]
        return WeightSpec.fleming_harrington(float(p), float(q))
    if "mb" in node:
        args = node["mb"]
        t_star = float(args[0])
        w_max = float(args[1]) if len(args) > 1 else math.inf
        return WeightSpec.magirr_burman(t_star, w_max)
    return WeightSpec.zero_early(float(node["zero_early"]))


def test_from_config(node) -> SimTest:
    if "wlr" in node:
        return SimTest.from_test(TestSpec.wlr(weight_from_config(node["wlr"])))
    if "maxcombo" in node:
        return SimTest.from_test(TestSpec.maxcombo([weight_from_config(w) for w in node["maxcombo"]]))
    if "rmst" in node:
        return SimTest.rmst(float(node["rmst"]))
    return SimTest.milestone(float(node["milestone"]))


def tests_from_config(node) -> list[SimTest]:
    if isinstance(node, dict):
        node = [node]
    return [test_from_config(t) for t in node]


def spending_from_config(node: dict | None, default: SpendingFunction | None) -> SpendingFunction | None:
    if node is None:
        return default
    family = node["family"]
    total = float(node["total"])
    if family == "fixed":
        if "levels" not in node:
            raise click.ClickException("fixed spending needs explicit levels")
        return SpendingFunction.fixed(total, node["levels"])
    if family == "power":
        return SpendingFunction.power(total, node.get("param", 2.0))
    if family == "hwang-shih-decani":
        if "param" not in node:
            raise click.ClickException("hwang-shih-decani spending needs a param")
        return SpendingFunction.hwang_shih_decani(total, node["param"])
    if family == "pocock":
        return SpendingFunction.pocock(total)
    return SpendingFunction.obrien_fleming(total)


def _schedule_from_config(section: dict) -> AnalysisSchedule:
    if "times" in section:
        return AnalysisSchedule(times=section["times"])
    return AnalysisSchedule(event_counts=section["event_counts"])


def _design_tests(sim_tests: list[SimTest]) -> list[TestSpec]:
    bad = [t.label() for t in sim_tests if t.kind not in _ASYMPTOTIC_KINDS]
    if bad:
        raise click.ClickException(
            "simulation-only statistics cannot enter a design: " + ", ".join(bad)
        )
    return [t.test for t in sim_tests]


def _require(cfg: dict, key: str, command: str) -> dict:
    if key not in cfg:
        raise click.ClickException(f"the {command} command needs a {key!r} section")
    return cfg[key]


# ---------------------------------------------------------------------------
# output helpers


def _write(out: str, name: str, text: str) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    target = path / name
    target.write_text(text)
    return target


def _fmt(value, digits: int = 4) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.{digits}f}" if math.isfinite(value) else str(value)
    return str(value)


# ---------------------------------------------------------------------------
# commands


def _common_options(fn):
    fn = click.option("--config", "config_path", required=True, type=click.Path(), help="JSON configuration file.")(fn)
    fn = click.option("--out", default=".", show_default=True, type=click.Path(file_okay=False), help="Output directory.")(fn)
    fn = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None, help="Output format (default from config, falling back to csv).")(fn)
    fn = click.option("--workers", type=int, default=None, help="Parallel simulation workers.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Simulation seed override.")(fn)
    fn = click.option("--validate-only", is_flag=True, help="Validate the configuration and exit.")(fn)
    return fn


@click.group()
@click.version_option(package_name="nphgsd")
def main() -> None:
    """Design and verify group-sequential survival trials under
    non-proportional hazards."""


def _resolve_format(cfg: dict, fmt: str | None) -> str:
    if fmt is not None:
        return fmt
    return cfg.get("output", {}).get("format", "csv")


def _resolve_sim(cfg: dict, workers: int | None, seed: int | None) -> dict:
    sim = dict(cfg.get("simulation", {}))
    sim.setdefault("replicates", 10000)
    sim.setdefault("seed", 12345)
    sim.setdefault("workers", 1)
    if workers is not None:
        sim["workers"] = workers
    if seed is not None:
        sim["seed"] = seed
    return sim


def _build_from_config(cfg: dict, command: str):
    """Model, times, tests and spending shared by design-like commands."""
    model = model_from_config(_require(cfg, "model", command))
    schedule = _schedule_from_config(_require(cfg, "schedule", command))
    times = schedule_times(model, schedule)
    sim_tests = tests_from_config(_require(cfg, "tests", command))
    tests = _design_tests(sim_tests)
    if len(tests) == 1:
        tests = tests * len(times)
    if len(tests) != len(times):
        raise click.ClickException("tests must be a single entry or one per analysis")
    spending = cfg.get("spending", {})
    targets = cfg.get("targets", {})
    alpha = float(targets.get("alpha", 0.025))
    sf_alpha = spending_from_config(spending.get("alpha"), SpendingFunction.obrien_fleming(alpha))
    sf_beta = spending_from_config(spending.get("beta"), None)
    return model, times, tests, sf_alpha, sf_beta, spending, targets


def _run_design(cfg: dict):
    model, times, tests, sf_alpha, sf_beta, spending, targets = _build_from_config(cfg, "design")
    mode = spending.get("mode", "union-minimum")
    method = spending.get("method", "chain")
    common = {"alpha_spending": sf_alpha, "beta_spending": sf_beta, "spend_mode": mode}
    if "power" not in targets:
        return build_design(model, tests, times, alpha=sf_alpha.total, bound_method=method, **common)
    target_power = float(targets["power"])
    if all(not ts.is_combo and ts.weights[0].kind == "logrank" for ts in tests):
        n, _, summary = sample_size_dn(
            model, times, target_power, sf_alpha.total,
            alpha_spending=sf_alpha, beta_spending=sf_beta, spend_mode=mode,
        )
    elif len(times) == 1:
        n, _, summary = sample_size_nd(
            model, tests[0], times[0], target_power, sf_alpha.total,
            drift=targets.get("drift", "design-point"),
        )
    else:
        raise click.ClickException(
            "power targets support logrank designs (events then enrollment) or a "
            "single-analysis design (sample size then events)"
        )
    if targets.get("ceil_n"):
        n_whole = float(math.ceil(n - 1e-9))
        stretched = replace(
            model, enroll_rate=model.enroll_rate.scaled(n_whole / planned_n(model))
        )
        summary = build_design(
            stretched, tests, times, alpha=sf_alpha.total, bound_method=method, **common
        )
    return summary


@main.command()
@_common_options
def design(config_path, out, fmt, workers, seed, validate_only) -> None:
    """Solve boundaries (and sample size, when targeted) for a declared design."""
    cfg = load_config(config_path)
    if validate_only:
        _build_from_config(cfg, "design")
        click.echo("configuration valid")
        return
    try:
        summary = _run_design(cfg)
    except (ValueError, RuntimeError) as err:
        raise click.ClickException(f"infeasible design: {err}")
    csv_path = _write(out, "design.csv", summary.to_csv())
    json_path = _write(out, "design.json", summary.to_json())
    click.echo(f"N = {summary.n_total:.1f}, power = {summary.power:.4f}, total alpha = {summary.alpha:.4f}")
    click.echo(f"wrote {csv_path} and {json_path}")


@main.command("power")
@_common_options
def power_cmd(config_path, out, fmt, workers, seed, validate_only) -> None:
    """Crossing probabilities of the configured design at its planned size."""
    cfg = load_config(config_path)
    if validate_only:
        _build_from_config(cfg, "power")
        click.echo("configuration valid")
        return
    model, times, tests, sf_alpha, sf_beta, spending, _ = _build_from_config(cfg, "power")
    try:
        summary = build_design(
            model, tests, times, alpha=sf_alpha.total,
            alpha_spending=sf_alpha, beta_spending=sf_beta,
            spend_mode=spending.get("mode", "union-minimum"),
            bound_method=spending.get("method", "chain"),
        )
    except (ValueError, RuntimeError) as err:
        raise click.ClickException(f"infeasible design: {err}")
    fmt = _resolve_format(cfg, fmt)
    text = summary.to_csv() if fmt == "csv" else summary.to_json()
    path = _write(out, f"power.{fmt}", text)
    click.echo(f"power = {summary.power:.4f}")
    click.echo(f"wrote {path}")


@main.command()
@_common_options
def expect(config_path, out, fmt, workers, seed, validate_only) -> None:
    """Average hazard ratio and expected event curves over a time grid."""
    cfg = load_config(config_path)
    model = model_from_config(_require(cfg, "model", "expect"))
    grid_cfg = _require(cfg, "expect", "expect")
    if "times" in grid_cfg:
        grid = [float(t) for t in grid_cfg["times"]]
    else:
        missing = [k for k in ("from", "to", "by") if k not in grid_cfg]
        if missing:
            raise click.ClickException("expect grid needs times or from/to/by")
        start, stop, by = (float(grid_cfg[k]) for k in ("from", "to", "by"))
        steps = int(math.floor((stop - start) / by + 1e-9))
        grid = [start + i * by for i in range(steps + 1)]
    if any(t > model.total_duration + 1e-9 for t in grid):
        raise click.ClickException("expect grid extends beyond the study duration")
    if validate_only:
        click.echo("configuration valid")
        return
    rows = []
    for t in grid:
        if t <= 0.0:
            rows.append((t, 1.0, 0.0))
        else:
            rows.append((t, ahr_lr(model, t).ahr, pooled_expected_events(model, t)))
    fmt = _resolve_format(cfg, fmt)
    if fmt == "csv":
        text = "time,ahr,expected_events\n" + "".join(
            f"{t:.4f},{a:.4f},{d:.4f}\n" for t, a, d in rows
        )
    else:
        text = json.dumps(
            [{"time": t, "ahr": a, "expected_events": d} for t, a, d in rows], indent=2
        )
    path = _write(out, f"expect.{fmt}", text)
    click.echo(f"wrote {path}")


@main.command()
@_common_options
def simulate(config_path, out, fmt, workers, seed, validate_only) -> None:
    """Monte Carlo rejection rates for the configured tests at one analysis."""
    cfg = load_config(config_path)
    if "scenario" in cfg:
        model = cfg["scenario"]
    else:
        model = model_from_config(_require(cfg, "model", "simulate"))
    tests = tests_from_config(_require(cfg, "tests", "simulate"))
    sim = _resolve_sim(cfg, workers, seed)
    rule: dict = {}
    schedule = cfg.get("schedule", {})
    if "times" in schedule:
        rule["calendar_time"] = float(schedule["times"][-1])
    elif "event_counts" in schedule:
        rule["event_count"] = int(schedule["event_counts"][-1])
    if validate_only:
        click.echo("configuration valid")
        return
    n = sim.get("n")
    if n is None:
        raise click.ClickException("the simulate command needs simulation.n subjects")
    report = run_study(
        model,
        tests,
        int(n),
        int(sim["replicates"]),
        int(sim["seed"]),
        workers=int(sim["workers"]),
        collect_z=bool(sim.get("collect_z", False)),
        **rule,
    )
    fmt = _resolve_format(cfg, fmt)
    text = report.to_csv() if fmt == "csv" else report.to_json()
    path = _write(out, f"simulate.{fmt}", text)
    for lab, rate, se in zip(report.labels, report.rates, report.mc_se):
        click.echo(f"{lab}: {rate:.4f} (MC SE {se:.4f})")
    click.echo(f"wrote {path}")


@main.command()
@_common_options
def scenarios(config_path, out, fmt, workers, seed, validate_only) -> None:
    """Power and type I error grid across benchmark scenarios."""
    cfg = load_config(config_path)
    section = _require(cfg, "scenarios", "scenarios")
    sim_tests = tests_from_config(_require(cfg, "tests", "scenarios"))
    do_sim = bool(cfg.get("simulate", False))
    if not do_sim:
        bad = [t.label() for t in sim_tests if t.kind not in _ASYMPTOTIC_KINDS]
        if bad:
            raise click.ClickException(
                "simulation-only statistics need \"simulate\": true: " + ", ".join(bad)
            )
    if validate_only:
        click.echo("configuration valid")
        return
    n = float(section.get("n", 698.0))
    tau = float(section.get("analysis_time", 36.0))
    sim = _resolve_sim(cfg, workers, seed)
    rows = []
    for name in section["names"]:
        model = scenario_model(name, n=n)
        report = None
        if do_sim:
            report = run_study(
                model, sim_tests, int(n), int(sim["replicates"]), int(sim["seed"]),
                calendar_time=tau, workers=int(sim["workers"]),
            )
        for i, t in enumerate(sim_tests):
            asym = (
                asymptotic_power(model, t.test, tau, n=n)
                if t.kind in _ASYMPTOTIC_KINDS
                else None
            )
            rows.append(
                {
                    "scenario": name,
                    "test": t.label(),
                    "asymptotic": asym,
                    "simulated": report.rates[i] if report else None,
                    "mc_se": report.mc_se[i] if report else None,
                }
            )
    fmt = _resolve_format(cfg, fmt)
    if fmt == "csv":
        text = "scenario,test,asymptotic,simulated,mc_se\n" + "".join(
            ",".join((r["scenario"], r["test"], _fmt(r["asymptotic"]), _fmt(r["simulated"]), _fmt(r["mc_se"]))) + "\n"
            for r in rows
        )
    else:
        text = json.dumps(rows, indent=2)
    path = _write(out, f"scenarios.{fmt}", text)
    click.echo(f"wrote {path} ({len(rows)} rows)")


if __name__ == "__main__":
    main()
