"""CLI commands for stepstress."""

import json
import math
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, NoReturn

import numpy as np
import typer
from loguru import logger
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from stepstress import __app_name__, __version__
from stepstress.config.loader import ConfigError, config_to_dict, load_config, validate_config
from stepstress.config.presets import PRESETS, get_preset
from stepstress.config.schema import ExperimentConfig, RuntimeSettings, SolverOptions
from stepstress.core.errors import NumericalError
from stepstress.core.types import ModelParams, StepStressDesign
from stepstress.interfaces.counts_file import CountsFile, CountsFormatError, read_counts, write_counts
from stepstress.observability.logging import configure_logging
from stepstress.utils.helpers import finite_or_none, parse_float_list, write_csv, write_json

app = typer.Typer(
    name="stepstress",
    help=f"{__app_name__} - robust MDPDE for interval-monitored step-stress life tests",
    no_args_is_help=True,
)

console = Console()

EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
ROBUST_BETA = 0.4
RESIDUAL_ALERT = 3.0


def _jsonable(value: Any) -> Any:
    if hasattr(value, "tolist"):
        return value.tolist()
    return str(value)


def _fail(kind: str, message: str, details: Any = None) -> NoReturn:
    """Print one machine-readable error object on stderr and exit."""
    payload = {"error": kind, "message": message, "details": details}
    typer.echo(json.dumps(payload, default=_jsonable, ensure_ascii=False), err=True)
    raise typer.Exit(EXIT_NUMERIC if kind == "numeric" else EXIT_VALIDATION)


@contextmanager
def _guard() -> Iterator[None]:
    """Map library exceptions onto exit codes 2 (validation) and 3 (numeric)."""
    try:
        yield
    except NumericalError as e:
        _fail("numeric", str(e), e.diagnostics)
    except ArithmeticError as e:
        _fail("numeric", f"{type(e).__name__}: {e}")
    except ConfigError as e:
        _fail("validation", str(e), e.details)
    except CountsFormatError as e:
        _fail("validation", str(e), {"row": e.row})
    except ValueError as e:
        _fail("validation", str(e))
    except OSError as e:
        path = e.filename if e.filename is not None else ""
        _fail("validation", f"{path}: {e.strerror or e}", {"path": str(path)})


def version_callback(value: bool):
    if value:
        console.print(f"{__app_name__} v{__version__}")
        raise typer.Exit()


@app.callback()
def main(
    version: bool = typer.Option(None, "--version", "-v", callback=version_callback, is_eager=True),
):
    """stepstress - robust estimation for step-stress accelerated life tests."""
    try:
        level = RuntimeSettings().log
    except ValidationError:
        level = "WARNING"
    configure_logging(level)


# ============================================================================
# Shared option handling
# ============================================================================

ConfigOpt = typer.Option(None, "--config", "-c", help="Experiment config JSON")
PresetOpt = typer.Option(None, "--preset", "-p", help="Built-in scenario (see `stepstress presets`)")
TauOpt = typer.Option(None, "--tau", help="Override the stress-change time (must be an inspection time)")


def _load_experiment(config: Path | None, preset: str | None, tau: float | None = None) -> ExperimentConfig:
    if config is not None:
        cfg = load_config(config)
    elif preset is not None:
        cfg = get_preset(preset)
    else:
        raise ValueError("pass --config FILE or --preset NAME")
    if tau is not None:
        data = config_to_dict(cfg)
        data["design"]["tau"] = tau
        cfg = validate_config(data, "--tau")
    return cfg


def _parse_betas(text: str | None, cfg: ExperimentConfig) -> list[float]:
    if text is None:
        return list(cfg.betas)
    betas = parse_float_list(text)
    if any(b < 0 or not math.isfinite(b) for b in betas):
        raise ValueError(f"--beta values must be finite and >= 0, got {text!r}")
    return betas


def _load_counts(path: Path, cfg: ExperimentConfig) -> tuple[CountsFile, StepStressDesign]:
    """Counts plus the config's design sized to the number of units in the file."""
    data = read_counts(path)
    if data.counts.n_total == 0:
        raise CountsFormatError(f"{path}: counts are all zero")
    design = cfg.to_design(data.counts.n_total)
    data.check_design(design)
    return data, design


def _parse_theta(text: str, cfg: ExperimentConfig) -> ModelParams:
    return ModelParams.from_theta(cfg.baseline, parse_float_list(text))


def _fmt(value: float | None, digits: int = 6) -> str:
    if value is None or not math.isfinite(value):
        return "-"
    return f"{value:.{digits}g}"


# ============================================================================
# generate
# ============================================================================


@app.command()
def generate(
    config: Path | None = ConfigOpt,
    preset: str | None = PresetOpt,
    out: Path = typer.Option(Path("counts.csv"), "--out", "-o", help="Counts CSV to write"),
    seed: int | None = typer.Option(None, "--seed", help="RNG seed (default: config seed)"),
    epsilon: float = typer.Option(0.0, "--epsilon", help="Contaminate the config's cell by (1 + epsilon)"),
    tau: float | None = TauOpt,
):
    """Draw one synthetic counts dataset from the config's true theta."""
    from stepstress.simulation.generator import ContaminationSpec, generate_counts

    with _guard():
        cfg = _load_experiment(config, preset, tau)
        theta = cfg.true_params()
        design = cfg.to_design()
        contamination = None
        if epsilon:
            if cfg.contamination is None:
                raise ValueError("--epsilon needs a contamination block naming the cell")
            contamination = ContaminationSpec(cfg.contamination.cell, epsilon)
        counts = generate_counts(
            theta, design, contamination, cfg.simulation.seed if seed is None else seed
        )
        write_counts(out, counts, design)
    console.print(f"[green]✓[/green] Wrote {design.n_cells} cells ({counts.n_total} units) to {out}")


# ============================================================================
# fit
# ============================================================================


def _print_fit_table(fits: list, names: tuple[str, ...]) -> None:
    table = Table(title="MDPDE estimates")
    table.add_column("β", style="cyan")
    for result in fits:
        mark = "" if result.converged else "*"
        table.add_column(f"{result.beta.beta:g}{mark}", justify="right")
    for i, name in enumerate(names):
        table.add_row(name, *(_fmt(float(f.theta[i])) for f in fits))
        table.add_row(
            f"[dim]se({name})[/dim]", *(f"[dim]{_fmt(float(f.std_errors[i]), 3)}[/dim]" for f in fits)
        )
    console.print(table)
    if any(not f.converged for f in fits):
        console.print("[yellow]* did not converge; see the JSON report for details[/yellow]")


def _fit_rows(fits: list, names: tuple[str, ...]) -> list[list[Any]]:
    rows: list[list[Any]] = []
    for i, name in enumerate(names):
        rows.append([name, *(finite_or_none(f.theta[i]) for f in fits)])
    for i, name in enumerate(names):
        rows.append([f"se_{name}", *(finite_or_none(f.std_errors[i]) for f in fits)])
    rows.append(["converged", *(int(f.converged) for f in fits)])
    return rows


@app.command()
def fit(
    counts: Path = typer.Argument(..., help="Counts CSV"),
    config: Path | None = ConfigOpt,
    preset: str | None = PresetOpt,
    beta: str | None = typer.Option(None, "--beta", "-b", help="Comma-separated tuning parameters"),
    level: float | None = typer.Option(None, "--level", help="Confidence level for Wald intervals"),
    out: Path = typer.Option(Path("fit"), "--out", "-o", help="Output directory"),
    tau: float | None = TauOpt,
):
    """Fit MDPDEs over a beta grid; writes fit.json and a Table-style fit.csv."""
    from stepstress.estimation.optimizer import fit_grid

    with _guard():
        cfg = _load_experiment(config, preset, tau)
        data, design = _load_counts(counts, cfg)
        betas = _parse_betas(beta, cfg)
        solver = cfg.solver if level is None else SolverOptions.model_validate(
            {**cfg.solver.model_dump(), "level": level}
        )
        fits = fit_grid(data.counts, design, cfg.baseline, betas, solver)

        names = fits[0].names
        report = {
            "baseline": cfg.baseline.value,
            "counts": list(data.counts.counts),
            "design": {
                "x1": design.x1,
                "x2": design.x2,
                "tau": design.tau,
                "inspectionTimes": list(design.inspection_times),
                "nUnits": design.n_units,
            },
            "fits": [f.to_dict() for f in fits],
        }
        write_json(out / "fit.json", report)
        write_csv(out / "fit.csv", ["parameter", *(f"{b:g}" for b in betas)], _fit_rows(fits, names))
    _print_fit_table(fits, names)
    console.print(f"[green]✓[/green] Wrote {out / 'fit.json'} and {out / 'fit.csv'}")
    if all(f.theta_hat is None for f in fits):
        _fail("numeric", "no beta produced an estimate", {"messages": [f.message for f in fits]})


# ============================================================================
# characterize
# ============================================================================


def _theta_from_report(path: Path, beta: float | None, cfg: ExperimentConfig):
    """Estimate and covariance of one fit in a fit.json report."""
    from stepstress.estimation.asymptotics import AsymptoticCovariance

    try:
        report = json.loads(Path(path).read_text(encoding="utf-8"))
        fits = report["fits"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise ValueError(f"{path}: not a fit report ({e})") from e
    chosen = fits[0] if beta is None else next((f for f in fits if f["beta"] == beta), None)
    if chosen is None:
        raise ValueError(f"{path}: no fit with beta={beta}")
    kind = report.get("baseline", cfg.baseline.value)
    values = [row["estimate"] for row in chosen["parameters"]]
    if any(v is None for v in values):
        raise ValueError(f"{path}: the fit with beta={chosen['beta']} has no estimate ({chosen.get('message', '')})")
    theta = ModelParams.from_theta(kind, values)
    covariance = None
    if chosen.get("sigma") is not None and chosen.get("nUnits"):
        covariance = AsymptoticCovariance(np.array(chosen["sigma"], dtype=float), int(chosen["nUnits"]), theta.names)
    return theta, covariance, chosen["beta"]


@app.command()
def characterize(
    fit_report: Path | None = typer.Option(None, "--fit", "-f", help="fit.json written by `fit`"),
    theta: str | None = typer.Option(None, "--theta", help="Explicit theta, e.g. 0.018,0.005,0.5"),
    beta: float | None = typer.Option(
        None,
        "--beta",
        "-b",
        min=0.0,
        help="Which fit of the report to use; with --theta, the MDPDE whose covariance is used (default 0)",
    ),
    config: Path | None = ConfigOpt,
    preset: str | None = PresetOpt,
    level: float | None = typer.Option(None, "--level", help="Confidence level"),
    quantiles: str | None = typer.Option(None, "--quantiles", help="Extra quantile probabilities"),
    out: Path = typer.Option(Path("characteristics.json"), "--out", "-o", help="JSON report"),
):
    """Mean, median, quantiles, reliability and hazard at normal operating conditions.

    With ``--theta`` the intervals use the MDPDE covariance at that theta for the
    config's design and number of units.
    """
    from stepstress.characteristics.lifetime import NocQuery, characterize as characterize_theta
    from stepstress.estimation.asymptotics import asymptotic_covariance

    with _guard():
        cfg = _load_experiment(config, preset)
        noc = cfg.require_noc()
        if (fit_report is None) == (theta is None):
            raise ValueError("pass exactly one of --fit REPORT or --theta VALUES")
        if fit_report is not None:
            params, covariance, used_beta = _theta_from_report(fit_report, beta, cfg)
        else:
            params = _parse_theta(theta, cfg)
            used_beta = 0.0 if beta is None else beta
            design = cfg.to_design()
            covariance = asymptotic_covariance(params, design, used_beta, design.n_units)
        query = NocQuery(noc.x0, noc.t0, noc.p, noc.level if level is None else level)
        probs = parse_float_list(quantiles) if quantiles else list(noc.quantiles)
        estimates = characterize_theta(params, query, covariance, probs)

        write_json(
            out,
            {
                "beta": used_beta,
                "theta": params.to_dict(),
                "x0": query.x0,
                "t0": query.t0,
                "p": query.p,
                "level": query.level,
                "nUnits": covariance.n_units if covariance is not None else None,
                "characteristics": {name: est.to_dict() for name, est in estimates.items()},
            },
        )
    table = Table(title=f"Characteristics at x0={query.x0:g}")
    table.add_column("Characteristic", style="cyan")
    table.add_column("Estimate", justify="right")
    table.add_column("SE", justify="right")
    table.add_column(f"{query.level:.0%} CI", justify="right")
    for name, est in estimates.items():
        ci = "-" if est.ci is None else f"[{_fmt(est.ci[0], 4)}, {_fmt(est.ci[1], 4)}]"
        table.add_row(name, _fmt(est.value), _fmt(est.std_error, 3), ci)
    console.print(table)
    console.print(f"[green]✓[/green] Wrote {out}")


# ============================================================================
# simulate
# ============================================================================


@app.command()
def simulate(
    config: Path | None = ConfigOpt,
    preset: str | None = PresetOpt,
    beta: str | None = typer.Option(None, "--beta", "-b", help="Comma-separated tuning parameters"),
    seed: int | None = typer.Option(None, "--seed", help="Master seed"),
    threads: int | None = typer.Option(None, "--threads", "-t", min=1, help="Worker processes (default: all cores)"),
    replicates: int | None = typer.Option(None, "--replicates", "-r", min=1, help="Monte Carlo replicates"),
    out: Path = typer.Option(Path("simulation"), "--out", "-o", help="Output directory"),
    tau: float | None = TauOpt,
):
    """Monte Carlo RMSE study over the beta and epsilon grids."""
    from stepstress.simulation.study import SimulationConfig, rmse_study

    with _guard():
        cfg = _load_experiment(config, preset, tau)
        sim = SimulationConfig.from_experiment(
            cfg, betas=_parse_betas(beta, cfg), seed=seed, workers=threads, replicates=replicates
        )
        out.mkdir(parents=True, exist_ok=True)
        try:
            level = RuntimeSettings().log
        except ValidationError:
            level = "WARNING"
        configure_logging(level, json_path=out / "simulate.log.jsonl")
        report = rmse_study(sim)
        write_json(out / "report.json", report.to_dict())
        write_csv(out / "rmse.csv", ["beta", "epsilon", "target", "rmse"], report.rmse_rows())
        write_csv(out / "residuals.csv", ["epsilon", "cell", "mean_residual"], report.residual_rows())

    table = Table(title=f"RMSE over {report.replicates} replicates")
    table.add_column("ε", style="cyan")
    table.add_column("β", style="cyan")
    for target in (*report.parameter_names, *report.targets):
        table.add_column(target, justify="right")
    table.add_column("failed", justify="right")
    for cell in report.cells:
        values = [cell.rmse[t] for t in (*report.parameter_names, *report.targets)]
        table.add_row(
            f"{cell.epsilon:g}", f"{cell.beta:g}", *(_fmt(v, 4) for v in values), str(cell.n_failed)
        )
    console.print(table)
    console.print(f"[green]✓[/green] Wrote report.json, rmse.csv and residuals.csv to {out}")
    if report.flagged:
        _fail(
            "numeric",
            f"{report.failure_rate:.1%} of replicates failed (limit 5%)",
            {"failureRate": report.failure_rate},
        )


# ============================================================================
# residuals
# ============================================================================


@app.command()
def residuals(
    counts: Path = typer.Argument(..., help="Counts CSV"),
    config: Path | None = ConfigOpt,
    preset: str | None = PresetOpt,
    theta: str | None = typer.Option(None, "--theta", help="Evaluate at this theta instead of fitting"),
    beta: float = typer.Option(ROBUST_BETA, "--beta", "-b", min=0.0, help="Tuning parameter of the plug-in fit"),
    out: Path = typer.Option(Path("residuals.csv"), "--out", "-o", help="CSV of (cell, residual)"),
    tau: float | None = TauOpt,
):
    """Adjusted residuals per cell, at a given theta or at a robust MDPDE."""
    from stepstress.estimation.optimizer import fit_mdpde
    from stepstress.simulation.generator import adjusted_residuals

    with _guard():
        cfg = _load_experiment(config, preset, tau)
        data, design = _load_counts(counts, cfg)
        if theta is not None:
            params = _parse_theta(theta, cfg)
            source = "given theta"
        else:
            result = fit_mdpde(data.counts, design, cfg.baseline, beta, cfg.solver)
            if result.theta_hat is None:
                raise NumericalError(f"plug-in fit failed: {result.message}", {"beta": beta})
            if not result.converged:
                logger.warning("plug-in fit did not converge: {}", result.message)
            params = result.theta_hat
            source = f"MDPDE with beta={beta:g}"
        values = adjusted_residuals(data.counts, params, design)
        write_csv(out, ["cell", "residual"], [(j, float(r)) for j, r in enumerate(values, start=1)])
    table = Table(title=f"Adjusted residuals ({source})")
    table.add_column("Cell", style="cyan")
    table.add_column("Residual", justify="right")
    for j, r in enumerate(values, start=1):
        style = "red" if abs(r) > RESIDUAL_ALERT else ""
        table.add_row(str(j), f"[{style}]{r:.3f}[/{style}]" if style else f"{r:.3f}")
    console.print(table)
    if theta is None and beta < ROBUST_BETA:
        console.print(
            f"[yellow]A non-robust plug-in can mask outlying cells; consider --beta {ROBUST_BETA:g} or larger.[/yellow]"
        )
    console.print(f"[green]✓[/green] Wrote {out}")


# ============================================================================
# presets
# ============================================================================


@app.command()
def presets(
    dump: str | None = typer.Option(None, "--dump", help="Print one preset as a config file"),
    out: Path | None = typer.Option(None, "--out", "-o", help="Write the dumped preset here"),
):
    """List built-in scenarios, or dump one as an editable config."""
    if dump is None:
        table = Table(title="Presets")
        table.add_column("Name", style="cyan")
        table.add_column("Description")
        for name, (description, _) in PRESETS.items():
            table.add_row(name, description)
        console.print(table)
        return

    with _guard():
        data = config_to_dict(get_preset(dump))
    text = json.dumps(data, indent=2, ensure_ascii=False)
    if out is None:
        sys.stdout.write(text + "\n")
        return
    with _guard():
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n", encoding="utf-8")
    console.print(f"[green]✓[/green] Wrote preset {dump} to {out}")


# ============================================================================
# logs
# ============================================================================


def _print_log_row(row: dict, *, json_output: bool) -> None:
    if json_output:
        sys.stdout.write(json.dumps(row, ensure_ascii=False) + "\n")
        return
    console.print(f"{row['time']} {row['level']:<8} {row['module']}: {row['message']}", markup=False)


@app.command("logs")
def logs_command(
    path: Path = typer.Argument(Path("simulation/simulate.log.jsonl"), help="JSONL log written by `simulate`"),
    level: str | None = typer.Option(None, "--level", help="Only rows at this level"),
    json_output: bool = typer.Option(False, "--json", help="Output raw JSONL rows"),
    lines: int = typer.Option(50, "--lines", "-n", min=1, help="Recent rows to show"),
):
    """Show the diagnostic log of a simulation run."""
    from stepstress.observability.logging import read_log_records

    rows = read_log_records(path, level=level, limit=lines)
    for row in rows:
        _print_log_row(row, json_output=json_output)
    if not rows:
        console.print("[dim]No diagnostic logs found.[/dim]")
