"""Command-line interface.

Subcommands
-----------
analyze    spectral data (Jost/scattering matrices, bound states) of a problem
surgery    apply a plan of bound-state transformations to a problem
verify     run structural identity batteries on a problem
reproduce  run the packaged reference fixtures

Exit codes: 0 success, 2 invalid input, 3 plan does not match the spectrum,
4 unknown fixture id, 5 numerical failure or failed verification.

The environment variable SPECSURG_THREADS caps both BLAS threads and the
number of fixtures executed concurrently by `reproduce`.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import sys

import click

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PLAN = 3
EXIT_FIXTURE = 4
EXIT_NUMERIC = 5


def _cap_threads():
    cap = os.environ.get("SPECSURG_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def _parse_grid(text: str, name: str):
    import numpy as np
    try:
        lo, hi, count = text.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError:
        raise click.UsageError(f"--{name} must look like min:max:count")
    if count < 1 or hi < lo:
        raise click.UsageError(f"--{name}: empty or inverted range")
    return np.linspace(lo, hi, count)


_TOL_NAMES = {"rtol", "scan-rtol", "kappa-min", "kappa-max", "scan-points"}


def _parse_tols(pairs):
    out = {}
    for item in pairs:
        name, _, value = item.partition("=")
        if name not in _TOL_NAMES or not value:
            raise click.UsageError(
                f"--tol expects NAME=VALUE with NAME in {sorted(_TOL_NAMES)}"
            )
        out[name] = float(value)
    return out


def _scan_kwargs(tols):
    kw = {}
    if "rtol" in tols:
        kw["rtol"] = tols["rtol"]
    if "scan-rtol" in tols:
        kw["scan_rtol"] = tols["scan-rtol"]
    if "kappa-min" in tols:
        kw["kappa_min"] = tols["kappa-min"]
    if "kappa-max" in tols:
        kw["kappa_max"] = tols["kappa-max"]
    if "scan-points" in tols:
        kw["npts"] = int(tols["scan-points"])
    return kw


def _round12(obj):
    """Round every float to 12 significant digits for stable output."""
    if isinstance(obj, float):
        return float(f"{obj:.12g}") if math.isfinite(obj) else obj
    if isinstance(obj, dict):
        return {k: _round12(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round12(v) for v in obj]
    return obj


def _emit(payload, out, fmt):
    if fmt == "json":
        text = json.dumps(_round12(payload), sort_keys=True, indent=2) + "\n"
    else:
        text = _to_csv(payload)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def _flatten(prefix, obj, rows):
    if isinstance(obj, dict):
        for key in sorted(obj):
            _flatten(f"{prefix}.{key}" if prefix else key, obj[key], rows)
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, rows)
    else:
        rows.append((prefix, obj))


def _to_csv(payload) -> str:
    rows = []
    _flatten("", _round12(payload), rows)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["key", "value"])
    writer.writerows(rows)
    return buf.getvalue()


class _InputError(click.ClickException):
    exit_code = EXIT_INPUT


def _load_problem(path):
    from . import problems
    try:
        return problems.load_spec(path)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise _InputError(f"invalid problem file: {exc}") from exc


def _sample_matrix_grid(grid, fn):
    from .problems import _matrix_to_json
    return [{"at": float(t), "matrix": _matrix_to_json(fn(t))} for t in grid]


@click.group()
def main():
    _cap_threads()


@main.command()
@click.argument("problem", type=click.Path(exists=True, dir_okay=False))
@click.option("--k-grid", default="0.5:5.0:10", show_default=True,
              help="real wavenumber samples as min:max:count")
@click.option("--x-grid", default="0:10:11", show_default=True,
              help="position samples as min:max:count")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
              default="json", show_default=True)
@click.option("--tol", multiple=True, help="NAME=VALUE numerical overrides")
def analyze(problem, k_grid, x_grid, out, fmt, tol):
    """Report spectral data of the PROBLEM file."""
    ks = _parse_grid(k_grid, "k-grid")
    xs = _parse_grid(x_grid, "x-grid")
    tols = _parse_tols(tol)
    spec = _load_problem(problem)

    from . import problems, spectral
    try:
        rep = spectral.assemble_spectrum(spec, **_scan_kwargs(tols))
        payload = {
            "problem": problems.spec_to_json(spec),
            "spectrum": rep.to_dict(),
            "jost": _sample_matrix_grid(ks, rep.jost_at),
            "scattering": _sample_matrix_grid(ks, rep.smatrix_at),
            "density": _sample_matrix_grid(
                [k * k for k in ks], rep.rho_density_at),
            "potential": _sample_matrix_grid(xs, spec.potential),
        }
    except Exception as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)
    _emit(payload, out, fmt)


def _plan_matrix(obj):
    import numpy as np
    arr = np.asarray(obj, dtype=object)
    if arr.ndim == 3:  # [re, im] pairs
        from .problems import _matrix_from_json
        return _matrix_from_json(obj)
    if arr.ndim == 2:
        return np.asarray(obj, dtype=float)
    raise ValueError("matrix entries must be 2-d (real) or [re,im] pairs")


def _plan_from_dict(d):
    from . import surgery
    op = d.get("op")
    kappa = float(d["kappa"])
    mats = {key: _plan_matrix(val) for key, val in d.items()
            if key not in ("op", "kappa")}
    if op == "remove":
        return surgery.Remove(kappa=kappa)
    if op == "lower":
        return surgery.Lower(kappa=kappa, Q_r=mats["Q_r"])
    if op == "add":
        return surgery.Add(kappa=kappa, C=mats.get("C"), Q=mats.get("Q"),
                           G=mats.get("G"))
    if op == "raise":
        return surgery.Raise(kappa=kappa, Q_i=mats["Q_i"], G_i=mats["G_i"])
    raise ValueError(f"unknown op {op!r}; use remove, lower, add or raise")


@main.command()
@click.argument("problem", type=click.Path(exists=True, dir_okay=False))
@click.option("--plan", "plan_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help='JSON file {"steps": [{"op": ..., "kappa": ..., ...}]}')
@click.option("--k-grid", default="0.5:5.0:10", show_default=True)
@click.option("--x-grid", default="0:40:801", show_default=True,
              help="tabulation grid for the perturbed potential")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
              default="json", show_default=True)
@click.option("--tol", multiple=True, help="NAME=VALUE numerical overrides")
def surgery(problem, plan_path, k_grid, x_grid, out, fmt, tol):
    """Transform the bound states of PROBLEM according to a plan."""
    ks = _parse_grid(k_grid, "k-grid")
    xs = _parse_grid(x_grid, "x-grid")
    tols = _parse_tols(tol)
    spec = _load_problem(problem)

    try:
        with open(plan_path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        steps = [_plan_from_dict(d) for d in raw["steps"]]
    except (OSError, json.JSONDecodeError, KeyError, TypeError,
            ValueError) as exc:
        click.echo(f"invalid plan file: {exc}", err=True)
        sys.exit(EXIT_INPUT)

    from . import problems, surgery as surgery_mod
    try:
        result = surgery_mod.compose(steps, spec, **_scan_kwargs(tols))
    except surgery_mod.SurgeryError as exc:
        click.echo(f"plan does not match the spectrum: {exc}", err=True)
        sys.exit(EXIT_PLAN)
    except Exception as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)

    try:
        samples = [(float(x), result.V_t(x)) for x in xs]
        perturbed = {
            "n": spec.n,
            "potential": {
                "tabulated": {
                    "grid": [x for x, _ in samples],
                    "matrices": [problems._matrix_to_json(m)
                                 for _, m in samples],
                    "interpolation": "cubic",
                }
            },
            "boundary": {
                "A": problems._matrix_to_json(result.A_t),
                "B": problems._matrix_to_json(result.B_t),
            },
        }
        payload = {
            "base_problem": problems.spec_to_json(spec),
            "transform": result.to_dict(x_grid=xs[:: max(1, len(xs) // 20)],
                                        k_grid=ks),
            "perturbed_problem": perturbed,
        }
    except Exception as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)
    _emit(payload, out, fmt)


@main.command()
@click.argument("problem", type=click.Path(exists=True, dir_okay=False))
@click.option("--k-grid", default="0.4:4.0:8", show_default=True)
@click.option("--x-grid", default="0:8:5", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--tol", multiple=True, help="NAME=VALUE numerical overrides")
def verify(problem, k_grid, x_grid, out, tol):
    """Check structural identities of PROBLEM; exit 5 on any violation."""
    import numpy as np

    ks = _parse_grid(k_grid, "k-grid")
    xs = _parse_grid(x_grid, "x-grid")
    _parse_tols(tol)
    spec = _load_problem(problem)

    from .spectral import jost_matrix, scattering_matrix
    from .waves import ode_residual, solve_jost, solve_regular

    batteries = []

    def battery(name, residual, tol_value):
        batteries.append({"name": name, "max_residual": float(residual),
                          "tol": float(tol_value),
                          "passed": bool(residual <= tol_value)})

    try:
        res = max(np.max(np.abs(spec.potential(x)
                                - spec.potential(x).conj().T)) for x in xs)
        battery("potential hermiticity", res, 1e-10)

        res = 0.0
        for k in ks:
            S = scattering_matrix(spec, k)
            Sm = scattering_matrix(spec, -k)
            res = max(res,
                      np.max(np.abs(S @ S.conj().T - np.eye(spec.n))),
                      np.max(np.abs(Sm - S.conj().T)))
        battery("scattering-matrix unitarity and symmetry", res, 1e-8)

        res = 0.0
        for k in ks[:3]:
            Jp, Jm = jost_matrix(spec, k), jost_matrix(spec, -k)
            fp = solve_jost(spec.potential, k)
            fm = solve_jost(spec.potential, -k)
            chain = solve_regular(spec.potential, spec.A, spec.B, k)
            for x in xs:
                lhs = chain.pair_at(x)[0]
                rhs = (fp.value_at(x) @ Jm - fm.value_at(x) @ Jp) / (2j * k)
                res = max(res, np.max(np.abs(lhs - rhs))
                          / max(1.0, np.max(np.abs(lhs))))
        battery("wave-solution consistency", res, 1e-6)

        k0 = float(ks[len(ks) // 2])
        fs = solve_jost(spec.potential, k0)
        res = max(ode_residual(spec.potential, k0, fs.value_at, x)
                  for x in xs if x > 0)
        battery("differential-equation residual", res, 1e-6)
    except Exception as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)

    payload = {"batteries": batteries,
               "passed": all(b["passed"] for b in batteries)}
    _emit(payload, out, "json")
    if not payload["passed"]:
        sys.exit(EXIT_NUMERIC)


@main.command()
@click.argument("which", default="all")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
              default="json", show_default=True)
def reproduce(which, out, fmt):
    """Run packaged reference fixtures (a fixture id, or 'all' / a tag)."""
    from . import fixtures

    try:
        if which == "all":
            reports = fixtures.run_all()
        elif which in fixtures.fixture_ids():
            reports = [fixtures.run_fixture(which)]
        elif which in ("analysis", "surgery", "decay"):
            reports = fixtures.run_all(tag=which)
        else:
            click.echo(
                f"unknown fixture {which!r}; valid ids: "
                + ", ".join(fixtures.fixture_ids())
                + " (or 'all', or a tag: analysis, surgery, decay)", err=True)
            sys.exit(EXIT_FIXTURE)
    except fixtures.UnknownFixtureError as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_FIXTURE)

    click.echo(fixtures.summary_table(reports))
    if out:
        _emit(fixtures.summary_dict(reports), out, fmt)
    if not all(r.passed for r in reports):
        sys.exit(EXIT_NUMERIC)


if __name__ == "__main__":
    main()
