"""Scenario-driven command line front end.

Scenarios are JSON documents with a schema-version field
("afftop-scenario/1") describing the model, its parameters, the initial
state in either the full or the reduced chart, an optional potential and
metrics, integrator settings, and output preferences.  Subcommands:

  simulate    integrate the full chart, emit a trajectory table and an
              invariant drift report
  reduce      emit the reduced-chart trajectory, check the quadratic
              invariant identity, and write a companion scenario that can
              seed a later full-chart run
  classify    boundedness verdict for the scenario's generator
  equilibria  relative-equilibrium residual table over supplied generators
  verify      run the scenario's invariant and property checks, exiting
              nonzero on any failure

Tables are CSV (17 significant digits, deterministic) or JSON lines.  An
optional --plot-dir renders a per-run overview figure next to the tables.
Exit codes: 0 success, 1 usage or schema errors, 2 numerical failures,
3 verification failures.
"""

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import (
    IntegratorSettings,
    FullPhaseState,
    PotentialSpec,
    integrate,
    monitor_invariants,
)
from .errors import (
    CoincidentInvariants,
    DegenerateSpectrum,
    InvalidParameters,
    NegativeOrientation,
    NonPositiveMetric,
    SchemaError,
    SemanticError,
    SingularConfiguration,
    SingularInertia,
    SingularityApproach,
    StepFailure,
)
from .geodesics import (
    GeneratorCurve,
    classify_generator,
    is_metric_normal,
    relative_equilibrium_residual,
)
from .kinematics import Configuration, MetricPair, VelocityState
from .lattice import (
    ReducedPhaseState,
    UnitaryCompact,
    integrate_reduced,
    reconstruct_state,
    reduce_state,
    reduce_trajectory,
    reduced_casimirs,
    reduced_hamiltonian,
    sutherland_oracle_rhs,
)
from .models import (
    AffineAffine,
    AffineMetrical,
    DAlembert,
    MetricalAffine,
    Momenta,
    casimir_invariants,
)

SCHEMA_VERSION = "afftop-scenario/1"

_MODEL_NAMES = ("AffineAffine", "AffineMetrical", "MetricalAffine",
                "DAlembert", "UnitaryCompact")

_NUMERICAL_ERRORS = (StepFailure, SingularityApproach, SingularConfiguration,
                     DegenerateSpectrum, CoincidentInvariants,
                     NegativeOrientation, SingularInertia,
                     FloatingPointError, np.linalg.LinAlgError)

_CONFIG_ERRORS = (SchemaError, SemanticError, InvalidParameters,
                  NonPositiveMetric)


# ---------------------------------------------------------------------------
# scenario parsing
# ---------------------------------------------------------------------------

@dataclass
class Scenario:
    """Validated scenario, models and settings already constructed."""

    n: int
    model: object
    metrics: MetricPair
    initial: dict
    potential: PotentialSpec
    settings: IntegratorSettings
    t_end: float
    outputs: dict
    generator: dict
    generators: list
    seed: int
    checks: dict
    label: str
    raw: dict = field(repr=False, default=None)


class _Collector:
    def __init__(self):
        self.errors = []

    def error(self, path, message):
        self.errors.append(f"{path}: {message}")

    def raise_if_any(self):
        if self.errors:
            raise SchemaError("; ".join(self.errors))


def _check_keys(obj, path, required, optional, col):
    if not isinstance(obj, dict):
        col.error(path, "expected an object")
        return False
    ok = True
    for key in required:
        if key not in obj:
            col.error(f"{path}.{key}", "missing required field")
            ok = False
    for key in obj:
        if key not in required and key not in optional:
            col.error(f"{path}.{key}", "unknown field")
            ok = False
    return ok


def _as_number(obj, path, col):
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        col.error(path, "expected a number")
        return None
    return float(obj)


def _as_vector(obj, n, path, col):
    try:
        vec = np.asarray(obj, dtype=float)
    except (TypeError, ValueError):
        col.error(path, "expected a numeric array")
        return None
    if vec.shape != (n,):
        col.error(path, f"expected {n} entries, got shape {vec.shape}")
        return None
    return vec


def _as_matrix(obj, n, path, col):
    try:
        mat = np.asarray(obj, dtype=float)
    except (TypeError, ValueError):
        col.error(path, "expected a numeric matrix")
        return None
    if mat.shape != (n, n):
        col.error(path, f"expected a {n}x{n} matrix, got shape {mat.shape}")
        return None
    return mat


def _build_model(name, params, n, col):
    if not _check_keys(params, "params", (), {
        "affine", "trace", "mass", "translation", "metrical", "inertia"}, col):
        return None
    try:
        if name == "AffineAffine":
            allowed = {"affine", "trace", "mass", "translation"}
        elif name in ("AffineMetrical", "MetricalAffine"):
            allowed = {"metrical", "affine", "trace", "mass"}
        elif name == "DAlembert":
            allowed = {"mass", "inertia"}
        else:
            allowed = {"affine", "trace"}
        for key in params:
            if key not in allowed:
                col.error(f"params.{key}", f"not a {name} parameter")
        if col.errors:
            return None
        if name == "AffineAffine":
            return AffineAffine(dim=n, **params)
        if name == "AffineMetrical":
            return AffineMetrical(dim=n, **params)
        if name == "MetricalAffine":
            return MetricalAffine(dim=n, **params)
        if name == "DAlembert":
            kw = dict(params)
            inertia = _as_matrix(kw.pop("inertia", None), n, "params.inertia", col)
            if inertia is None:
                return None
            return DAlembert(inertia=inertia, **kw)
        return UnitaryCompact(**params)
    except (InvalidParameters, SingularInertia, TypeError) as exc:
        raise SemanticError(f"{type(exc).__name__}: {exc}") from exc


def _parse_initial(obj, n, col):
    variants = [key for key in ("full", "reduced", "random_full") if key in obj]
    if not isinstance(obj, dict) or len(variants) != 1 or len(obj) != 1:
        col.error("initial", 'expected exactly one of "full", "reduced", '
                  '"random_full"')
        return None
    kind = variants[0]
    body = obj[kind]
    out = {"kind": kind}
    if kind == "full":
        if not _check_keys(body, "initial.full", ("phi0",),
                           {"x0", "velocities", "momenta"}, col):
            return None
        out["phi0"] = _as_matrix(body["phi0"], n, "initial.full.phi0", col)
        out["x0"] = (_as_vector(body["x0"], n, "initial.full.x0", col)
                     if "x0" in body else np.zeros(n))
        given = [k for k in ("velocities", "momenta") if k in body]
        if len(given) != 1:
            col.error("initial.full",
                      'expected exactly one of "velocities", "momenta"')
            return None
        if given[0] == "velocities":
            vel = body["velocities"]
            if not _check_keys(vel, "initial.full.velocities", ("phi_dot",),
                               {"v"}, col):
                return None
            out["phi_dot"] = _as_matrix(vel["phi_dot"], n,
                                        "initial.full.velocities.phi_dot", col)
            out["v"] = (_as_vector(vel["v"], n, "initial.full.velocities.v", col)
                        if "v" in vel else np.zeros(n))
        else:
            mom = body["momenta"]
            if not _check_keys(mom, "initial.full.momenta", (),
                               {"p", "Sigma", "Sigma_hat"}, col):
                return None
            charts = [k for k in ("Sigma", "Sigma_hat") if k in mom]
            if len(charts) != 1:
                col.error("initial.full.momenta",
                          'expected exactly one of "Sigma", "Sigma_hat"')
                return None
            out["p"] = (_as_vector(mom["p"], n, "initial.full.momenta.p", col)
                        if "p" in mom else np.zeros(n))
            out["mom_chart"] = charts[0]
            out["mom_matrix"] = _as_matrix(mom[charts[0]], n,
                                           f"initial.full.momenta.{charts[0]}",
                                           col)
    elif kind == "reduced":
        if not _check_keys(body, "initial.reduced", ("q", "p", "M", "N"),
                           {"L", "R"}, col):
            return None
        out["q"] = _as_vector(body["q"], n, "initial.reduced.q", col)
        out["p"] = _as_vector(body["p"], n, "initial.reduced.p", col)
        out["M"] = _as_matrix(body["M"], n, "initial.reduced.M", col)
        out["N"] = _as_matrix(body["N"], n, "initial.reduced.N", col)
        out["L"] = (_as_matrix(body["L"], n, "initial.reduced.L", col)
                    if "L" in body else np.eye(n))
        out["R"] = (_as_matrix(body["R"], n, "initial.reduced.R", col)
                    if "R" in body else np.eye(n))
    else:
        if not _check_keys(body, "initial.random_full", (),
                           {"spread", "mom_scale"}, col):
            return None
        out["spread"] = float(body.get("spread", 0.35))
        out["mom_scale"] = float(body.get("mom_scale", 0.5))
    return out


_CHECK_SCHEMAS = {
    "bounded_spread": (("max",), ()),
    "monotone_growth": ((), ("ratio",)),
    "sutherland": (("coupling",), ("tol",)),
    "h_drift": ((), ("tol",)),
    "conserved": ((), ("tol",)),
    "casimir": ((), ("tol",)),
    "roundtrip": ((), ("tol",)),
}


def parse_scenario(text):
    """Parse and validate a scenario document.

    Raises SchemaError with a path-annotated message list for structural
    problems and SemanticError (naming the underlying parameter error) for
    values the models reject.
    """
    col = _Collector()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"document: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise SchemaError("document: expected a JSON object")
    _check_keys(doc, "document",
                ("schema", "n", "model", "params", "initial"),
                {"metrics", "potential", "integrator", "outputs", "generator",
                 "generators", "seed", "checks", "label"}, col)
    col.raise_if_any()

    if doc["schema"] != SCHEMA_VERSION:
        col.error("schema", f'expected "{SCHEMA_VERSION}", got {doc["schema"]!r}')
    n = doc["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 2:
        col.error("n", "expected an integer dimension >= 2")
        col.raise_if_any()
    if doc["model"] not in _MODEL_NAMES:
        col.error("model", f"unknown model {doc['model']!r}; expected one of "
                  + ", ".join(_MODEL_NAMES))
    col.raise_if_any()

    model = _build_model(doc["model"], doc["params"], n, col)
    col.raise_if_any()

    metrics = MetricPair.identity(n)
    if "metrics" in doc:
        if _check_keys(doc["metrics"], "metrics", ("g", "eta"), (), col):
            g = _as_matrix(doc["metrics"]["g"], n, "metrics.g", col)
            eta = _as_matrix(doc["metrics"]["eta"], n, "metrics.eta", col)
            if g is not None and eta is not None:
                try:
                    metrics = MetricPair(g=g, eta=eta)
                except (NonPositiveMetric, InvalidParameters) as exc:
                    raise SemanticError(f"{type(exc).__name__}: {exc}") from exc

    initial = _parse_initial(doc["initial"], n, col)
    col.raise_if_any()

    potential = None
    if "potential" in doc:
        body = doc["potential"]
        if _check_keys(body, "potential", ("kind",),
                       {"dil_kind", "kappa"}, col):
            if body["kind"] == "general_config":
                col.error("potential.kind",
                          "general_config is not representable in a scenario")
            else:
                try:
                    potential = PotentialSpec(**body)
                except InvalidParameters as exc:
                    raise SemanticError(f"InvalidParameters: {exc}") from exc

    t_end = 10.0
    settings_kw = {}
    if "integrator" in doc:
        body = doc["integrator"]
        if _check_keys(body, "integrator", (),
                       {"rel_tol", "abs_tol", "max_step", "t_end",
                        "sample_count"}, col):
            for key in ("rel_tol", "abs_tol", "max_step"):
                if key in body:
                    val = _as_number(body[key], f"integrator.{key}", col)
                    if val is not None:
                        settings_kw[key] = val
            if "sample_count" in body:
                sc_val = body["sample_count"]
                if not isinstance(sc_val, int) or isinstance(sc_val, bool):
                    col.error("integrator.sample_count", "expected an integer")
                else:
                    settings_kw["sample_count"] = sc_val
            if "t_end" in body:
                val = _as_number(body["t_end"], "integrator.t_end", col)
                if val is not None:
                    t_end = val
    col.raise_if_any()
    try:
        settings = IntegratorSettings(**settings_kw)
    except InvalidParameters as exc:
        raise SemanticError(f"InvalidParameters: {exc}") from exc
    if not t_end > 0.0:
        raise SemanticError("InvalidParameters: integrator.t_end must be positive")

    outputs = {"format": None, "path": None, "fields": None}
    if "outputs" in doc:
        body = doc["outputs"]
        if _check_keys(body, "outputs", (), {"format", "path", "fields"}, col):
            if "format" in body:
                if body["format"] not in ("csv", "jsonl"):
                    col.error("outputs.format", 'expected "csv" or "jsonl"')
                else:
                    outputs["format"] = body["format"]
            if "path" in body:
                outputs["path"] = str(body["path"])
            if "fields" in body:
                flds = body["fields"]
                if (not isinstance(flds, list)
                        or not all(isinstance(f, str) for f in flds)):
                    col.error("outputs.fields", "expected a list of field names")
                else:
                    outputs["fields"] = list(flds)

    generator = None
    if "generator" in doc:
        body = doc["generator"]
        if _check_keys(body, "generator", ("matrix",), {"side", "label"}, col):
            side = body.get("side", "left")
            if side not in ("left", "right"):
                col.error("generator.side", 'expected "left" or "right"')
            generator = {"matrix": _as_matrix(body["matrix"], n,
                                              "generator.matrix", col),
                         "side": side,
                         "label": str(body.get("label", "generator"))}

    generators = []
    if "generators" in doc:
        if not isinstance(doc["generators"], list):
            col.error("generators", "expected a list")
        else:
            for k, body in enumerate(doc["generators"]):
                path = f"generators[{k}]"
                if _check_keys(body, path, ("matrix",), {"side", "label"}, col):
                    side = body.get("side", "left")
                    if side not in ("left", "right"):
                        col.error(f"{path}.side", 'expected "left" or "right"')
                    generators.append(
                        {"matrix": _as_matrix(body["matrix"], n,
                                              f"{path}.matrix", col),
                         "side": side,
                         "label": str(body.get("label", f"generator-{k}"))})

    seed = None
    if "seed" in doc:
        if not isinstance(doc["seed"], int) or isinstance(doc["seed"], bool):
            col.error("seed", "expected an integer")
        else:
            seed = doc["seed"]

    checks = {}
    if "checks" in doc:
        body = doc["checks"]
        if not isinstance(body, dict):
            col.error("checks", "expected an object")
        else:
            for name, spec in body.items():
                if name not in _CHECK_SCHEMAS:
                    col.error(f"checks.{name}", "unknown check")
                    continue
                req, opt = _CHECK_SCHEMAS[name]
                if _check_keys(spec, f"checks.{name}", req, opt, col):
                    checks[name] = {key: _as_number(val, f"checks.{name}.{key}",
                                                    col)
                                    for key, val in spec.items()}
    col.raise_if_any()

    return Scenario(n=n, model=model, metrics=metrics, initial=initial,
                    potential=potential, settings=settings, t_end=t_end,
                    outputs=outputs, generator=generator,
                    generators=generators, seed=seed, checks=checks,
                    label=str(doc.get("label", "scenario")), raw=doc)


# ---------------------------------------------------------------------------
# initial states
# ---------------------------------------------------------------------------

def _reduced_only(model):
    return isinstance(model, UnitaryCompact)


def _full_initial(scenario, seed):
    """Full-chart phase state from the scenario's initial block."""
    init = scenario.initial
    model = scenario.model
    if _reduced_only(model):
        raise SemanticError(
            "SemanticUse: UnitaryCompact has no full-chart form; use a "
            "reduced initial state with the reduce or verify subcommands")
    if init["kind"] == "reduced":
        red = _reduced_initial(scenario)
        return reconstruct_state(red, scenario.metrics)
    if init["kind"] == "random_full":
        rng = np.random.default_rng(0 if seed is None else seed)
        n = scenario.n
        phi = np.eye(n)
        for _ in range(64):
            phi = np.eye(n) + init["spread"] * rng.standard_normal((n, n))
            if np.linalg.det(phi) > 0.05:
                break
        config = Configuration(phi=phi)
        sigma = init["mom_scale"] * rng.standard_normal((n, n))
        return FullPhaseState(config=config,
                              mom=Momenta.from_spatial(config, np.zeros(n),
                                                       sigma))
    config = Configuration(phi=init["phi0"], x=init["x0"])
    if "phi_dot" in init:
        vel = VelocityState(phi_dot=init["phi_dot"], v=init["v"])
        mom = model.legendre(config, vel, scenario.metrics)
    elif init["mom_chart"] == "Sigma":
        mom = Momenta.from_spatial(config, init["p"], init["mom_matrix"])
    else:
        mom = Momenta.from_comoving(config, init["p"], init["mom_matrix"])
    return FullPhaseState(config=config, mom=mom)


def _reduced_initial(scenario, seed=None):
    init = scenario.initial
    if init["kind"] == "reduced":
        return ReducedPhaseState(q=init["q"], p=init["p"], M=init["M"],
                                 N=init["N"], L=init["L"], R=init["R"])
    return reduce_state(_full_initial(scenario, seed), scenario.metrics)


# ---------------------------------------------------------------------------
# tables and figures
# ---------------------------------------------------------------------------

def _plain(value):
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def _fmt(value):
    value = _plain(value)
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _select_fields(header, rows, fields):
    if fields is None:
        return header, rows
    unknown = [f for f in fields if f not in header]
    if unknown:
        raise SchemaError(
            f"outputs.fields: unknown field(s) {', '.join(unknown)}; "
            f"available: {', '.join(header)}")
    idx = [header.index(f) for f in fields]
    return list(fields), [[row[i] for i in idx] for row in rows]


def _write_table(header, rows, fmt, out_path):
    if fmt == "jsonl":
        buf = io.StringIO()
        for row in rows:
            buf.write(json.dumps(dict(zip(header, map(_plain, row))),
                                 sort_keys=True))
            buf.write("\n")
        data = buf.getvalue()
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
        data = buf.getvalue()
    if out_path is None:
        sys.stdout.write(data)
    else:
        Path(out_path).write_text(data)


def _full_table(trajectory, n):
    chart = trajectory.chart
    mom_key = "Sigma" if chart == "spatial" else "Sigma_hat"
    header = (["t"]
              + [f"x_{i}" for i in range(n)]
              + [f"p_{i}" for i in range(n)]
              + [f"phi_{r}_{c}" for r in range(n) for c in range(n)]
              + [f"{mom_key}_{r}_{c}" for r in range(n) for c in range(n)]
              + [f"q_{i}" for i in range(n)]
              + ["H", "H_drift", "T", "potential", "C1", "C2",
                 "spin_norm", "vorticity_norm"])
    rec = trajectory.records
    h0 = rec["H"][0]
    rows = []
    for k, state in enumerate(trajectory.states):
        mom_mat = (state.mom.Sigma if chart == "spatial"
                   else state.mom.Sigma_hat)
        rows.append(
            [float(trajectory.times[k])]
            + [float(v) for v in state.config.x]
            + [float(v) for v in state.mom.p]
            + [float(v) for v in state.config.phi.ravel()]
            + [float(v) for v in mom_mat.ravel()]
            + [float(v) for v in rec["q"][k]]
            + [float(rec["H"][k]), abs(float(rec["H"][k] - h0)),
               float(rec["T"][k]), float(rec["potential"][k]),
               float(rec["C1"][k]), float(rec["C2"][k]),
               float(rec["spin_norm"][k]), float(rec["vorticity_norm"][k])])
    return header, rows


def _reduced_table(times, states, energies, n):
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    header = (["t"]
              + [f"q_{i}" for i in range(n)]
              + [f"p_{i}" for i in range(n)]
              + [f"M_{a}_{b}" for a, b in pairs]
              + [f"N_{a}_{b}" for a, b in pairs]
              + ["H", "H_drift", "c1", "c2", "spin_norm", "vorticity_norm"])
    rows = []
    h0 = energies[0]
    for k, state in enumerate(states):
        c1, c2 = reduced_casimirs(state)
        rows.append(
            [float(times[k])]
            + [float(v) for v in state.q]
            + [float(v) for v in state.p]
            + [float(state.M[a, b]) for a, b in pairs]
            + [float(state.N[a, b]) for a, b in pairs]
            + [float(energies[k]), abs(float(energies[k] - h0)), c1, c2,
               state.spin_norm, state.vorticity_norm])
    return header, rows


def _render_overview(plot_dir, stem, times, q_series, h_series, extra_series):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(2, 2, figsize=(9.5, 7.0))
    ax = axes[0, 0]
    for i in range(q_series.shape[1]):
        ax.plot(times, q_series[:, i], label=f"q{i}")
    ax.set_title("stretch logarithms")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    ax = axes[0, 1]
    ax.plot(times, q_series.max(axis=1) - q_series.min(axis=1))
    ax.set_title("stretch spread")
    ax.set_xlabel("t")
    ax = axes[1, 0]
    ax.semilogy(times, np.maximum(np.abs(h_series - h_series[0]), 1e-18))
    ax.set_title("|H - H(0)|")
    ax.set_xlabel("t")
    ax = axes[1, 1]
    for name, series in extra_series.items():
        ax.plot(times, series, label=name)
    ax.set_title("conserved candidates")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    fig.tight_layout()
    out = Path(plot_dir) / f"{stem}-report.png"
    Path(plot_dir).mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=110)
    plt.close(fig)
    return out


def _report(lines, data_on_stdout):
    stream = sys.stderr if data_on_stdout else sys.stdout
    for line in lines:
        stream.write(line + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_simulate(scenario, out_path, fmt, seed, plot_dir):
    state0 = _full_initial(scenario, seed)
    traj = integrate(scenario.model, scenario.potential, state0,
                     (0.0, scenario.t_end), settings=scenario.settings,
                     metrics=scenario.metrics)
    header, rows = _full_table(traj, scenario.n)
    header, rows = _select_fields(header, rows, scenario.outputs["fields"])
    _write_table(header, rows, fmt, out_path)
    report = monitor_invariants(scenario.model, traj)
    lines = [f"# invariant drift report ({scenario.label})"]
    for name in report.conserved:
        lines.append(f"conserved {name}: drift {report.drifts[name]:.3e}")
    for name, value in report.extras.items():
        lines.append(f"extra {name}: {value:.3e}")
    _report(lines, out_path is None)
    if plot_dir is not None:
        stem = Path(out_path).stem if out_path else scenario.label
        _render_overview(plot_dir, stem, traj.times, traj.records["q"],
                         traj.records["H"],
                         {"C1": traj.records["C1"], "C2": traj.records["C2"],
                          "spin": traj.records["spin_norm"],
                          "vorticity": traj.records["vorticity_norm"]})
    return 0


def _emit_companion_scenario(scenario, red0, out_path):
    doc = dict(scenario.raw)
    doc["label"] = scenario.label + "-reduced"
    doc["initial"] = {"reduced": {
        "q": red0.q.tolist(), "p": red0.p.tolist(),
        "M": red0.M.tolist(), "N": red0.N.tolist(),
        "L": red0.L.tolist(), "R": red0.R.tolist()}}
    outputs = dict(doc.get("outputs", {}))
    outputs.pop("path", None)
    if outputs:
        doc["outputs"] = outputs
    else:
        doc.pop("outputs", None)
    path = Path(out_path).with_name(Path(out_path).stem + "-scenario.json")
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _cmd_reduce(scenario, out_path, fmt, seed, plot_dir):
    model, pot = scenario.model, scenario.potential
    lines = [f"# reduction report ({scenario.label})"]
    if scenario.initial["kind"] == "reduced" or _reduced_only(model):
        red0 = _reduced_initial(scenario, seed)
        rtraj = integrate_reduced(model, pot, red0, (0.0, scenario.t_end),
                                  settings=scenario.settings)
        times, states = rtraj.times, rtraj.states
        energies = rtraj.records["H"]
        c2 = rtraj.records["c2"]
        if np.all(np.isfinite(c2)):
            lines.append(f"quadratic invariant drift: "
                         f"{np.max(np.abs(c2 - c2[0])):.3e}")
        c1 = rtraj.records["c1"]
        lines.append(f"linear invariant drift: {np.max(np.abs(c1 - c1[0])):.3e}")
    else:
        state0 = _full_initial(scenario, seed)
        traj = integrate(model, pot, state0, (0.0, scenario.t_end),
                         settings=scenario.settings, metrics=scenario.metrics)
        states = reduce_trajectory(traj)
        times = traj.times
        energies = [reduced_hamiltonian(model, pot, st) for st in states]
        dev = 0.0
        for st, full in zip(states, traj.states):
            exact = casimir_invariants(full.mom.Sigma, 2)[1]
            dev = max(dev, abs(reduced_casimirs(st)[1] - exact)
                      / max(1.0, abs(exact)))
        lines.append(f"quadratic invariant identity max relative deviation: "
                     f"{dev:.3e}")
    header, rows = _reduced_table(times, states, energies, scenario.n)
    header, rows = _select_fields(header, rows, scenario.outputs["fields"])
    _write_table(header, rows, fmt, out_path)
    if out_path is not None:
        companion = _emit_companion_scenario(scenario, states[0], out_path)
        lines.append(f"companion scenario: {companion}")
    _report(lines, out_path is None)
    if plot_dir is not None:
        stem = Path(out_path).stem if out_path else scenario.label
        q_series = np.asarray([st.q for st in states])
        _render_overview(plot_dir, stem, times, q_series,
                         np.asarray(energies, dtype=float),
                         {"spin": np.asarray([st.spin_norm for st in states]),
                          "vorticity": np.asarray([st.vorticity_norm
                                                   for st in states])})
    return 0


def _cmd_classify(scenario, out_path, fmt, seed, plot_dir):
    if scenario.generator is None:
        raise SchemaError("generator: required by the classify subcommand")
    verdict = classify_generator(scenario.generator["matrix"])
    max_real = float(np.max(np.abs(verdict.spectrum.real)))
    header = ["label", "side", "classification", "max_abs_real_part",
              "diag_condition"]
    rows = [[scenario.generator["label"], scenario.generator["side"],
             verdict.classification, max_real, float(verdict.diag_condition)]]
    header, rows = _select_fields(header, rows, scenario.outputs["fields"])
    _write_table(header, rows, fmt, out_path)
    _report([f"{scenario.generator['label']}: {verdict.classification}"],
            out_path is None)
    return 0


def _cmd_equilibria(scenario, out_path, fmt, seed, plot_dir):
    gens = (list(scenario.generators) if scenario.generators
            else ([scenario.generator] if scenario.generator is not None
                  else []))
    if not gens:
        raise SchemaError(
            "generators: at least one generator is required by the "
            "equilibria subcommand")
    if _reduced_only(scenario.model):
        raise SemanticError(
            "SemanticUse: UnitaryCompact has no full-chart geodesics")
    phi0 = _full_initial(scenario, seed).config.phi
    metrics = scenario.metrics
    header = ["label", "side", "metric_normal", "commutator_norm", "residual"]
    rows = []
    for gen in gens:
        curve = GeneratorCurve(phi0=phi0, gen=gen["matrix"], side=gen["side"])
        metric = metrics.eta if gen["side"] == "right" else metrics.g
        normal, comm = is_metric_normal(gen["matrix"], metric)
        residual = relative_equilibrium_residual(scenario.model, curve,
                                                 scenario.metrics)
        rows.append([gen["label"], gen["side"], normal, float(comm),
                     float(residual)])
    header, rows = _select_fields(header, rows, scenario.outputs["fields"])
    _write_table(header, rows, fmt, out_path)
    return 0


def _spread(q_series):
    return q_series.max(axis=1) - q_series.min(axis=1)


def _verify_checks(scenario, seed):
    """Run the scenario's invariant suite; yields (name, passed, detail)."""
    model, pot = scenario.model, scenario.potential
    checks = scenario.checks
    h_tol = checks.get("h_drift", {}).get("tol") or 1e-8
    c_tol = checks.get("conserved", {}).get("tol") or 1e-6
    cas_tol = checks.get("casimir", {}).get("tol") or 1e-9
    rt_tol = checks.get("roundtrip", {}).get("tol") or 1e-9
    results = []
    reduced_run = scenario.initial["kind"] == "reduced" or _reduced_only(model)

    if reduced_run:
        red0 = _reduced_initial(scenario, seed)
        rtraj = integrate_reduced(model, pot, red0, (0.0, scenario.t_end),
                                  settings=scenario.settings)
        h = rtraj.records["H"]
        drift = np.max(np.abs(h - h[0])) / max(1.0, abs(h[0]))
        results.append(("energy-drift", drift <= h_tol,
                        f"max relative |H - H(0)| = {drift:.3e} (tol {h_tol:g})"))
        c1 = rtraj.records["c1"]
        d1 = np.max(np.abs(c1 - c1[0])) / max(1.0, abs(c1[0]))
        results.append(("linear-invariant", d1 <= h_tol,
                        f"sum p drift = {d1:.3e} (tol {h_tol:g})"))
        c2 = rtraj.records["c2"]
        if np.all(np.isfinite(c2)):
            d2 = np.max(np.abs(c2 - c2[0])) / max(1.0, abs(c2[0]))
            results.append(("quadratic-invariant", d2 <= h_tol,
                            f"drift = {d2:.3e} (tol {h_tol:g})"))
        sn = rtraj.records["spin_norm"]
        vn = rtraj.records["vorticity_norm"]
        ds = max(np.max(np.abs(sn - sn[0])), np.max(np.abs(vn - vn[0])))
        results.append(("spin-vorticity-norms", ds <= c_tol,
                        f"max drift = {ds:.3e} (tol {c_tol:g})"))
        times, q_series = rtraj.times, rtraj.records["q"]
    else:
        state0 = _full_initial(scenario, seed)
        traj = integrate(model, pot, state0, (0.0, scenario.t_end),
                         settings=scenario.settings, metrics=scenario.metrics)
        report = monitor_invariants(model, traj)
        drift = report.drifts["H"]
        results.append(("energy-drift", drift <= h_tol,
                        f"max relative |H - H(0)| = {drift:.3e} (tol {h_tol:g})"))
        others = [name for name in report.conserved if name != "H"]
        if others:
            worst = max(report.drifts[name] for name in others)
            detail = ", ".join(f"{name} {report.drifts[name]:.2e}"
                               for name in others)
            results.append(("conserved-set", worst <= c_tol,
                            f"{detail} (tol {c_tol:g})"))
        sample = traj.states[:: max(1, len(traj.states) // 25)]
        hint = None
        dev = None
        rt_dev = None
        for st in sample:
            try:
                red = reduce_state(st, scenario.metrics, hint=hint)
            except (DegenerateSpectrum, CoincidentInvariants):
                continue
            hint = red
            c2 = reduced_casimirs(red)[1]
            exact = casimir_invariants(st.mom.Sigma, 2)[1]
            d = abs(c2 - exact) / max(1.0, abs(exact))
            dev = d if dev is None else max(dev, d)
            if rt_dev is None:
                try:
                    back = reconstruct_state(red, scenario.metrics)
                except CoincidentInvariants:
                    continue
                zeroed = Momenta.from_spatial(st.config, np.zeros(scenario.n),
                                              st.mom.Sigma)
                h_a = model.kinetic_hamiltonian(st.config, zeroed,
                                                scenario.metrics)
                h_b = model.kinetic_hamiltonian(back.config, back.mom,
                                                scenario.metrics)
                rt_dev = abs(h_a - h_b) / max(1.0, abs(h_a))
        if dev is None:
            results.append(("quadratic-invariant-identity", True,
                            "skipped: degenerate stretch spectrum throughout"))
        else:
            results.append(("quadratic-invariant-identity", dev <= cas_tol,
                            f"max relative deviation = {dev:.3e} "
                            f"(tol {cas_tol:g})"))
        if rt_dev is not None:
            results.append(("reduction-round-trip", rt_dev <= rt_tol,
                            f"internal H deviation = {rt_dev:.3e} "
                            f"(tol {rt_tol:g})"))
        times, q_series = traj.times, traj.records["q"]

    if "bounded_spread" in checks:
        cap = checks["bounded_spread"]["max"]
        spread = _spread(q_series)
        results.append(("bounded-stretch-spread",
                        bool(np.max(spread) <= cap),
                        f"sup spread = {np.max(spread):.4f} over "
                        f"[0, {scenario.t_end:g}] (cap {cap:g})"))
    if "monotone_growth" in checks:
        ratio = checks["monotone_growth"].get("ratio") or 3.0
        spread = _spread(q_series)
        early = spread[: max(2, len(spread) // 10)]
        grew = spread[-1] > ratio * max(early[-1], 1e-12)
        coarse = spread[:: max(1, len(spread) // 20)]
        monotone = bool(np.all(np.diff(coarse) > -1e-9 * max(1.0, spread[-1])))
        results.append(("monotone-stretch-growth", grew and monotone,
                        f"spread {early[-1]:.4f} -> {spread[-1]:.4f} "
                        f"(ratio needed {ratio:g}, monotone {monotone})"))
    if "sutherland" in checks:
        from scipy.integrate import solve_ivp

        coupling = checks["sutherland"]["coupling"]
        tol = checks["sutherland"].get("tol") or 1e-6
        red0 = _reduced_initial(scenario, seed)
        rtraj = integrate_reduced(model, pot, red0, (0.0, scenario.t_end),
                                  settings=scenario.settings,
                                  freeze_spin=True)

        def oracle(t, y):
            dq, dp = sutherland_oracle_rhs(y[:scenario.n], y[scenario.n:],
                                           coupling)
            return np.concatenate([dq, dp])

        sol = solve_ivp(oracle, (0.0, scenario.t_end),
                        np.concatenate([red0.q, red0.p]), t_eval=rtraj.times,
                        rtol=1e-11, atol=1e-13, method="DOP853")
        dev = max(np.max(np.abs(rtraj.records["q"] - sol.y[:scenario.n].T)),
                  np.max(np.abs(rtraj.records["p"] - sol.y[scenario.n:].T)))
        results.append(("sutherland-oracle", dev <= tol,
                        f"oracle deviation = {dev:.3e} (tol {tol:g})"))
    return results


def _cmd_verify(scenario, out_path, fmt, seed, plot_dir):
    results = _verify_checks(scenario, seed)
    lines = [f"# verification report ({scenario.label})"]
    for name, passed, detail in results:
        lines.append(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    failed = sum(0 if passed else 1 for _, passed, _ in results)
    lines.append(f"# {len(results) - failed}/{len(results)} checks passed")
    sys.stdout.write("\n".join(lines) + "\n")
    if out_path is not None:
        header = ["check", "passed", "detail"]
        rows = [[name, passed, detail] for name, passed, detail in results]
        _write_table(header, rows, fmt, out_path)
    return 3 if failed else 0


_SUBCOMMANDS = {
    "simulate": _cmd_simulate,
    "reduce": _cmd_reduce,
    "classify": _cmd_classify,
    "equilibria": _cmd_equilibria,
    "verify": _cmd_verify,
}


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------

def bundled_scenario_path(name):
    """Filesystem path of a packaged example scenario (without extension)."""
    from importlib.resources import files

    return Path(str(files("afftop").joinpath("scenarios", f"{name}.json")))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise SchemaError(f"usage: {message}")


def _build_parser():
    parser = _Parser(prog="afftop",
                     description="Affinely-rigid body dynamics toolkit")
    parser.add_argument("subcommand", choices=sorted(_SUBCOMMANDS))
    parser.add_argument("--config", required=True, action="append",
                        help="scenario JSON path; repeat to fan out")
    parser.add_argument("--output", default=None,
                        help="output path (directory when several configs)")
    parser.add_argument("--format", default=None, choices=["csv", "jsonl"])
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker count for multiple configs")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the scenario seed")
    parser.add_argument("--plot-dir", default=None,
                        help="render overview figures into this directory")
    return parser


def _run_one(subcommand, config_path, out_path, fmt, seed, plot_dir):
    try:
        text = Path(config_path).read_text()
    except OSError as exc:
        sys.stderr.write(f"error: cannot read {config_path}: {exc}\n")
        return 1
    try:
        scenario = parse_scenario(text)
        if seed is None:
            seed = scenario.seed
        if out_path is None:
            out_path = scenario.outputs["path"]
        if fmt is None:
            fmt = scenario.outputs["format"] or "csv"
        return _SUBCOMMANDS[subcommand](scenario, out_path, fmt, seed,
                                        plot_dir)
    except _CONFIG_ERRORS as exc:
        sys.stderr.write(f"error: {config_path}: {exc}\n")
        return 1
    except _NUMERICAL_ERRORS as exc:
        sys.stderr.write(
            f"error: {config_path}: {type(exc).__name__}: {exc}\n")
        return 2


def run_cli(argv=None):
    """Parse arguments and dispatch; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SchemaError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    if args.jobs < 1:
        sys.stderr.write("error: --jobs must be at least 1\n")
        return 1
    configs = args.config
    ext = "jsonl" if args.format == "jsonl" else "csv"
    if len(configs) == 1:
        return _run_one(args.subcommand, configs[0], args.output, args.format,
                        args.seed, args.plot_dir)
    if args.output is None:
        sys.stderr.write("error: --output directory required with several "
                         "configs\n")
        return 1
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(args.subcommand, path,
              str(out_dir / f"{Path(path).stem}.{ext}"), args.format,
              args.seed, args.plot_dir)
             for path in configs]
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        codes = list(pool.map(lambda t: _run_one(*t), tasks))
    return max(codes)


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
