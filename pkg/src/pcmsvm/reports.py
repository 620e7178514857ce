"""Structured text reports: human-diffable key-value headers plus tab
separated tables, schema-versioned, with full-precision (round-trip) floats.

A fit report serializes everything needed to reload the fitted model:
kernel and calibration parameters per ensemble member with their support
rows, or the logistic coefficients; latency coefficients and baseline
steps; per-subject diagnostics; the convergence trace; a config echo.
"""

from __future__ import annotations

import numpy as np

from . import svm
from .cox import BaselineSurvival, LatencyModel
from .em import EmConfig, EmState, IncidenceModel, LogitParams, PcmFit
from .exceptions import InputError

FORMAT_NAME = "pcmsvm-report"
FORMAT_VERSION = 1


def _fmt(value):
    """Full-precision scalar text; floats use repr (shortest round-trip)."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _fmt_row(values):
    return "\t".join(_fmt(v) for v in values)


class ReportWriter:
    def __init__(self, kind):
        self.lines = [f"{FORMAT_NAME} v{FORMAT_VERSION}", f"kind: {kind}"]

    def kv(self, key, value):
        self.lines.append(f"{key}: {_fmt(value)}")

    def section(self, name):
        self.lines.append("")
        self.lines.append(f"[{name}]")

    def table(self, header, rows):
        self.lines.append("\t".join(header))
        for row in rows:
            self.lines.append(_fmt_row(row))

    def text(self):
        return "\n".join(self.lines) + "\n"


class ParsedReport:
    """Sections as ordered dicts of key-value pairs plus row lists."""

    def __init__(self, kind, header, sections):
        self.kind = kind
        self.header = header          # top-level key-values
        self.sections = sections      # name -> (kv dict, rows list)

    def kv(self, key, section=None):
        src = self.header if section is None else self.sections[section][0]
        return src[key]

    def rows(self, section):
        return self.sections[section][1]


def parse_report(text):
    lines = text.splitlines()
    if not lines or not lines[0].startswith(FORMAT_NAME):
        raise InputError("not a recognized report file")
    version = lines[0].split("v")[-1]
    if int(version) != FORMAT_VERSION:
        raise InputError(f"unsupported report version {version}")
    header = {}
    sections = {}
    current_kv, current_rows = header, None
    for raw in lines[1:]:
        line = raw.rstrip("\n")
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1]
            current_kv, current_rows = {}, []
            sections[name] = (current_kv, current_rows)
            continue
        if "\t" in line or current_kv is not header and ":" not in line:
            if current_rows is None:
                raise InputError(f"table row outside a section: {line!r}")
            current_rows.append(line.split("\t"))
            continue
        key, _, value = line.partition(":")
        current_kv[key.strip()] = value.strip()
    kind = header.pop("kind", None)
    if kind is None:
        raise InputError("report is missing its kind line")
    return ParsedReport(kind=kind, header=header, sections=sections)


def _parse_bool(s):
    return s == "true"


# ---------------------------------------------------------------------------
# fit reports
# ---------------------------------------------------------------------------


def _write_config(w, config):
    w.section("config")
    if config.kernel is not None:
        w.kv("kernel_gamma", config.kernel.gamma)
        w.kv("kernel_cost", config.kernel.cost)
    if config.gamma_grid is not None:
        w.kv("gamma_grid", ",".join(repr(float(g)) for g in config.gamma_grid))
    if config.cost_grid is not None:
        w.kv("cost_grid", ",".join(repr(float(c)) for c in config.cost_grid))
    w.kv("cv_folds", config.cv_folds)
    w.kv("m", config.m)
    w.kv("eps", config.eps)
    w.kv("max_iter", config.max_iter)
    w.kv("seed", config.seed)
    w.kv("kkt_tol", config.kkt_tol)


def _read_config(parsed):
    kv = parsed.sections["config"][0]
    kernel = None
    if "kernel_gamma" in kv:
        kernel = svm.KernelSpec(gamma=float(kv["kernel_gamma"]),
                                cost=float(kv["kernel_cost"]))
    grids = {}
    for name in ("gamma_grid", "cost_grid"):
        grids[name] = (tuple(float(v) for v in kv[name].split(","))
                       if name in kv else None)
    return EmConfig(
        kernel=kernel,
        gamma_grid=grids["gamma_grid"],
        cost_grid=grids["cost_grid"],
        cv_folds=int(kv["cv_folds"]),
        m=int(kv["m"]),
        eps=float(kv["eps"]),
        max_iter=int(kv["max_iter"]),
        seed=int(kv["seed"]),
        kkt_tol=float(kv["kkt_tol"]),
    )


def write_fit_report(fit, standardizer=None, bootstrap=None):
    """Serialize a fit (and optional standardization/bootstrap blocks)."""
    w = ReportWriter("fit")
    w.kv("model", fit.model)
    w.kv("converged", fit.converged)
    w.kv("iterations", fit.diagnostics.iteration)
    _write_config(w, fit.config)

    if standardizer is not None:
        w.section("standardize")
        w.kv("x_mean", ",".join(repr(float(v)) for v in standardizer["x_mean"]))
        w.kv("x_sd", ",".join(repr(float(v)) for v in standardizer["x_sd"]))
        w.kv("z_mean", ",".join(repr(float(v)) for v in standardizer["z_mean"]))
        w.kv("z_sd", ",".join(repr(float(v)) for v in standardizer["z_sd"]))

    if fit.model == "pcm-svm":
        for k, (model, cal) in enumerate(fit.incidence.members):
            w.section(f"incidence_member {k}")
            w.kv("gamma", model.kernel.gamma)
            w.kv("cost", model.kernel.cost)
            w.kv("threshold", model.threshold)
            w.kv("platt_slope", cal.slope)
            w.kv("platt_intercept", cal.intercept)
            p = model.support_points.shape[1]
            header = ["dual_coef", "label"] + [f"x{j + 1}" for j in range(p)]
            rows = [
                [model.dual_coefs[i], int(model.labels[i])] + list(model.support_points[i])
                for i in range(len(model.dual_coefs))
            ]
            w.table(header, rows)
    else:
        w.section("incidence_logit")
        w.kv("gamma", ",".join(repr(float(v)) for v in fit.incidence.gamma))

    w.section("latency")
    w.kv("beta", ",".join(repr(float(v)) for v in fit.latency.beta))
    base = fit.latency.baseline
    w.table(["event_time", "baseline_survival"],
            [[base.event_times[j], base.survival_values[j]]
             for j in range(len(base.event_times))])

    w.section("subjects")
    d = fit.diagnostics
    w.table(["pi_hat", "uncured_weight", "risk_count"],
            [[d.pi[i], d.w[i], d.n_expect[i]] for i in range(len(d.pi))])

    w.section("trace")
    w.table(["iteration", "norm_sq"],
            [[s + 1, v] for s, v in enumerate(fit.trace)])

    if bootstrap is not None:
        w.section("bootstrap")
        w.kv("replicates_requested", bootstrap.n_success + bootstrap.n_failed)
        w.kv("replicates_succeeded", bootstrap.n_success)
        w.kv("replicates_failed", bootstrap.n_failed)
        w.kv("beta_se", ",".join(repr(float(v)) for v in bootstrap.beta_se))
    return w.text()


def read_fit_report(text):
    """Reconstruct a usable fit (incidence + latency + diagnostics) from a
    fit report; returns (fit, standardizer_or_None)."""
    parsed = parse_report(text)
    if parsed.kind != "fit":
        raise InputError(f"expected a fit report, got kind {parsed.kind!r}")
    model_name = parsed.header["model"]
    config = _read_config(parsed)

    if model_name == "pcm-svm":
        members = []
        k = 0
        while f"incidence_member {k}" in parsed.sections:
            kv, rows = parsed.sections[f"incidence_member {k}"]
            data = np.array([[float(v) for v in row] for row in rows[1:]])
            member = svm.SvmModel(
                support_points=data[:, 2:],
                dual_coefs=data[:, 0],
                labels=data[:, 1],
                threshold=float(kv["threshold"]),
                kernel=svm.KernelSpec(gamma=float(kv["gamma"]), cost=float(kv["cost"])),
            )
            cal = svm.PlattCalibration(slope=float(kv["platt_slope"]),
                                       intercept=float(kv["platt_intercept"]))
            members.append((member, cal))
            k += 1
        if not members:
            raise InputError("fit report has no incidence members")
        incidence = IncidenceModel(members=members, m=len(members))
    else:
        kv = parsed.sections["incidence_logit"][0]
        incidence = LogitParams(gamma=np.array([float(v) for v in kv["gamma"].split(",")]))

    kv, rows = parsed.sections["latency"]
    beta = np.array([float(v) for v in kv["beta"].split(",")])
    base_rows = np.array([[float(v) for v in row] for row in rows[1:]])
    if len(base_rows) == 0:
        raise InputError("fit report has an empty baseline table")
    baseline = BaselineSurvival(event_times=base_rows[:, 0],
                                survival_values=base_rows[:, 1])
    latency = LatencyModel(beta=beta, baseline=baseline)

    subj = np.array([[float(v) for v in row]
                     for row in parsed.sections["subjects"][1][1:]])
    trace = [float(row[1]) for row in parsed.sections["trace"][1][1:]]
    diagnostics = EmState(
        pi=subj[:, 0], w=subj[:, 1], n_expect=subj[:, 2],
        latency=latency, iteration=int(parsed.header["iterations"]),
        param_vector=np.concatenate([subj[:, 0], beta, baseline.survival_values]),
    )
    fit = PcmFit(
        incidence=incidence, latency=latency, diagnostics=diagnostics,
        converged=_parse_bool(parsed.header["converged"]), trace=trace,
        config=config, model=model_name,
    )
    standardizer = None
    if "standardize" in parsed.sections:
        kv = parsed.sections["standardize"][0]
        standardizer = {
            key: np.array([float(v) for v in kv[key].split(",")])
            for key in ("x_mean", "x_sd", "z_mean", "z_sd")
        }
    return fit, standardizer


# ---------------------------------------------------------------------------
# study and evaluation reports
# ---------------------------------------------------------------------------


def write_study_report(result):
    w = ReportWriter("mc-study")
    cfg = result.config
    w.kv("method", cfg.method)
    w.kv("n", cfg.n)
    w.kv("runs", cfg.runs)
    w.kv("runs_used", result.runs_used)
    w.kv("failures", result.failures)
    w.kv("seed", cfg.seed)
    w.kv("m", cfg.m)
    w.kv("eps", cfg.eps)
    w.kv("max_iter", cfg.max_iter)
    w.kv("cv_folds", cfg.cv_folds)
    w.kv("gamma_grid", ",".join(repr(float(g)) for g in cfg.gamma_grid))
    w.kv("cost_grid", ",".join(repr(float(c)) for c in cfg.cost_grid))
    for model_name, cells in result.summary.items():
        w.section(f"model {model_name}")
        rows = []
        for quantity, stats in cells.items():
            if isinstance(stats, dict):
                rows.append([quantity, stats["bias"], stats["mse"]])
        w.table(["quantity", "bias", "mse"], rows)
        for key in ("ca_test", "ca_train", "auc_train", "auc_test"):
            if key in cells:
                w.kv(key, cells[key])
    return w.text()


def write_evaluate_report(metrics):
    w = ReportWriter("evaluate")
    for key, value in metrics.items():
        w.kv(key, value)
    return w.text()


def write_roc_tsv(curve):
    """Plot-ready two-column TSV for a ROC curve."""
    lines = ["fpr\ttpr"]
    for f, t in zip(curve.fpr, curve.tpr):
        lines.append(f"{_fmt(float(f))}\t{_fmt(float(t))}")
    return "\n".join(lines) + "\n"
