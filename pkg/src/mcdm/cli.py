"""Command-line interface.

    mcdm --data survey.csv --config model.yaml --command fit --out results/

Commands: ``fit``, ``select``, ``bootstrap``, ``predict``. Reports go to
standard output as aligned text and, with ``--out``, to CSV files.
See README.md for the configuration schema.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from .design import (
    DesignSet,
    PredictorEncoding,
    ProfileCoding,
    TermSet,
    encode_predictors,
    treatment_design,
)
from .errors import MCDMError, ParseError, UnknownLabel
from .fitter import FitOptions, FitResult, fit
from .interpret import coefficient_table, intercept_associations, predict
from .selection import (
    ModelSpec,
    SelectionData,
    StepwiseOptions,
    bootstrap,
    selection_report,
    stepwise,
)

log = logging.getLogger("mcdm")

CSV_FMT = "{:.12g}"


# ingestion ------------------------------------------------------------------


@dataclass
class Table:
    header: list
    rows: list
    lines: list  # source line number of each row

    def column(self, name: str) -> list:
        if name not in self.header:
            raise ParseError(f"column {name!r} not found in data header", line=1)
        j = self.header.index(name)
        return [row[j] for row in self.rows]


def read_table(path) -> Table:
    """Parse a delimited text file with a header; rejects ragged rows and empty cells."""
    path = Path(path)
    text = path.read_text()
    try:
        dialect = csv.Sniffer().sniff(text.splitlines()[0], delimiters=",;\t")
    except (csv.Error, IndexError):
        dialect = csv.excel
    reader = csv.reader(io.StringIO(text), dialect)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError(f"{path} is empty", line=1) from None
    if len(set(header)) != len(header):
        raise ParseError("duplicate column names in header", line=1)
    rows, lines = [], []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", line=line)
        for name, cell in zip(header, row):
            if not cell.strip():
                raise ParseError("missing value", line=line, column=name)
        rows.append([c.strip() for c in row])
        lines.append(line)
    if len(rows) < 2:
        raise ParseError(f"{path} needs at least two data rows")
    return Table(header, rows, lines)


@dataclass
class ModelConfig:
    mode: str
    responses: list  # profile mode: dicts with column/low/high/name
    response: str | None
    z_terms: TermSet | None
    w_terms: TermSet | None
    z_matrix: str | None
    w_matrix: str | None
    predictors: dict  # name -> directive
    forced: list
    S: int
    fit: dict
    select: dict
    base_dir: Path


def _label(value, where):
    if isinstance(value, bool) or value is None:
        raise ParseError(f"{where}: quote response labels in the config (YAML reads yes/no as booleans)")
    return str(value)


def _terms(cfg, key, R):
    if f"{key}_terms" in cfg:
        raw = cfg[f"{key}_terms"]
        if isinstance(raw, str):
            raw = [t for t in raw.replace(",", " ").split()]
        return TermSet(raw)
    if f"{key}_order" in cfg:
        return TermSet.up_to_order(R, int(cfg[f"{key}_order"]))
    return None


def load_config(path) -> ModelConfig:
    path = Path(path)
    try:
        cfg = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ParseError(f"config is not valid YAML: {exc}") from None
    if not isinstance(cfg, dict):
        raise ParseError("config must be a mapping")
    mode = cfg.get("mode", "profile")
    if mode not in ("profile", "category"):
        raise ParseError(f"mode must be 'profile' or 'category', got {mode!r}")
    responses, response = [], None
    z_terms = w_terms = None
    if mode == "profile":
        raw = cfg.get("responses")
        if not raw:
            raise ParseError("profile mode needs a 'responses' list")
        for j, r in enumerate(raw):
            if not isinstance(r, dict) or "column" not in r or "high" not in r or "low" not in r:
                raise ParseError(f"responses[{j}] needs column, low and high")
            responses.append(
                {
                    "column": str(r["column"]),
                    "low": _label(r["low"], f"responses[{j}].low"),
                    "high": _label(r["high"], f"responses[{j}].high"),
                    "name": str(r.get("name", r["column"])),
                }
            )
        R = len(responses)
        z_terms = _terms(cfg, "z", R)
        w_terms = _terms(cfg, "w", R)
        if z_terms is None:
            z_terms = TermSet.up_to_order(R, 1)
        if w_terms is None:
            w_terms = TermSet.saturated(R)
    else:
        if "response" not in cfg:
            raise ParseError("category mode needs a 'response' column")
        response = str(cfg["response"])
    predictors, forced = {}, []
    for name, spec in (cfg.get("predictors") or {}).items():
        if isinstance(spec, str):
            predictors[str(name)] = spec
        elif isinstance(spec, dict):
            predictors[str(name)] = str(spec.get("transform", "passthrough"))
            if spec.get("forced"):
                forced.append(str(name))
        else:
            raise ParseError(f"predictor {name!r}: expected a directive or a mapping")
    fit_cfg = dict(cfg.get("fit") or {})
    return ModelConfig(
        mode=mode,
        responses=responses,
        response=response,
        z_terms=z_terms,
        w_terms=w_terms,
        z_matrix=cfg.get("z_matrix"),
        w_matrix=cfg.get("w_matrix"),
        predictors=predictors,
        forced=forced,
        S=int(cfg.get("dimension", 1)),
        fit=fit_cfg,
        select=dict(cfg.get("select") or {}),
        base_dir=path.parent,
    )


def fit_options(config: ModelConfig, trace=False, stream=None) -> FitOptions:
    f = config.fit
    return FitOptions(
        max_iterations=int(f.get("max_iterations", 10000)),
        tolerance=float(f.get("tolerance", 1e-8)),
        update_scheme=str(f.get("scheme", "joint-gsvd")),
        curvature=float(f.get("curvature", 0.5)),
        trace=trace,
        trace_stream=stream,
    )


def _columns(table: Table, names):
    return {name: table.column(name) for name in names}


def _encode(table: Table, config) -> PredictorEncoding:
    cols = _columns(table, list(config.predictors))
    for name, directive in config.predictors.items():
        if directive.startswith("indicator:"):
            continue
        for i, v in enumerate(cols[name]):
            try:
                float(v)
            except ValueError:
                raise ParseError(
                    f"non-numeric predictor value {v!r}", line=table.lines[i], column=name
                ) from None
    return encode_predictors(cols, config.predictors)


def _read_category_matrix(path, labels, base_dir, what) -> tuple[np.ndarray, list]:
    table = read_table(Path(base_dir) / path)
    header, rows = table.header, table.rows
    if "category" not in header:
        raise ParseError(f"{what} matrix file needs a 'category' column", line=1)
    j = header.index("category")
    by_label = {row[j]: row for row in rows}
    missing = [lab for lab in labels if lab not in by_label]
    if missing:
        raise UnknownLabel(f"{what} matrix lacks rows for categories {missing}")
    value_cols = [c for c in range(len(header)) if c != j]
    M = np.empty((len(labels), len(value_cols)))
    for a, lab in enumerate(labels):
        for b, c in enumerate(value_cols):
            try:
                M[a, b] = float(by_label[lab][c])
            except ValueError:
                raise ParseError(f"non-numeric entry in {what} matrix", column=header[c]) from None
    return M, [header[c] for c in value_cols]


@dataclass
class Ingested:
    G: np.ndarray
    design: DesignSet
    coding: ProfileCoding | None
    encoding: PredictorEncoding
    category_labels: list | None = None


def ingest(data_path, config: ModelConfig) -> Ingested:
    """Read the data file and build G plus the design matrices."""
    table = read_table(data_path)
    rows = table.rows
    enc = _encode(table, config)
    if config.mode == "profile":
        names = [r["column"] for r in config.responses]
        cols = _columns(table, names)
        coding = ProfileCoding(
            R=len(config.responses),
            names=tuple(r["name"] for r in config.responses),
            levels=tuple((r["low"], r["high"]) for r in config.responses),
        )
        idx = np.zeros(len(rows), dtype=int)
        for r, resp in enumerate(config.responses):
            for i, v in enumerate(cols[resp["column"]]):
                if v == resp["high"]:
                    bit = 1
                elif v == resp["low"]:
                    bit = 0
                else:
                    raise UnknownLabel(
                        f"unknown label {v!r} (expected {resp['low']!r} or {resp['high']!r})",
                        line=table.lines[i],
                        column=resp["column"],
                    )
                idx[i] = 2 * idx[i] + bit
        G = np.zeros((len(rows), coding.K))
        G[np.arange(len(rows)), idx] = 1.0
        design = DesignSet.for_profiles(enc.X, coding, config.z_terms, config.w_terms, enc.labels)
        return Ingested(G, design, coding, enc)

    values = table.column(config.response)
    labels = sorted(set(values))
    if len(labels) < 2:
        raise ParseError("the response needs at least two distinct categories")
    pos = {lab: k for k, lab in enumerate(labels)}
    G = np.zeros((len(rows), len(labels)))
    G[np.arange(len(rows)), [pos[v] for v in values]] = 1.0
    K = len(labels)
    if config.z_matrix:
        Z, z_labels = _read_category_matrix(config.z_matrix, labels, config.base_dir, "Z")
    else:
        Z, z_labels = treatment_design(K), [f"[{lab}]" for lab in labels[1:]]
    if config.w_matrix:
        W, w_labels = _read_category_matrix(config.w_matrix, labels, config.base_dir, "W")
    else:
        W, w_labels = treatment_design(K), [f"[{lab}]" for lab in labels[1:]]
    design = DesignSet(X=enc.X, Z=Z, W=W, x_labels=enc.labels, z_labels=z_labels, w_labels=w_labels)
    return Ingested(G, design, None, enc, labels)


# reports --------------------------------------------------------------------


def _fmt_csv(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(v)
    if isinstance(v, (float, np.floating)):
        return CSV_FMT.format(float(v))
    return str(v)


def write_csv(path: Path, rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in rows:
            w.writerow([_fmt_csv(v) for v in row])


def aligned(rows: list[list], digits: int = 2) -> str:
    def cell(v):
        if isinstance(v, (bool, np.bool_)):
            return "*" if v else ""
        if isinstance(v, (float, np.floating)):
            return "-" if not np.isfinite(v) else f"{v:.{digits}f}"
        return str(v)

    cells = [[cell(v) for v in row] for row in rows]
    widths = [max(len(r[j]) for r in cells) for j in range(len(cells[0]))]
    lines = []
    for r in cells:
        lines.append("  ".join(c.ljust(w) if j == 0 else c.rjust(w) for j, (c, w) in enumerate(zip(r, widths))))
    return "\n".join(lines)


def _fit_summary(res: FitResult) -> list[list]:
    return [
        ["quantity", "value"],
        ["deviance", res.deviance],
        ["npar", res.npar],
        ["AIC", res.aic],
        ["S", res.S],
        ["iterations", res.iterations],
        ["converged", bool(res.converged)],
        ["scheme", res.scheme],
    ]


def _coefficient_rows(res: FitResult, ing: Ingested) -> list[list]:
    if ing.coding is not None:
        return coefficient_table(res, ing.coding).to_rows()
    d = res.design
    A = res.params.implied() if res.S else np.zeros((d.P, d.Q))
    rows = [["term"] + list(d.z_labels)]
    for label, row in zip(d.x_labels, A):
        rows.append([label] + [float(v) for v in row])
    return rows


def report_fit(res: FitResult, ing: Ingested, out: Path | None) -> str:
    parts = []
    summary = _fit_summary(res)
    parts.append(aligned([[k, v] for k, v in summary[1:]], digits=2))
    coef = _coefficient_rows(res, ing)
    text_rows = [coef[0]] + [r for r in coef[1:] if r[0] != "kind"]
    parts.append("\nImplied coefficients (first row: intercept contrasts)" if ing.coding else "\nImplied coefficients")
    parts.append(aligned(text_rows, digits=2))
    intercept_rows = [["intercept", "value"]] + [[lab, float(v)] for lab, v in zip(res.design.w_labels, res.params.b_w)]
    parts.append("\nIntercept weights (b_w)")
    parts.append(aligned(intercept_rows, digits=3))
    assoc_rows = None
    if ing.coding is not None:
        assoc = intercept_associations(res, ing.coding)
        if assoc:
            assoc_rows = [["pair", "log_odds_ratio", "in_W"]] + [[a.label, a.value, a.in_w] for a in assoc]
            parts.append("\nAssociations not modelled by predictors (log odds ratio at x = 0)")
            parts.append(aligned([[r[0], r[1]] for r in assoc_rows], digits=2))
    if out is not None:
        write_csv(out / "fit.csv", summary)
        write_csv(out / "coefficients.csv", coef)
        write_csv(out / "intercepts.csv", intercept_rows)
        if assoc_rows:
            write_csv(out / "intercept_associations.csv", assoc_rows)
    return "\n".join(parts)


def _spec_from(ing: Ingested, config: ModelConfig) -> ModelSpec:
    return ModelSpec(
        S=config.S,
        z_terms=config.z_terms,
        w_terms=config.w_terms,
        x_columns=tuple(ing.encoding.labels),
    )


def run_select(ing: Ingested, config: ModelConfig, opts: FitOptions, out: Path | None) -> str:
    sel = config.select
    data = SelectionData(
        G=ing.G,
        X=ing.design.X,
        x_labels=list(ing.encoding.labels),
        coding=ing.coding,
        Z=None if ing.coding else ing.design.Z,
        W=None if ing.coding else ing.design.W,
    )
    sopts = StepwiseOptions(
        fit_options=opts,
        steps=tuple(sel.get("steps", StepwiseOptions.steps)),
        dimensions=sel.get("dimensions"),
        forced=tuple(config.forced),
        n_jobs=int(sel.get("n_jobs", 1)),
    )
    steps, final = stepwise(ing.G, data, _spec_from(ing, config), sopts)
    records = selection_report(steps, ing.coding)
    cols = ["step", "S", "Z", "X", "W", "deviance", "npar", "aic", "chosen"]
    rows = [cols] + [[r[c] for c in cols] for r in records]
    text = aligned(rows, digits=1)
    summary = final.summary(ing.coding.R if ing.coding else None, ing.coding.names if ing.coding else None)
    text += "\n\nSelected: " + ", ".join(f"{k}={v}" for k, v in summary.items())
    if out is not None:
        write_csv(out / "selection.csv", [cols + ["error"]] + [[r[c] for c in cols + ["error"]] for r in records])
    return text


def run_bootstrap(ing, config, opts, out, B, level, seed) -> str:
    res = fit(ing.G, ing.design, config.S, opts)
    boot = bootstrap(
        ing.G,
        ing.design,
        config.S,
        B=B,
        alpha=1.0 - level,
        seed=seed,
        fit_options=replace(opts, trace=False, trace_stream=None),
        n_jobs=int(config.select.get("n_jobs", 1)),
        warm_start=res,
    )
    d = ing.design
    rows = [["parameter", "estimate", "lower", "upper"]]
    A = res.params.implied() if res.S else np.zeros((d.P, d.Q))
    for p, xl in enumerate(d.x_labels):
        for q, zl in enumerate(d.z_labels):
            rows.append([f"{xl}->{zl}", A[p, q], boot.implied_lower[p, q], boot.implied_upper[p, q]])
    for t, wl in enumerate(d.w_labels):
        rows.append([f"b_w[{wl}]", res.params.b_w[t], boot.b_w_lower[t], boot.b_w_upper[t]])
    header = (
        f"Percentile intervals at level {level:g} from B={B} case resamples "
        f"(seed {seed}; {boot.failures} failed replicates, fraction {boot.failure_fraction:.3f})"
    )
    if out is not None:
        write_csv(out / "bootstrap.csv", rows)
    return header + "\n" + aligned(rows, digits=3)


def run_predict(ing, config, opts, out, newdata) -> str:
    res = fit(ing.G, ing.design, config.S, opts)
    if newdata is not None:
        cols = _columns(read_table(newdata), ing.encoding.labels)
        X = ing.encoding.transform(cols)
    else:
        X = ing.design.X
    pred = predict(res, X, ing.coding)
    if ing.coding is not None:
        prof_labels = [ing.coding.profile_label(k) for k in range(ing.coding.K)]
        head = ["row"] + [f"P({lab})" for lab in prof_labels] + [f"P({n}={lv[1]})" for n, lv in zip(ing.coding.names, ing.coding.levels)]
        body = [[i + 1] + list(p) + list(m) for i, (p, m) in enumerate(zip(pred.profile_probabilities, pred.marginal_response_probabilities))]
    else:
        head = ["row"] + [f"P({lab})" for lab in ing.category_labels]
        body = [[i + 1] + list(p) for i, p in enumerate(pred.profile_probabilities)]
    if out is not None:
        write_csv(out / "predictions.csv", [head] + body)
    return aligned([head] + body, digits=4)


# entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcdm", description="Fit multinomial canonical decomposition models.")
    p.add_argument("--data", required=True, help="delimited data file with a header row")
    p.add_argument("--config", required=True, help="YAML model configuration")
    p.add_argument("--out", help="directory for CSV reports")
    p.add_argument("--command", choices=["fit", "select", "bootstrap", "predict"], default="fit")
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p.add_argument("--replicates", type=int, default=1000, help="bootstrap replicates")
    p.add_argument("--level", type=float, default=0.95, help="confidence level of bootstrap intervals")
    p.add_argument("--trace", action="store_true", help="write iteration<TAB>deviance lines to stderr")
    p.add_argument("--newdata", help="predictor rows to predict (default: the fitted data)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    out = Path(args.out) if args.out else None
    trace_lines = io.StringIO() if args.trace and out is not None else None
    try:
        config = load_config(args.config)
        ing = ingest(args.data, config)
        stream = sys.stderr
        if trace_lines is not None:
            stream = _Tee(sys.stderr, trace_lines)
        opts = fit_options(config, trace=args.trace, stream=stream)
        if args.command == "fit":
            res = fit(ing.G, ing.design, config.S, opts)
            text = report_fit(res, ing, out)
        elif args.command == "select":
            text = run_select(ing, config, replace(opts, trace=False, trace_stream=None), out)
        elif args.command == "bootstrap":
            if not 0 < args.level < 1:
                raise MCDMError(f"--level must lie in (0, 1), got {args.level}")
            text = run_bootstrap(ing, config, opts, out, args.replicates, args.level, args.seed)
        else:
            text = run_predict(ing, config, opts, out, args.newdata)
        if trace_lines is not None:
            out.mkdir(parents=True, exist_ok=True)
            (out / "trace.tsv").write_text(trace_lines.getvalue())
    except (MCDMError, OSError, ValueError) as exc:
        print(f"mcdm: error: {exc}", file=sys.stderr)
        return 1
    print(text)
    return 0


class _Tee:
    def __init__(self, *streams):
        self.streams = streams

    def write(self, s):
        for st in self.streams:
            st.write(s)

    def flush(self):
        for st in self.streams:
            st.flush()


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
