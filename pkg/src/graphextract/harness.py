"""Experiment harness: the target/surrogate grid, budget / defense /
hyperparameter sweeps, and report emission.

Every run derives all of its randomness from the run seed plus the cell
identity, so a seed list reproduces a report exactly (wall-clock timings
aside).  Trained targets are cached per (dataset, kind, split seed) and
shared across cells.  Cell failures are recorded without aborting a grid.
"""

from __future__ import annotations

import csv
import time
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from graphextract.attack import SCENARIO_RESPONSE, AttackConfig, run_attack
from graphextract.graphs import Graph, SplitSpec, split_inductive
from graphextract.metrics import accuracy, fidelity, pearson
from graphextract.nn.models import build_model, target_config
from graphextract.nn.train import TrainConfig, train_model
from graphextract.oracle import Oracle, OracleConfig
from graphextract.structure import StructureLearnConfig
from graphextract.tsne import TsneConfig

RESULTS_COLUMNS = ("dataset", "scenario", "response", "target_kind",
                   "surrogate_kind", "seed", "target_acc", "surrogate_acc",
                   "fidelity", "queries_used", "wall_seconds")
AGGREGATE_COLUMNS = ("dataset", "scenario", "response", "target_kind",
                     "surrogate_kind", "acc_mean", "acc_std", "fid_mean",
                     "fid_std", "pearson_r")


def derive_seed(base, *tags) -> int:
    """Deterministic sub-seed from a base seed and string tags."""
    h = zlib.crc32(("|".join(str(t) for t in tags)).encode())
    return (int(base) * 1000003 + h) % (2 ** 31 - 1)


@dataclass
class RunRecord:
    dataset: str
    scenario: str
    response: str
    target_kind: str
    surrogate_kind: str
    seed: int
    target_acc: float = float("nan")
    surrogate_acc: float = float("nan")
    fidelity: float = float("nan")
    queries_used: int = 0
    wall_seconds: float = 0.0
    error: str = ""
    sweep_axis: str = ""
    sweep_value: float = float("nan")

    def row(self):
        return [self.dataset, self.scenario, self.response, self.target_kind,
                self.surrogate_kind, self.seed, repr(self.target_acc),
                repr(self.surrogate_acc), repr(self.fidelity),
                self.queries_used, "%.3f" % self.wall_seconds]


def mean_std(values):
    """Two quantities the aggregates report: mean and population std."""
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std())


@dataclass
class MetricsReport:
    records: list = field(default_factory=list)
    repetitions: int = 5

    @property
    def partial(self):
        return any(r.error for r in self.records)

    def ok_records(self):
        return [r for r in self.records if not r.error]

    def cells(self):
        keys = []
        for r in self.ok_records():
            k = (r.dataset, r.scenario, r.response, r.target_kind, r.surrogate_kind)
            if k not in keys:
                keys.append(k)
        return keys

    def pearson_by_target(self) -> dict:
        """Pooled accuracy-fidelity correlation per target kind."""
        out = {}
        for kind in sorted({r.target_kind for r in self.ok_records()}):
            rs = [r for r in self.ok_records() if r.target_kind == kind]
            xs = [r.surrogate_acc for r in rs]
            ys = [r.fidelity for r in rs]
            try:
                out[kind] = pearson(xs, ys)
            except ValueError:
                out[kind] = float("nan")
        return out

    def aggregates(self) -> list:
        pr = self.pearson_by_target()
        rows = []
        for key in self.cells():
            rs = [r for r in self.ok_records()
                  if (r.dataset, r.scenario, r.response, r.target_kind,
                      r.surrogate_kind) == key]
            acc_m, acc_s = mean_std([r.surrogate_acc for r in rs])
            fid_m, fid_s = mean_std([r.fidelity for r in rs])
            rows.append({"dataset": key[0], "scenario": key[1], "response": key[2],
                         "target_kind": key[3], "surrogate_kind": key[4],
                         "acc_mean": acc_m, "acc_std": acc_s,
                         "fid_mean": fid_m, "fid_std": fid_s,
                         "pearson_r": pr.get(key[3], float("nan"))})
        return rows


@dataclass(frozen=True)
class HarnessConfig:
    """Training scale and split settings shared by grid and sweep runs."""
    train_fraction: float = 0.2
    query_fraction: float = 0.3
    test_fraction: float = 0.5
    embedding_size: int = 256
    target_epochs: int = 200
    target_batch: int = 512
    encoder_epochs: int = 200
    classifier_epochs: int = 300
    attack_batch: int = 512
    encoder_hidden: int = 256
    structure: StructureLearnConfig = field(default_factory=StructureLearnConfig)
    tsne: TsneConfig = field(default_factory=TsneConfig)

    def split_spec(self, seed):
        return SplitSpec(self.train_fraction, self.query_fraction,
                         self.test_fraction, seed=seed)


class Experiment:
    """One dataset with cached splits and trained targets."""

    def __init__(self, graph: Graph, name=None, config: HarnessConfig = HarnessConfig()):
        self.graph = graph
        self.name = name or graph.name or "dataset"
        self.config = config
        self._splits = {}
        self._targets = {}

    def parts(self, seed):
        if seed not in self._splits:
            self._splits[seed] = split_inductive(self.graph, self.config.split_spec(seed))
        return self._splits[seed]

    def target(self, kind, seed):
        key = (kind, seed)
        if key not in self._targets:
            train, _, _ = self.parts(seed)
            cfg = target_config(kind, self.graph.d, self.graph.class_count,
                                embedding_size=self.config.embedding_size)
            model = build_model(cfg, derive_seed(seed, self.name, kind, "init"))
            tcfg = TrainConfig(epochs=self.config.target_epochs,
                               batch_size=self.config.target_batch,
                               seed=derive_seed(seed, self.name, kind, "train"))
            self._targets[key] = train_model(model, train, tcfg)
        return self._targets[key]

    def make_oracle(self, target, response, seed, sigma=0.0, budget=None):
        tsne = replace(self.config.tsne, seed=derive_seed(seed, self.name, "tsne"))
        return Oracle(target, OracleConfig(response_type=response,
                                           noise_sigma=sigma, budget=budget,
                                           tsne=tsne,
                                           noise_seed=derive_seed(seed, self.name, "noise")))

    def attack_config(self, scenario, surrogate_kind, seed, budget_fraction=1.0,
                      encoder_hidden=None, encoder_epochs=None, batch_size=None):
        return AttackConfig(
            scenario=scenario, surrogate_kind=surrogate_kind,
            encoder_hidden=encoder_hidden or self.config.encoder_hidden,
            encoder_epochs=self.config.encoder_epochs if encoder_epochs is None else encoder_epochs,
            classifier_epochs=self.config.classifier_epochs,
            batch_size=batch_size or self.config.attack_batch,
            seed=derive_seed(seed, self.name, scenario, surrogate_kind, "attack"),
            budget_fraction=budget_fraction,
            structure=self.config.structure if scenario.startswith("II") else None)

    def run_cell(self, target_kind, surrogate_kind, scenario, seed,
                 sigma=0.0, budget_fraction=1.0, encoder_hidden=None,
                 encoder_epochs=None, batch_size=None) -> RunRecord:
        response = SCENARIO_RESPONSE[scenario]
        rec = RunRecord(self.name, scenario, response, target_kind,
                        surrogate_kind, seed)
        start = time.perf_counter()
        train, query, test = self.parts(seed)
        target = self.target(target_kind, seed)
        oracle = self.make_oracle(target, response, seed, sigma=sigma)
        cfg = self.attack_config(scenario, surrogate_kind, seed,
                                 budget_fraction=budget_fraction,
                                 encoder_hidden=encoder_hidden,
                                 encoder_epochs=encoder_epochs,
                                 batch_size=batch_size)
        surrogate = run_attack(cfg, oracle, query)
        rec.target_acc = accuracy(target, test)
        rec.surrogate_acc = accuracy(surrogate, test)
        rec.fidelity = fidelity(surrogate, target, test)
        rec.queries_used = surrogate.provenance["query_ledger"]["nodes_queried"]
        rec.wall_seconds = time.perf_counter() - start
        return rec


def run_grid(experiments, targets, surrogates, responses, scenario_type="I",
             repetitions=5, seeds=None) -> MetricsReport:
    """Full cross of datasets x targets x surrogates x responses, repeated
    over seeds with fresh splits; failures isolate to their cell."""
    if scenario_type not in ("I", "II"):
        raise ValueError("scenario_type must be 'I' or 'II'")
    if seeds is None:
        seeds = list(range(repetitions))
    if len(seeds) != repetitions:
        raise ValueError("need one seed per repetition")
    scen_for = {"embedding": "1", "prediction": "2", "projection": "3"}
    report = MetricsReport(repetitions=repetitions)
    for exp in experiments:
        for seed in seeds:
            for tk in targets:
                for resp in responses:
                    scenario = "%s.%s" % (scenario_type, scen_for[resp])
                    for sk in surrogates:
                        try:
                            rec = exp.run_cell(tk, sk, scenario, seed)
                        except Exception as exc:
                            rec = RunRecord(exp.name, scenario, resp, tk, sk,
                                            seed, error=str(exc))
                        report.records.append(rec)
    return report


def budget_sweep(exp: Experiment, target_kind, surrogate_kind, scenario,
                 fractions, repetitions=1, seeds=None) -> list:
    """One attack per dataset-node fraction; fractions are shares of the
    full dataset, capped by the query partition size."""
    if not fractions:
        raise ValueError("no fractions given")
    if seeds is None:
        seeds = list(range(repetitions))
    records = []
    for frac in fractions:
        if frac <= 0:
            raise ValueError("budget fraction must be positive")
        if frac > exp.config.query_fraction + 1e-12:
            raise ValueError("fraction %.3f exceeds query partition %.3f"
                             % (frac, exp.config.query_fraction))
        part_frac = min(1.0, frac / exp.config.query_fraction)
        for seed in seeds:
            rec = exp.run_cell(target_kind, surrogate_kind, scenario, seed,
                               budget_fraction=part_frac)
            rec.sweep_axis = "budget"
            rec.sweep_value = float(frac)
            records.append(rec)
    return records


def defense_sweep(exp: Experiment, target_kind, surrogate_kind, scenario,
                  sigmas, repetitions=1, seeds=None) -> list:
    """One attack per noise level applied to the oracle responses."""
    if len(sigmas) == 0:
        raise ValueError("no sigma values given")
    if seeds is None:
        seeds = list(range(repetitions))
    records = []
    for sigma in sigmas:
        if sigma < 0:
            raise ValueError("sigma must be >= 0")
        for seed in seeds:
            rec = exp.run_cell(target_kind, surrogate_kind, scenario, seed,
                               sigma=float(sigma))
            rec.sweep_axis = "sigma"
            rec.sweep_value = float(sigma)
            records.append(rec)
    return records


def hyper_sweep(exp: Experiment, target_kind, surrogate_kind, scenario,
                axis, values, repetitions=1, seeds=None) -> list:
    """Surrogate hyperparameter study over hidden width, encoder epochs,
    or batch size."""
    if axis not in ("hidden", "epochs", "batch"):
        raise ValueError("unknown sweep axis %r" % axis)
    if len(values) == 0:
        raise ValueError("no values given")
    if seeds is None:
        seeds = list(range(repetitions))
    records = []
    for value in values:
        if value <= 0:
            raise ValueError("axis values must be positive")
        kw = {"hidden": "encoder_hidden", "epochs": "encoder_epochs",
              "batch": "batch_size"}[axis]
        for seed in seeds:
            rec = exp.run_cell(target_kind, surrogate_kind, scenario, seed,
                               **{kw: int(value)})
            rec.sweep_axis = axis
            rec.sweep_value = float(value)
            records.append(rec)
    return records


# -- report emission ---------------------------------------------------------

def _write_csv(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return Path(path)


def emit_report(report: MetricsReport, out_dir, sweeps=None) -> dict:
    """Write results.csv, aggregates.csv and plot images under ``out_dir``.

    Re-emitting the same in-memory report reproduces the CSVs byte for
    byte.  Sweep record lists (if given) land in sweep_<axis>.csv plus a
    curve image each.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    paths["results"] = _write_csv(out / "results.csv", RESULTS_COLUMNS,
                                  [r.row() for r in report.records])
    agg_rows = [[a["dataset"], a["scenario"], a["response"], a["target_kind"],
                 a["surrogate_kind"], repr(a["acc_mean"]), repr(a["acc_std"]),
                 repr(a["fid_mean"]), repr(a["fid_std"]), repr(a["pearson_r"])]
                for a in report.aggregates()]
    paths["aggregates"] = _write_csv(out / "aggregates.csv", AGGREGATE_COLUMNS, agg_rows)
    _plot_heatmaps(report, out, paths)
    for axis, records in (sweeps or {}).items():
        rows = [r.row() + [repr(r.sweep_value)] for r in records]
        paths["sweep_%s" % axis] = _write_csv(out / ("sweep_%s.csv" % axis),
                                              list(RESULTS_COLUMNS) + [axis], rows)
        _plot_sweep(records, axis, out, paths)
    return paths


def _plot_heatmaps(report, out, paths):
    aggs = report.aggregates()
    if not aggs:
        return
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    combos = sorted({(a["dataset"], a["scenario"], a["response"]) for a in aggs})
    for dataset, scenario, response in combos:
        sub = [a for a in aggs if (a["dataset"], a["scenario"], a["response"])
               == (dataset, scenario, response)]
        tks = sorted({a["target_kind"] for a in sub})
        sks = sorted({a["surrogate_kind"] for a in sub})
        M = np.full((len(sks), len(tks)), np.nan)
        for a in sub:
            M[sks.index(a["surrogate_kind"]), tks.index(a["target_kind"])] = a["acc_mean"]
        fig, ax = plt.subplots(figsize=(1.2 + len(tks), 1.2 + len(sks)))
        im = ax.imshow(M, vmin=0, vmax=1, cmap="viridis")
        ax.set_xticks(range(len(tks)), tks)
        ax.set_yticks(range(len(sks)), sks)
        ax.set_xlabel("target")
        ax.set_ylabel("surrogate")
        ax.set_title("%s %s %s: surrogate accuracy" % (dataset, scenario, response))
        for i in range(len(sks)):
            for j in range(len(tks)):
                if np.isfinite(M[i, j]):
                    ax.text(j, i, "%.3f" % M[i, j], ha="center", va="center",
                            color="white", fontsize=8)
        fig.colorbar(im)
        name = "heatmap_%s_%s_%s.png" % (dataset, scenario.replace(".", ""), response)
        fig.savefig(out / name, dpi=110, bbox_inches="tight")
        plt.close(fig)
        paths[name] = out / name


def _plot_sweep(records, axis, out, paths):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    values = sorted({r.sweep_value for r in records})
    acc_m, acc_s, fid_m, fid_s = [], [], [], []
    for v in values:
        rs = [r for r in records if r.sweep_value == v and not r.error]
        m, s = mean_std([r.surrogate_acc for r in rs])
        acc_m.append(m); acc_s.append(s)
        m, s = mean_std([r.fidelity for r in rs])
        fid_m.append(m); fid_s.append(s)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.errorbar(values, acc_m, yerr=acc_s, marker="o", label="accuracy")
    ax.errorbar(values, fid_m, yerr=fid_s, marker="s", label="fidelity")
    ax.set_xlabel(axis)
    ax.set_ylim(0, 1.05)
    ax.legend()
    ax.grid(alpha=0.3)
    name = "curve_%s.png" % axis
    fig.savefig(out / name, dpi=110, bbox_inches="tight")
    plt.close(fig)
    paths[name] = out / name
