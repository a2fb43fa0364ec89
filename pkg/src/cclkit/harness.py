"""Experiment orchestration: config parsing, the train -> attack -> evaluate
pipeline, alpha sweeps, baseline grids, and result emission.

Config files are flat INI (one section per concern); every run is a pure
function of the config bytes plus the master seed. Module RNG streams are
derived from the master seed with fixed stream ids: data=1, target=2,
shadow=3, attack=4, theory=5.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import attacks, data, nnet
from .losses import ConcaveTerm, ConvexBase, LossSpec, Objective
from .numerics import rng_stream

STREAM_DATA = 1
STREAM_TARGET = 2
STREAM_SHADOW = 3
STREAM_ATTACK = 4
STREAM_THEORY = 5

ATTACK_NAMES = ("correctness", "loss", "confidence", "entropy", "mentropy", "nn")


class ConfigError(ValueError):
    """Bad or missing configuration; maps to exit code 2."""


class StageError(RuntimeError):
    """A pipeline stage failed; message carries the stage tag."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class DataSpec:
    kind: str = "blobs"  # blobs | binary | csv
    classes: int = 5
    dim: int = 16
    per_class: int = 400
    spread: float = 2.0
    flip_prob: float = 0.2
    path: str = ""
    has_header: bool = False
    stratify: bool = False


@dataclass(frozen=True)
class AttackSpec:
    enabled: tuple[str, ...] = ATTACK_NAMES
    class_wise: bool = False
    shadows: int = 1
    nn_epochs: int = 60


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataSpec = DataSpec()
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "relu"
    dropout: float = 0.0
    train: nnet.TrainConfig = None
    attack: AttackSpec = AttackSpec()
    seed: int = 0
    sweep_alphas: tuple[float, ...] = ()
    sweep_seeds: tuple[int, ...] = (0,)
    baseline_defenses: tuple[str, ...] = ()
    baseline_grids: dict = field(default_factory=dict)


def _ints(s):
    return tuple(int(v) for v in s.split(",") if v.strip())


def _floats(s):
    return tuple(float(v) for v in s.split(",") if v.strip())


def _strs(s):
    return tuple(v.strip() for v in s.split(",") if v.strip())


DEFAULT_BASELINE_GRIDS = {
    "relaxloss": (0.01, 0.04, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2),
    "dropout": (0.01, 0.02, 0.05, 0.1, 0.3, 0.5, 0.7, 0.9),
    "label_smoothing": (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
    "confidence_penalty": (0.1, 0.3, 0.5, 1.0, 2.0, 4.0, 8.0),
    "early_stop": (25, 50, 75, 100, 125, 150, 175, 200, 225, 250, 275),
}


def parse_config(path: str) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None

    try:
        d = cp["data"] if cp.has_section("data") else {}
        ds = DataSpec(
            kind=d.get("kind", "blobs"),
            classes=int(d.get("classes", 5)),
            dim=int(d.get("dim", 16)),
            per_class=int(d.get("per_class", 400)),
            spread=float(d.get("spread", 2.0)),
            flip_prob=float(d.get("flip_prob", 0.2)),
            path=d.get("path", ""),
            has_header=str(d.get("has_header", "false")).lower() == "true",
            stratify=str(d.get("stratify", "false")).lower() == "true",
        )
        if ds.kind not in ("blobs", "binary", "csv"):
            raise ConfigError(f"unknown data kind: {ds.kind!r}")
        if ds.kind == "csv" and not ds.path:
            raise ConfigError("data kind csv needs a path")

        m = cp["model"] if cp.has_section("model") else {}
        hidden = _ints(m.get("hidden", "64,64"))
        activation = m.get("activation", "relu")
        dropout = float(m.get("dropout", 0.0))

        t = cp["train"] if cp.has_section("train") else {}
        objective = _parse_objective(t)
        train = nnet.TrainConfig(
            objective=objective,
            epochs=int(t.get("epochs", 100)),
            batch_size=int(t.get("batch_size", 128)),
            lr=float(t.get("lr", 0.1)),
            momentum=float(t.get("momentum", 0.9)),
            weight_decay=float(t.get("weight_decay", 5e-4)),
            milestones=_ints(t.get("milestones", "")),
            lr_drop_factor=float(t.get("lr_drop_factor", 10.0)),
            defense=t.get("defense", "none"),
            relax_threshold=float(t.get("relax_threshold", 0.0)),
            checkpoint_epochs=_ints(t.get("checkpoints", "")),
        )

        a = cp["attack"] if cp.has_section("attack") else {}
        enabled = _strs(a.get("enabled", ",".join(ATTACK_NAMES)))
        for name in enabled:
            if name not in ATTACK_NAMES:
                raise ConfigError(f"unknown attack: {name!r}")
        atk = AttackSpec(
            enabled=enabled,
            class_wise=str(a.get("class_wise", "false")).lower() == "true",
            shadows=int(a.get("shadows", 1)),
            nn_epochs=int(a.get("nn_epochs", 60)),
        )

        r = cp["run"] if cp.has_section("run") else {}
        seed = int(r.get("seed", 0))

        s = cp["sweep"] if cp.has_section("sweep") else {}
        sweep_alphas = _floats(s.get("alphas", ""))
        sweep_seeds = _ints(s.get("seeds", "0")) or (0,)

        b = cp["baselines"] if cp.has_section("baselines") else {}
        defenses = _strs(b.get("defenses", ""))
        grids = {}
        for name in defenses:
            if name not in DEFAULT_BASELINE_GRIDS:
                raise ConfigError(f"unknown baseline defense: {name!r}")
            raw = b.get(name, "")
            grids[name] = _floats(raw) if raw else DEFAULT_BASELINE_GRIDS[name]
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad config value: {exc}") from None

    return ExperimentConfig(
        data=ds,
        hidden=hidden,
        activation=activation,
        dropout=dropout,
        train=train,
        attack=atk,
        seed=seed,
        sweep_alphas=sweep_alphas,
        sweep_seeds=sweep_seeds,
        baseline_defenses=defenses,
        baseline_grids=grids,
    )


def _parse_objective(t) -> Objective:
    kind = t.get("objective", "spec")
    if kind == "spec":
        spec = LossSpec.from_config(
            {
                "base": t.get("base", "ce"),
                "gamma": t.get("gamma", 2.0),
                "concave": t.get("concave", "none"),
                "alpha": t.get("alpha", 1.0),
                "scale": t.get("scale", 1.0),
            }
        )
        return Objective(kind="spec", spec=spec)
    if kind == "label_smoothing":
        return Objective(kind="label_smoothing", smoothing=float(t.get("smoothing", 0.1)))
    if kind == "confidence_penalty":
        return Objective(kind="confidence_penalty", beta=float(t.get("beta", 0.1)))
    raise ConfigError(f"unknown objective: {kind!r}")


def _derived_seeds(master: int, stream: int, n: int = 2) -> list[int]:
    rng = rng_stream(master, stream)
    return [int(v) for v in rng.integers(0, 2**31 - 1, size=n)]


def build_dataset(cfg: ExperimentConfig, ds_seed: int) -> data.Dataset:
    d = cfg.data
    if d.kind == "blobs":
        return data.synth_blobs(d.classes, d.dim, d.per_class, d.spread, ds_seed)
    if d.kind == "binary":
        return data.synth_binary_records(d.classes, d.dim, d.per_class, d.flip_prob, ds_seed)
    if not os.path.exists(d.path):
        raise StageError("data", f"CSV not found: {d.path}")
    return data.load_csv(d.path, has_header=d.has_header)


def _train_model(cfg: ExperimentConfig, xs, ys, xt, yt, rng):
    sizes = [xs.shape[1], *cfg.hidden, int(max(ys.max(), yt.max())) + 1]
    net = nnet.init_network(sizes, rng, activation=cfg.activation, dropout=cfg.dropout)
    return nnet.train(net, (xs, ys), (xt, yt), cfg.train, rng)


def _balanced_queries(x_in, y_in, x_out, y_out):
    n = min(len(y_in), len(y_out))
    return attacks.make_queries(x_in[:n], y_in[:n], x_out[:n], y_out[:n])


@dataclass
class PipelineResult:
    report: dict
    target_stats: list[nnet.EpochStats]
    shadow_stats: list[nnet.EpochStats]
    attack_results: list[attacks.AttackResult]
    truth: np.ndarray


def run_pipeline(cfg: ExperimentConfig, seed: int | None = None) -> PipelineResult:
    """Data -> split -> target/shadow training (identical recipes) -> shadow
    calibration -> attacks on the target -> report."""
    seed = cfg.seed if seed is None else seed
    data_seed, split_seed = _derived_seeds(seed, STREAM_DATA)

    try:
        ds = build_dataset(cfg, data_seed)
    except StageError:
        raise
    except Exception as exc:
        raise StageError("data", str(exc)) from exc

    try:
        plan = data.split4(ds, split_seed, cfg.data.stratify)
        tt_x, tt_y = ds.subset(plan.target_train)
        te_x, te_y = ds.subset(plan.target_test)
        st_x, st_y = ds.subset(plan.shadow_train)
        se_x, se_y = ds.subset(plan.shadow_test)
    except Exception as exc:
        raise StageError("split", str(exc)) from exc

    try:
        target_rng = rng_stream(seed, STREAM_TARGET)
        target, target_stats, _ = _train_model(cfg, tt_x, tt_y, te_x, te_y, target_rng)
    except Exception as exc:
        raise StageError("train-target", str(exc)) from exc

    try:
        shadow_rng = rng_stream(seed, STREAM_SHADOW)
        shadows = []
        shadow_stats = []
        for _ in range(max(1, cfg.attack.shadows)):
            shadow, sstats, _ = _train_model(cfg, st_x, st_y, se_x, se_y, shadow_rng)
            shadows.append(shadow)
            shadow_stats = sstats
    except Exception as exc:
        raise StageError("train-shadow", str(exc)) from exc

    try:
        attack_rng = rng_stream(seed, STREAM_ATTACK)
        shadow_queries = _balanced_queries(st_x, st_y, se_x, se_y)
        target_queries = _balanced_queries(tt_x, tt_y, te_x, te_y)
        results = attacks.run_attack_suite(
            target,
            shadows,
            shadow_queries,
            target_queries,
            ds.num_classes,
            attack_rng,
            enabled=cfg.attack.enabled,
            class_wise=cfg.attack.class_wise,
            nn_cfg=attacks.NNAttackConfig(epochs=cfg.attack.nn_epochs),
        )
    except Exception as exc:
        raise StageError("attack", str(exc)) from exc

    try:
        from .theory import membership_advantage, p1_score, tpr_fpr

        _, _, truth = attacks.query_arrays(target_queries)
        attack_rows = []
        for res in results:
            adv = membership_advantage(res.predictions, truth)
            tpr, fpr = tpr_fpr(res.predictions, truth)
            attack_rows.append(
                {
                    "name": res.name,
                    "adv": adv,
                    "tpr": tpr,
                    "fpr": fpr,
                    "tau": res.tau,
                }
            )
        max_adv = max(r["adv"] for r in attack_rows)
        test_acc = target_stats[-1].test_acc
        report = {
            "seed": seed,
            "target": {"test_acc": test_acc, "train_acc": target_stats[-1].train_acc},
            "attacks": attack_rows,
            "max_adv": max_adv,
            "p1": p1_score(test_acc, max(0.0, min(1.0, max_adv))),
            "loss": cfg.train.objective.name,
            "final_train_loss_mean": target_stats[-1].train_loss_mean,
            "final_train_loss_var": target_stats[-1].train_loss_var,
        }
    except Exception as exc:
        raise StageError("evaluate", str(exc)) from exc

    return PipelineResult(report, target_stats, shadow_stats, results, truth)


def write_report(result: PipelineResult, out_dir: str) -> tuple[str, str]:
    """Emit report.json and epochs.csv; on failure remove partial outputs."""
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, "report.json")
    epochs_path = os.path.join(out_dir, "epochs.csv")
    try:
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(result.report, fh, sort_keys=True, indent=2)
            fh.write("\n")
        with open(epochs_path, "w", encoding="utf-8") as fh:
            fh.write(
                "epoch,lr,train_loss_mean,train_loss_var,objective_mean,"
                "train_acc,test_acc,conf_mean,conf_var\n"
            )
            for s in result.target_stats:
                fh.write(
                    f"{s.epoch},{s.lr!r},{s.train_loss_mean!r},{s.train_loss_var!r},"
                    f"{s.objective_mean!r},{s.train_acc!r},{s.test_acc!r},"
                    f"{s.conf_mean!r},{s.conf_var!r}\n"
                )
    except Exception:
        for p in (report_path, epochs_path):
            if os.path.exists(p):
                os.remove(p)
        raise
    return report_path, epochs_path


SWEEP_COLUMNS = (
    "defense",
    "knob",
    "seed",
    "test_acc",
    "train_acc",
    "adv_correctness",
    "adv_loss",
    "adv_confidence",
    "adv_entropy",
    "adv_mentropy",
    "adv_nn",
    "max_adv",
    "p1",
    "loss_mean",
    "loss_var",
)


def _row_from_report(defense: str, knob: float, seed: int, report: dict) -> dict:
    row = {c: "" for c in SWEEP_COLUMNS}
    row.update(
        defense=defense,
        knob=knob,
        seed=seed,
        test_acc=report["target"]["test_acc"],
        train_acc=report["target"]["train_acc"],
        max_adv=report["max_adv"],
        p1=report["p1"],
        loss_mean=report["final_train_loss_mean"],
        loss_var=report["final_train_loss_var"],
    )
    for atk in report["attacks"]:
        row[f"adv_{atk['name']}"] = atk["adv"]
    return row


def _with_alpha(cfg: ExperimentConfig, alpha: float) -> ExperimentConfig:
    spec = cfg.train.objective.spec
    if spec is None or spec.concave is None:
        raise ConfigError("alpha sweep needs a concave term in [train]")
    new_spec = replace(spec, alpha=alpha)
    return replace(
        cfg, train=replace(cfg.train, objective=Objective(kind="spec", spec=new_spec))
    )


def _sweep_worker(args):
    cfg, defense, knob, seed = args
    try:
        result = run_pipeline(cfg, seed=seed)
        return _row_from_report(defense, knob, seed, result.report), None
    except Exception as exc:
        return {"defense": defense, "knob": knob, "seed": seed}, str(exc)


def _run_jobs(tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [_sweep_worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_worker, tasks))


def run_sweep(cfg: ExperimentConfig, jobs: int = 1):
    """Pipeline per (alpha, seed); failures are recorded and the sweep continues."""
    if not cfg.sweep_alphas:
        raise ConfigError("sweep needs [sweep] alphas")
    tasks = [
        (_with_alpha(cfg, alpha), "ccl", alpha, seed)
        for alpha in cfg.sweep_alphas
        for seed in cfg.sweep_seeds
    ]
    outcomes = _run_jobs(tasks, jobs)
    rows = [row for row, err in outcomes if err is None]
    errors = [(row, err) for row, err in outcomes if err is not None]
    return rows, errors


def _baseline_cfg(cfg: ExperimentConfig, defense: str, knob: float) -> ExperimentConfig:
    ce = Objective(kind="spec", spec=LossSpec(base=ConvexBase("ce")))
    train = replace(cfg.train, objective=ce, defense="none", checkpoint_epochs=())
    if defense == "relaxloss":
        train = replace(train, defense="relaxloss", relax_threshold=knob)
        return replace(cfg, train=train)
    if defense == "dropout":
        return replace(cfg, train=train, dropout=knob)
    if defense == "label_smoothing":
        return replace(cfg, train=replace(train, objective=Objective("label_smoothing", smoothing=knob)))
    if defense == "confidence_penalty":
        return replace(cfg, train=replace(train, objective=Objective("confidence_penalty", beta=knob)))
    raise ConfigError(f"unknown baseline defense: {defense!r}")


def _early_stop_rows(cfg: ExperimentConfig, seed: int):
    """One training, one attack round per checkpoint epoch (target and shadow
    checkpointed at the same epochs)."""
    epochs = tuple(int(e) for e in cfg.baseline_grids["early_stop"] if e < cfg.train.epochs)
    ce = Objective(kind="spec", spec=LossSpec(base=ConvexBase("ce")))
    train = replace(
        cfg.train, objective=ce, defense="early_stop", checkpoint_epochs=epochs
    )
    ecfg = replace(cfg, train=train)

    data_seed, split_seed = _derived_seeds(seed, STREAM_DATA)
    ds = build_dataset(ecfg, data_seed)
    plan = data.split4(ds, split_seed, ecfg.data.stratify)
    tt_x, tt_y = ds.subset(plan.target_train)
    te_x, te_y = ds.subset(plan.target_test)
    st_x, st_y = ds.subset(plan.shadow_train)
    se_x, se_y = ds.subset(plan.shadow_test)
    _, t_stats, t_ckpts = _train_model(ecfg, tt_x, tt_y, te_x, te_y, rng_stream(seed, STREAM_TARGET))
    _, _, s_ckpts = _train_model(ecfg, st_x, st_y, se_x, se_y, rng_stream(seed, STREAM_SHADOW))

    from .theory import membership_advantage, p1_score

    rows = []
    for epoch in epochs:
        attack_rng = rng_stream(seed, STREAM_ATTACK)
        shadow_queries = _balanced_queries(st_x, st_y, se_x, se_y)
        target_queries = _balanced_queries(tt_x, tt_y, te_x, te_y)
        results = attacks.run_attack_suite(
            t_ckpts[epoch],
            s_ckpts[epoch],
            shadow_queries,
            target_queries,
            ds.num_classes,
            attack_rng,
            enabled=ecfg.attack.enabled,
            nn_cfg=attacks.NNAttackConfig(epochs=ecfg.attack.nn_epochs),
        )
        _, _, truth = attacks.query_arrays(target_queries)
        advs = {r.name: membership_advantage(r.predictions, truth) for r in results}
        max_adv = max(advs.values())
        stat = t_stats[epoch - 1]
        row = {c: "" for c in SWEEP_COLUMNS}
        row.update(
            defense="early_stop",
            knob=epoch,
            seed=seed,
            test_acc=stat.test_acc,
            train_acc=stat.train_acc,
            max_adv=max_adv,
            p1=p1_score(stat.test_acc, max(0.0, min(1.0, max_adv))),
            loss_mean=stat.train_loss_mean,
            loss_var=stat.train_loss_var,
        )
        for name, adv in advs.items():
            row[f"adv_{name}"] = adv
        rows.append(row)
    return rows


def run_baselines(cfg: ExperimentConfig, jobs: int = 1):
    """One privacy-utility curve per enabled defense, rows in the sweep schema."""
    if not cfg.baseline_defenses:
        raise ConfigError("baselines need [baselines] defenses")
    tasks = []
    rows = []
    errors = []
    for defense in cfg.baseline_defenses:
        if defense == "early_stop":
            continue
        for knob in cfg.baseline_grids[defense]:
            for seed in cfg.sweep_seeds:
                tasks.append((_baseline_cfg(cfg, defense, knob), defense, knob, seed))
    outcomes = _run_jobs(tasks, jobs)
    rows.extend(row for row, err in outcomes if err is None)
    errors.extend((row, err) for row, err in outcomes if err is not None)
    if "early_stop" in cfg.baseline_defenses:
        for seed in cfg.sweep_seeds:
            try:
                rows.extend(_early_stop_rows(cfg, seed))
            except Exception as exc:
                errors.append(({"defense": "early_stop", "seed": seed}, str(exc)))
    return rows, errors


def write_sweep_csv(rows: list[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(SWEEP_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt_cell(row.get(c, "")) for c in SWEEP_COLUMNS) + "\n")


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)
