"""Black-box adaptive attack suite: five metric attacks calibrated on shadow
data plus a neural-network attack over the full probability vector."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nnet
from .losses import ConvexBase, LossSpec, Objective
from .numerics import clamp_probs, softmax
from .theory import membership_advantage

METRIC_KINDS = ("correctness", "loss", "confidence", "entropy", "mentropy")

# direction: True means small metric values indicate membership
SMALL_IS_MEMBER = {
    "correctness": False,  # binary rule, threshold unused
    "loss": True,
    "confidence": False,
    "entropy": True,
    "mentropy": True,
}


@dataclass(frozen=True)
class QueryRecord:
    """One (features, label, membership-bit) attack query."""

    features: np.ndarray
    label: int
    member: int


def make_queries(x_member, y_member, x_nonmember, y_nonmember) -> list[QueryRecord]:
    qs = [QueryRecord(x, int(y), 1) for x, y in zip(x_member, y_member)]
    qs += [QueryRecord(x, int(y), 0) for x, y in zip(x_nonmember, y_nonmember)]
    return qs


def query_arrays(queries: list[QueryRecord]):
    x = np.stack([q.features for q in queries])
    y = np.array([q.label for q in queries], dtype=np.int64)
    m = np.array([q.member for q in queries], dtype=np.int64)
    return x, y, m


def compute_metric(kind: str, p, y: int) -> float:
    """Scalar attack metric of one probability vector."""
    p = np.asarray(p, dtype=np.float64)
    y = int(y)
    if kind == "correctness":
        return float(np.argmax(p) == y)
    pc = clamp_probs(p)
    py = float(pc[y])
    if kind == "loss":
        return -np.log(py)
    if kind == "confidence":
        return float(p[y])
    if kind == "entropy":
        return float(-np.sum(pc * np.log(pc)))
    if kind == "mentropy":
        others = np.delete(pc, y)
        return float(
            -(1.0 - py) * np.log(py) - np.sum(others * np.log(clamp_probs(1.0 - others)))
        )
    raise ValueError(f"unknown metric: {kind!r}")


def metric_values(kind: str, probs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorized compute_metric over rows."""
    probs = np.asarray(probs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.int64)
    rows = np.arange(len(ys))
    if kind == "correctness":
        return (np.argmax(probs, axis=1) == ys).astype(np.float64)
    pc = clamp_probs(probs)
    py = pc[rows, ys]
    if kind == "loss":
        return -np.log(py)
    if kind == "confidence":
        return probs[rows, ys]
    if kind == "entropy":
        return -np.sum(pc * np.log(pc), axis=1)
    if kind == "mentropy":
        terms = -pc * np.log(clamp_probs(1.0 - pc))
        terms[rows, ys] = -(1.0 - py) * np.log(py)
        return np.sum(terms, axis=1)
    raise ValueError(f"unknown metric: {kind!r}")


@dataclass(frozen=True)
class ThresholdRule:
    """Calibrated metric attack: threshold + direction, optionally per class."""

    metric: str
    tau: float
    small_is_member: bool
    class_taus: dict[int, float] | None = None

    def predict(self, values: np.ndarray, ys: np.ndarray | None = None) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if self.metric == "correctness":
            return (values > 0.5).astype(np.int64)
        if self.class_taus is not None:
            if ys is None:
                raise ValueError("per-class rule needs labels")
            taus = np.array([self.class_taus.get(int(c), self.tau) for c in ys])
        else:
            taus = self.tau
        if self.small_is_member:
            return (values <= taus).astype(np.int64)
        return (values >= taus).astype(np.int64)


def _best_threshold(values: np.ndarray, members: np.ndarray, small_is_member: bool):
    """Exact advantage maximization over midpoints of sorted values plus
    outside sentinels; ties broken toward the smaller threshold."""
    uniq = np.unique(values)
    cands = [uniq[0] - 1.0]
    cands.extend((uniq[:-1] + uniq[1:]) / 2.0)
    cands.append(uniq[-1] + 1.0)
    best_tau, best_adv = cands[0], -np.inf
    for tau in cands:
        pred = (values <= tau) if small_is_member else (values >= tau)
        adv = membership_advantage(pred.astype(np.int64), members)
        if adv > best_adv + 1e-15:
            best_adv, best_tau = adv, tau
    return float(best_tau), float(best_adv)


def calibrate_threshold(
    metric: str,
    shadow_probs: np.ndarray,
    shadow_ys: np.ndarray,
    shadow_members: np.ndarray,
    class_wise: bool = False,
) -> ThresholdRule:
    """Pick the threshold maximizing membership advantage on shadow data."""
    members = np.asarray(shadow_members, dtype=np.int64)
    if members.min() == members.max():
        raise ValueError("shadow queries must contain both members and non-members")
    small = SMALL_IS_MEMBER[metric]
    values = metric_values(metric, shadow_probs, shadow_ys)
    if metric == "correctness":
        return ThresholdRule(metric, 0.5, small)
    tau, _ = _best_threshold(values, members, small)
    class_taus = None
    if class_wise:
        class_taus = {}
        for c in np.unique(shadow_ys):
            mask = shadow_ys == c
            if members[mask].min() != members[mask].max():
                class_taus[int(c)] = _best_threshold(values[mask], members[mask], small)[0]
    return ThresholdRule(metric, tau, small, class_taus)


def run_metric_attack(rule: ThresholdRule, target_net: nnet.Network, queries) -> np.ndarray:
    """Per-record membership predictions for a calibrated rule."""
    x, y, _ = query_arrays(queries) if isinstance(queries, list) else queries
    probs = nnet.predict_probs(target_net, x)
    values = metric_values(rule.metric, probs, y)
    return rule.predict(values, y)


def attack_features(probs: np.ndarray, ys: np.ndarray, num_classes: int) -> np.ndarray:
    """NN-attack input: descending-sorted probabilities concatenated with the
    one-hot true label."""
    probs = np.asarray(probs, dtype=np.float64)
    srt = np.sort(probs, axis=1)[:, ::-1]
    onehot = np.zeros((len(ys), num_classes))
    onehot[np.arange(len(ys)), ys] = 1.0
    return np.concatenate([srt, onehot], axis=1)


@dataclass(frozen=True)
class NNAttackConfig:
    hidden: int = 64
    epochs: int = 60
    batch_size: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4


@dataclass
class NNAttackModel:
    net: nnet.Network
    num_classes: int

    def predict(self, probs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        feats = attack_features(probs, ys, self.num_classes)
        out = nnet.predict_probs(self.net, feats)
        return np.argmax(out, axis=1).astype(np.int64)


def train_nn_attack(
    shadow_probs: np.ndarray,
    shadow_ys: np.ndarray,
    shadow_members: np.ndarray,
    num_classes: int,
    rng: np.random.Generator,
    cfg: NNAttackConfig = NNAttackConfig(),
) -> NNAttackModel:
    """Binary membership classifier on (sorted probabilities + one-hot label)."""
    members = np.asarray(shadow_members, dtype=np.int64)
    if members.min() == members.max():
        raise ValueError("shadow queries must contain both members and non-members")
    feats = attack_features(shadow_probs, shadow_ys, num_classes)
    net = nnet.init_network([feats.shape[1], cfg.hidden, 2], rng, activation="relu")
    train_cfg = nnet.TrainConfig(
        objective=Objective(kind="spec", spec=LossSpec(base=ConvexBase("ce"))),
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        lr=cfg.lr,
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
    )
    net, _, _ = nnet.train(net, (feats, members), (feats, members), train_cfg, rng)
    return NNAttackModel(net, num_classes)


@dataclass(frozen=True)
class AttackResult:
    name: str
    predictions: np.ndarray
    metric_vals: np.ndarray | None
    tau: float | None


def run_attack_suite(
    target_net: nnet.Network,
    shadow_nets,
    shadow_queries: list[QueryRecord],
    target_queries: list[QueryRecord],
    num_classes: int,
    rng: np.random.Generator,
    enabled=("correctness", "loss", "confidence", "entropy", "mentropy", "nn"),
    class_wise: bool = False,
    nn_cfg: NNAttackConfig = NNAttackConfig(),
) -> list[AttackResult]:
    """Calibrate every enabled attack on the shadow side, then attack the
    target. `shadow_nets` may be one network or a list; with several, metric
    values are averaged across shadows for calibration."""
    if isinstance(shadow_nets, nnet.Network):
        shadow_nets = [shadow_nets]
    sx, sy, sm = query_arrays(shadow_queries)
    tx, ty, _ = query_arrays(target_queries)
    shadow_prob_list = [nnet.predict_probs(s, sx) for s in shadow_nets]
    target_probs = nnet.predict_probs(target_net, tx)

    results = []
    for kind in enabled:
        if kind == "nn":
            model = train_nn_attack(shadow_prob_list[0], sy, sm, num_classes, rng)
            pred = model.predict(target_probs, ty)
            results.append(AttackResult("nn", pred, None, None))
            continue
        shadow_vals = np.mean(
            [metric_values(kind, p, sy) for p in shadow_prob_list], axis=0
        )
        if kind == "correctness":
            rule = ThresholdRule(kind, 0.5, SMALL_IS_MEMBER[kind])
        else:
            if sm.min() == sm.max():
                raise ValueError("shadow queries must contain both membership classes")
            tau, _ = _best_threshold(shadow_vals, sm, SMALL_IS_MEMBER[kind])
            rule = ThresholdRule(kind, tau, SMALL_IS_MEMBER[kind])
            if class_wise:
                rule = calibrate_threshold(kind, shadow_prob_list[0], sy, sm, class_wise=True)
        vals = metric_values(kind, target_probs, ty)
        pred = rule.predict(vals, ty)
        results.append(AttackResult(kind, pred, vals, rule.tau))
    return results


def export_predictions_csv(path: str, results: list[AttackResult], truth: np.ndarray) -> None:
    """Columns: record_id, attack_name, predicted_m, true_m, metric_value."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("record_id,attack_name,predicted_m,true_m,metric_value\n")
        for res in results:
            for i, (pred, m) in enumerate(zip(res.predictions, truth)):
                val = "" if res.metric_vals is None else repr(float(res.metric_vals[i]))
                fh.write(f"{i},{res.name},{int(pred)},{int(m)},{val}\n")
