"""Single-hidden-layer softmax classifier over relabeled vote records.

Classes are preference ranks (0 votes Q, 1 votes Q', 2 votes Q''), so one
network serves any candidate labeling.  Features, in order:

- poll shares of Q, Q', Q'' (divided by poll size)
- pairwise share gaps (Q-Q', Q-Q'', Q'-Q'')
- original candidate index of Q, Q', Q'', scaled to [0, 1]
- gap between the poll leader and Q, divided by poll size
- scenario one-hot (A..F; all zero when the poll is tied)
- availability-normalized action ratios (TRT, CMP, LB), absent -> 0
- presence flags for those three ratios
- voter-type one-hot (TRT, LB, OTHER)

All features lie in [-1, 1].  Hidden layer: 3 logistic units; output:
softmax over the 3 ranks; training: full-batch gradient descent on
cross-entropy with L2 weight decay.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .behavior import SCENARIOS, VOTER_TYPES, VoterProfile, build_profile, scenario_or_none
from .core import Poll, UtilityFunction, preference_order

FEATURE_DIM = 25
NUM_CLASSES = 3
HIDDEN_SIZE = 3

_RATIO_KEYS = ("TRT", "CMP", "LB")


def features_from_parts(
    u: UtilityFunction, s: Poll, profile: VoterProfile
) -> np.ndarray:
    if u.m != 3 or s.m != 3:
        raise ValueError("the classifier is defined for exactly three candidates")
    prefs = preference_order(u.values)
    if len(set(u.values)) != 3:
        raise ValueError("features need strictly ordered utilities")
    norm = s.n if s.n > 0 else (sum(s.scores) or 1)
    by_rank = [s.scores[c] / norm for c in prefs]
    shares = by_rank
    gaps = [
        by_rank[0] - by_rank[1],
        by_rank[0] - by_rank[2],
        by_rank[1] - by_rank[2],
    ]
    pref_encoding = [c / 2.0 for c in prefs]
    leader_gap = [(max(s.scores) - s.scores[prefs[0]]) / norm]
    scenario = scenario_or_none(u, s)
    scenario_onehot = [1.0 if scenario == label else 0.0 for label in SCENARIOS]
    ratios = [profile.a_ratios.get(k, 0.0) for k in _RATIO_KEYS]
    present = [1.0 if k in profile.a_ratios else 0.0 for k in _RATIO_KEYS]
    type_onehot = [1.0 if profile.voter_type == t else 0.0 for t in VOTER_TYPES]
    vec = np.array(
        shares + gaps + pref_encoding + leader_gap + scenario_onehot + ratios + present + type_onehot,
        dtype=float,
    )
    assert vec.shape == (FEATURE_DIM,)
    return vec


def extract_features(record, profile: VoterProfile) -> np.ndarray:
    """Feature vector for one record; the profile must come from other rounds."""
    return features_from_parts(record.utilities, record.poll, profile)


def action_rank(record) -> int:
    prefs = preference_order(record.utilities.values)
    return prefs.index(record.action)


@dataclass
class Network:
    """Weights of the 3-unit hidden layer classifier."""

    w1: np.ndarray  # (hidden, input)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (classes, hidden)
    b2: np.ndarray  # (classes,)

    def __post_init__(self) -> None:
        for name in ("w1", "b1", "w2", "b2"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in {name}")
            setattr(self, name, arr)
        if self.w1.shape[0] != self.b1.shape[0] or self.w2.shape != (
            self.b2.shape[0],
            self.w1.shape[0],
        ):
            raise ValueError("inconsistent layer shapes")

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    def to_dict(self) -> dict:
        return {
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2.tolist(),
        }

    @classmethod
    def from_dict(cls, spec: dict) -> "Network":
        return cls(
            w1=np.array(spec["w1"], dtype=float),
            b1=np.array(spec["b1"], dtype=float),
            w2=np.array(spec["w2"], dtype=float),
            b2=np.array(spec["b2"], dtype=float),
        )


@dataclass(frozen=True)
class Hyperparams:
    epochs: int = 500
    learning_rate: float = 0.1
    seed: int = 0
    l2: float = 1e-4

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.learning_rate <= 0 or self.l2 < 0:
            raise ValueError("invalid hyperparameters")


def init_network(
    input_dim: int,
    seed: int,
    hidden: int = HIDDEN_SIZE,
    classes: int = NUM_CLASSES,
) -> Network:
    rng = np.random.default_rng(seed)
    return Network(
        w1=rng.uniform(-0.5, 0.5, size=(hidden, input_dim)),
        b1=rng.uniform(-0.5, 0.5, size=hidden),
        w2=rng.uniform(-0.5, 0.5, size=(classes, hidden)),
        b2=rng.uniform(-0.5, 0.5, size=classes),
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward(net: Network, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    hidden = _sigmoid(X @ net.w1.T + net.b1)
    logits = hidden @ net.w2.T + net.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return hidden, log_probs


def predict_proba(net: Network, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != net.input_dim:
        raise ValueError(f"expected {net.input_dim} features, got {X.shape[1]}")
    _, log_probs = _forward(net, X)
    return np.exp(log_probs)


def predict(net: Network, features: np.ndarray) -> int:
    """Most probable class (ties to the lowest index)."""
    probs = predict_proba(net, features)
    return int(np.argmax(probs[0]))


def loss_and_grads(
    net: Network, X: np.ndarray, y: np.ndarray, l2: float = 1e-4
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy plus L2 penalty, and its exact gradients.

    The L2 term is 0.5 * l2 * (|w1|^2 + |w2|^2); biases are not decayed.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    n = X.shape[0]
    hidden, log_probs = _forward(net, X)
    ce = -log_probs[np.arange(n), y].mean()
    loss = ce + 0.5 * l2 * (float((net.w1 ** 2).sum()) + float((net.w2 ** 2).sum()))

    probs = np.exp(log_probs)
    probs[np.arange(n), y] -= 1.0
    d_logits = probs / n
    dw2 = d_logits.T @ hidden + l2 * net.w2
    db2 = d_logits.sum(axis=0)
    d_hidden = d_logits @ net.w2
    d_pre = d_hidden * hidden * (1.0 - hidden)
    dw1 = d_pre.T @ X + l2 * net.w1
    db1 = d_pre.sum(axis=0)
    return float(loss), {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}


def train(
    X: np.ndarray,
    y: np.ndarray,
    hyper: Hyperparams = Hyperparams(),
    hidden: int = HIDDEN_SIZE,
    classes: int = NUM_CLASSES,
) -> Network:
    """Full-batch gradient descent; deterministic for a fixed seed."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a non-empty 2-d feature matrix")
    if y.shape != (X.shape[0],) or y.min() < 0 or y.max() >= classes:
        raise ValueError("targets must be class indices aligned with X")
    net = init_network(X.shape[1], seed=hyper.seed, hidden=hidden, classes=classes)
    for epoch in range(hyper.epochs):
        loss, grads = loss_and_grads(net, X, y, hyper.l2)
        if not np.isfinite(loss):
            raise ArithmeticError(
                f"non-finite loss {loss} at epoch {epoch}; "
                f"lr={hyper.learning_rate}, l2={hyper.l2}"
            )
        net.w1 -= hyper.learning_rate * grads["w1"]
        net.b1 -= hyper.learning_rate * grads["b1"]
        net.w2 -= hyper.learning_rate * grads["w2"]
        net.b2 -= hyper.learning_rate * grads["b2"]
    return net


def fit_network(
    records: Sequence, hyper: Hyperparams = Hyperparams()
) -> tuple[Network, VoterProfile]:
    """Train on one voter's records; the profile comes from the same records."""
    if not records:
        raise ValueError("cannot fit a network on zero records")
    profile = build_profile(records[0].voter_id, records)
    X = np.stack([extract_features(rec, profile) for rec in records])
    y = np.array([action_rank(rec) for rec in records], dtype=int)
    net = train(X, y, hyper)
    return net, profile


def predict_record(net: Network, profile: VoterProfile, record) -> int:
    """Predicted candidate (not rank) for a held-out record."""
    rank = predict(net, extract_features(record, profile))
    prefs = preference_order(record.utilities.values)
    return prefs[rank]
