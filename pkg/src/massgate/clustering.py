"""Group operations by resource type.

Each operation becomes a boolean vector over the stemmed vocabulary of its
input and output field names, and a mixture of multivariate Bernoulli
distributions is fitted by EM for every candidate cluster count. The count
with the lowest BIC wins.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyVocabulary
from .spec_model import OperationDesc
from .stemmer import stem

EPS = 1e-6
TOL = 1e-6
MAX_ITER = 500


@dataclass(frozen=True)
class Vocabulary:
    terms: tuple[str, ...]

    def __post_init__(self):
        if list(self.terms) != sorted(set(self.terms)):
            raise ValueError("vocabulary terms must be sorted and unique")

    def __len__(self) -> int:
        return len(self.terms)

    def index(self, term: str) -> int:
        return self.terms.index(term)


@dataclass(frozen=True)
class EncodedOperation:
    operation_id: str
    bits: tuple[bool, ...]


@dataclass
class ClusterModel:
    k: int
    mixing_weights: np.ndarray
    bernoulli_params: np.ndarray
    assignments: dict[str, int]
    log_likelihood: float
    seed: int
    bic: float = math.nan
    history: list[float] = field(default_factory=list)
    bic_by_k: dict[int, float] = field(default_factory=dict)

    def members(self, cluster: int) -> list[str]:
        return [op for op, c in self.assignments.items() if c == cluster]

    def partition(self) -> frozenset[frozenset[str]]:
        groups: dict[int, set[str]] = {}
        for op, c in self.assignments.items():
            groups.setdefault(c, set()).add(op)
        return frozenset(frozenset(g) for g in groups.values())


def operation_terms(op: OperationDesc) -> set[str]:
    """Stemmed leaf names of every input and output field of ``op``."""
    names = {path.name for path, _ in op.input_fields()}
    names |= {path.name for path, _ in op.output_fields()}
    return {stem(n) for n in names if n}


def build_encoding(
    ops: Sequence[OperationDesc],
) -> tuple[Vocabulary, list[EncodedOperation]]:
    if not ops:
        raise ValueError("no operations to encode")
    terms_by_op = [operation_terms(op) for op in ops]
    vocab = Vocabulary(tuple(sorted(set().union(*terms_by_op))))
    if not vocab.terms:
        raise EmptyVocabulary("no operation declares any parameter")
    encoded = [
        EncodedOperation(op.operation_id, tuple(t in terms for t in vocab.terms))
        for op, terms in zip(ops, terms_by_op)
    ]
    return vocab, encoded


# ------------------------------------------------------------------- EM


@dataclass
class _Fit:
    weights: np.ndarray
    mu: np.ndarray
    log_likelihood: float
    history: list[float]
    resp: np.ndarray


def _joint_log_prob(X: np.ndarray, weights: np.ndarray, mu: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_w = np.log(weights)
    return X @ np.log(mu).T + (1.0 - X) @ np.log1p(-mu).T + log_w


def _logsumexp(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=1, keepdims=True)))[:, 0]


def _init_responsibilities(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Hard assignment to k-means++ seeds chosen on Hamming distance, smoothed."""
    n = X.shape[0]
    centers = [int(rng.integers(n))]
    dist = np.abs(X - X[centers[0]]).sum(axis=1)
    for _ in range(1, k):
        weights = dist**2
        total = weights.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=weights / total))
        else:
            free = [i for i in range(n) if i not in centers]
            nxt = int(rng.choice(free))
        centers.append(nxt)
        dist = np.minimum(dist, np.abs(X - X[nxt]).sum(axis=1))
    to_center = np.stack([np.abs(X - X[c]).sum(axis=1) for c in centers], axis=1)
    hard = to_center.argmin(axis=1)
    resp = np.full((n, k), 0.1 / k)
    resp[np.arange(n), hard] += 0.9
    return resp


def _m_step(X: np.ndarray, resp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nk = resp.sum(axis=0)
    weights = nk / nk.sum()
    with np.errstate(invalid="ignore", divide="ignore"):
        mu = (resp.T @ X) / nk[:, None]
    mu = np.where(nk[:, None] > 0, mu, 0.5)
    return weights, np.clip(mu, EPS, 1.0 - EPS)


def fit_em(
    X: np.ndarray, k: int, rng: np.random.Generator, tol: float = TOL, max_iter: int = MAX_ITER
) -> _Fit:
    """One EM run; ``history`` holds the log-likelihood after every M-step."""
    resp = _init_responsibilities(X, k, rng)
    history: list[float] = []
    for _ in range(max_iter):
        weights, mu = _m_step(X, resp)
        joint = _joint_log_prob(X, weights, mu)
        norm = _logsumexp(joint)
        ll = float(norm.sum())
        resp = np.exp(joint - norm[:, None])
        history.append(ll)
        if len(history) > 1 and ll - history[-2] < tol:
            break
    return _Fit(weights, mu, history[-1], history, resp)


def bic(log_likelihood: float, k: int, d: int, n: int) -> float:
    n_params = (k - 1) + k * d
    return -2.0 * log_likelihood + n_params * math.log(n)


def cluster(
    encoded: Sequence[EncodedOperation], k_max: int = 10, restarts: int = 10, seed: int = 0
) -> ClusterModel:
    """Fit Bernoulli mixtures for k = 1..min(k_max, n) and keep the best BIC.

    Rows are put in a canonical order first, so the result does not depend on
    the order of ``encoded``. Each (k, restart) pair gets its own generator
    derived from ``seed``.
    """
    if not encoded:
        raise ValueError("nothing to cluster")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    rows = sorted(encoded, key=lambda e: (e.bits, e.operation_id))
    X = np.array([e.bits for e in rows], dtype=float)
    n, d = X.shape

    best_k: tuple[float, int, _Fit] | None = None
    bic_by_k: dict[int, float] = {}
    for k in range(1, min(k_max, n) + 1):
        best_fit: _Fit | None = None
        for r in range(restarts if k > 1 else 1):
            fit = fit_em(X, k, np.random.default_rng([seed, k, r]))
            if best_fit is None or fit.log_likelihood > best_fit.log_likelihood:
                best_fit = fit
        score = bic(best_fit.log_likelihood, k, d, n)
        bic_by_k[k] = score
        if best_k is None or score < best_k[0]:
            best_k = (score, k, best_fit)

    score, k, fit = best_k
    labels = fit.resp.argmax(axis=1)
    # relabel clusters by first appearance in canonical order
    order: list[int] = []
    for lab in labels:
        if lab not in order:
            order.append(int(lab))
    order += [c for c in range(k) if c not in order]
    remap = {old: new for new, old in enumerate(order)}
    assignments = {e.operation_id: remap[int(lab)] for e, lab in zip(rows, labels)}
    return ClusterModel(
        k=k,
        mixing_weights=fit.weights[order],
        bernoulli_params=fit.mu[order],
        assignments={e.operation_id: assignments[e.operation_id] for e in encoded},
        log_likelihood=fit.log_likelihood,
        seed=seed,
        bic=score,
        history=fit.history,
        bic_by_k=bic_by_k,
    )


# ---------------------------------------------------------------- naming

_SKIP_SEGMENT = re.compile(r"^(v\d+(\.\d+)*|api|rest)$", re.IGNORECASE)


def path_nouns(path: str) -> set[str]:
    """Stemmed non-parameter path segments, minus version/api prefixes."""
    out = set()
    for seg in path.split("/"):
        if not seg or seg.startswith("{") or _SKIP_SEGMENT.match(seg):
            continue
        try:
            out.add(stem(seg))
        except ValueError:
            continue
    return out


def name_clusters(model: ClusterModel, ops: Mapping[str, OperationDesc]) -> dict[int, str]:
    """Label each cluster with the path noun shared by most of its operations.

    Ties go to the alphabetically first noun.
    """
    labels = {}
    for c in sorted(set(model.assignments.values())):
        counts: Counter[str] = Counter()
        for op_id in model.members(c):
            counts.update(path_nouns(ops[op_id].path))
        if counts:
            labels[c] = min(counts, key=lambda t: (-counts[t], t))
        else:
            labels[c] = f"cluster{c}"
    return labels


# ------------------------------------------------------------ debug dumps


def encoding_csv(vocab: Vocabulary, encoded: Iterable[EncodedOperation]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["operation_id", *vocab.terms])
    for e in encoded:
        writer.writerow([e.operation_id, *(int(b) for b in e.bits)])
    return buf.getvalue()


def cluster_report(model: ClusterModel, labels: Mapping[int, str]) -> str:
    return json.dumps(
        {
            "k": model.k,
            "seed": model.seed,
            "log_likelihood": model.log_likelihood,
            "bic": model.bic,
            "bic_by_k": {str(k): v for k, v in model.bic_by_k.items()},
            "mixing_weights": [float(w) for w in model.mixing_weights],
            "clusters": {
                str(c): {"label": labels.get(c, ""), "operations": model.members(c)}
                for c in sorted(set(model.assignments.values()))
            },
        },
        indent=2,
    )
