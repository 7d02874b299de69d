"""Small differentiable policies standing in for the reasoner and discriminator."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from gar.toyenv.task import OPERATORS, STYLES, oracle_step_check, step_style


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_entropy(z: np.ndarray) -> float:
    """Exact entropy (nats) of softmax(z) for a single row."""
    z = z - z.max()
    e = np.exp(z)
    total = e.sum()
    p = e / total
    return float(math.log(total) - float(p @ z))


class SoftmaxTables:
    """A set of categorical tables; an action is ``(table, row, column)``.

    Probabilities are softmax(logits / temperature) row-wise.
    """

    def __init__(self, tables: Sequence[np.ndarray], temperature: float = 1.0):
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.tables = [np.array(t, dtype=float) for t in tables]
        self.temperature = float(temperature)

    def get_params(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tables])

    def set_params(self, params: np.ndarray) -> None:
        pos = 0
        for t in self.tables:
            t[...] = params[pos:pos + t.size].reshape(t.shape)
            pos += t.size

    def probs(self, table: int, row: int) -> np.ndarray:
        return np.exp(log_softmax(self.tables[table][row] / self.temperature))

    def logprobs(self, actions: np.ndarray) -> np.ndarray:
        actions = np.asarray(actions, dtype=int).reshape(-1, 3)
        out = np.empty(len(actions))
        for t, table in enumerate(self.tables):
            mask = actions[:, 0] == t
            if not mask.any():
                continue
            rows, cols = actions[mask, 1], actions[mask, 2]
            lp = log_softmax(table[rows] / self.temperature)
            out[mask] = lp[np.arange(len(rows)), cols]
        return out

    def grad_logprobs(self, actions: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        actions = np.asarray(actions, dtype=int).reshape(-1, 3)
        grads = []
        for t, table in enumerate(self.tables):
            g = np.zeros_like(table)
            mask = actions[:, 0] == t
            if mask.any():
                rows, cols = actions[mask, 1], actions[mask, 2]
                c = coeffs[mask]
                p = np.exp(log_softmax(table[rows] / self.temperature))
                local = -p * c[:, None]
                local[np.arange(len(rows)), cols] += c
                np.add.at(g, rows, local / self.temperature)
            grads.append(g.ravel())
        return np.concatenate(grads)


CANDIDATE_TABLE = 0
STYLE_TABLE = 1


class ToyReasonerPolicy(SoftmaxTables):
    """Per (step position, operator) categorical over V candidate results, plus
    a position-independent choice of phrasing style.

    Candidate 0 is always the correct result; candidate k is offset from it by
    ``candidate_offsets(V)[k]``.
    """

    def __init__(
        self,
        length: int,
        vocab_size: int = 16,
        init_correct_prob: float = 1.0 / 16,
        init_terse_prob: float = 0.5,
        temperature: float = 1.0,
    ):
        self.length = length
        self.vocab_size = vocab_size
        cand = np.zeros((length * len(OPERATORS), vocab_size))
        cand[:, 0] = _logit_for_prob(init_correct_prob, vocab_size)
        style = np.zeros((1, len(STYLES)))
        style[0, STYLES.index("terse")] = _logit_for_prob(init_terse_prob, len(STYLES))
        super().__init__([cand, style], temperature)

    @staticmethod
    def row(position: int, op: str) -> int:
        return position * len(OPERATORS) + OPERATORS.index(op)

    def correct_probs(self) -> np.ndarray:
        """P(correct candidate) for every (position, operator) row."""
        return np.exp(log_softmax(self.tables[CANDIDATE_TABLE] / self.temperature))[:, 0]

    def style_probs(self) -> np.ndarray:
        return self.probs(STYLE_TABLE, 0)


def _logit_for_prob(p: float, width: int) -> float:
    """Logit for one entry so it gets probability ``p`` against width-1 zeros."""
    if not 0.0 < p < 1.0:
        raise ValueError("probability must lie in (0, 1)")
    return math.log(p * (width - 1) / (1.0 - p))


# feature layout: intercept, step-arithmetic residual indicator (1 when the
# step is wrong), verbose style marker
FEATURES = ("bias", "arith_bad", "verbose")
N_FEATURES = len(FEATURES)
RESIDUAL = FEATURES.index("arith_bad")


def slice_features(text: str, modulus: int) -> np.ndarray:
    bad = 1 - oracle_step_check(text, modulus)
    verbose = step_style(text) == "verbose"
    return np.array([1.0, bad, verbose], dtype=float)


def style_features(text: str) -> np.ndarray:
    verbose = step_style(text) == "verbose"
    return np.array([verbose, not verbose], dtype=float)


_P_LO, _P_HI = np.finfo(float).tiny, np.nextafter(1.0, 0.0)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # saturated logits would round to exactly 0 or 1; keep the open interval
    return np.clip(0.5 * (1.0 + np.tanh(0.5 * z)), _P_LO, _P_HI)


def _log_sigmoid(z: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -z)


class ToyDiscriminatorPolicy:
    """Logistic discriminator with a shared residual weight and two heads.

    verdict:    P(slice is sound) = sigmoid(x . w_verdict    + w_shared * x_bad)
    provenance: P(slice is real)  = sigmoid(x . w_provenance + w_shared * x_bad)

    Only the arithmetic-error weight is shared. Sound slices have x_bad = 0, so
    they never move it; intercepts and style markers belong to each head.
    Parameters are ``[w_shared, w_verdict, w_provenance]``.

    An action is ``(head, X, decisions)``: binary decisions for the rows of X.
    """

    HEADS = ("verdict", "provenance")

    def __init__(self, n_features: int = N_FEATURES):
        self.n_features = n_features
        self.w_shared = 0.0
        self.w_verdict = np.zeros(n_features)
        self.w_provenance = np.zeros(n_features)

    def get_params(self) -> np.ndarray:
        return np.concatenate([[self.w_shared], self.w_verdict, self.w_provenance])

    def set_params(self, params: np.ndarray) -> None:
        n = self.n_features
        self.w_shared = float(params[0])
        self.w_verdict = np.array(params[1:1 + n], dtype=float)
        self.w_provenance = np.array(params[1 + n:1 + 2 * n], dtype=float)

    def head_weights(self, head: str) -> np.ndarray:
        if head == "verdict":
            w = self.w_verdict.copy()
        elif head == "provenance":
            w = self.w_provenance.copy()
        else:
            raise ValueError(f"unknown head {head!r}")
        w[RESIDUAL] += self.w_shared
        return w

    def logits(self, X: np.ndarray, head: str) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.head_weights(head)

    def verdict_prob(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.logits(X, "verdict"))

    def real_prob(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.logits(X, "provenance"))

    def logprobs(self, actions) -> np.ndarray:
        head, X, d = actions
        z = self.logits(X, head)
        d = np.asarray(d, dtype=float)
        return d * _log_sigmoid(z) + (1.0 - d) * _log_sigmoid(-z)

    def _pack(self, head: str, g: np.ndarray) -> np.ndarray:
        zero = np.zeros(self.n_features)
        if head == "verdict":
            return np.concatenate([[g[RESIDUAL]], g, zero])
        return np.concatenate([[g[RESIDUAL]], zero, g])

    def grad_logprobs(self, actions, coeffs: np.ndarray) -> np.ndarray:
        head, X, d = actions
        X = np.asarray(X, dtype=float)
        resid = np.asarray(d, dtype=float) - _sigmoid(self.logits(X, head))
        return self._pack(head, (coeffs * resid) @ X)

    def gan_reward_grad(self, X_ref: np.ndarray, X_gen: np.ndarray, clamp_delta: float) -> np.ndarray:
        """Exact gradient of mean log D(ref) + mean log(1 - D(gen)) with clamping."""
        p_ref = self.real_prob(X_ref)
        p_gen = self.real_prob(X_gen)
        # d/dz log sigmoid(z) = 1 - p ; d/dz log(1 - sigmoid(z)) = -p ; zero where clamped
        c_ref = np.where((p_ref > clamp_delta) & (p_ref < 1 - clamp_delta), 1.0 - p_ref, 0.0)
        c_gen = np.where((p_gen > clamp_delta) & (p_gen < 1 - clamp_delta), -p_gen, 0.0)
        g = c_ref @ X_ref / len(X_ref) + c_gen @ X_gen / len(X_gen)
        return self._pack("provenance", g)

    def sft_grad(self, X: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """Gradient of the mean log-likelihood of binary soundness labels (verdict head)."""
        resid = np.asarray(labels, dtype=float) - self.verdict_prob(X)
        return self._pack("verdict", resid @ X / len(X))
