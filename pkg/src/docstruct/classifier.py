"""Small layer-grouped classifier on numpy: tanh hidden groups feeding either
a plain linear softmax head or an angular-margin head with unit-norm class
directions. Forward passes expose every group's output so a frozen copy and a
trainee can be compared group by group; gradients are written by hand and are
checked against central finite differences in the test suite."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MODEL_FORMAT_VERSION = 1

SOFTMAX = "softmax"
A_SOFTMAX = "a_softmax"

_COS_CLIP = 1e-7


@dataclass(frozen=True)
class MultiTaskTerms:
    """Loss components of a joint classification + sequence-recognition
    objective: classification loss, recognition loss, and the target text
    length that normalizes the recognition term."""

    classification: float
    recognition: float
    target_length: int

    def __post_init__(self):
        if self.classification < 0 or self.recognition < 0:
            raise ValueError("loss terms must be non-negative")
        if self.target_length < 1:
            raise ValueError(f"target_length must be >= 1, got {self.target_length}")


def multitask_loss(terms: MultiTaskTerms, weight: float = 1.0) -> float:
    """weight * classification + recognition / target_length."""
    return weight * terms.classification + terms.recognition / terms.target_length


class GroupedClassifier:
    """Affine-plus-tanh groups with a final linear group of class logits.

    hidden_weights[i] has shape (out_i, in_i); the head weight has shape
    (n_classes, hidden_out). For the a_softmax head the stored rows are free
    parameters normalized to unit length at use, so the effective class
    directions always sit on the unit sphere; the head carries no bias.
    """

    def __init__(self, hidden_weights, hidden_biases, head_weight, head_bias, head=SOFTMAX):
        if head not in (SOFTMAX, A_SOFTMAX):
            raise ValueError(f"unknown head type {head!r}")
        if len(hidden_weights) != len(hidden_biases) or not hidden_weights:
            raise ValueError("need at least one hidden group with matching biases")
        if head == A_SOFTMAX and head_bias is not None:
            raise ValueError("the angular head does not take a bias")
        self.hidden_weights = [np.asarray(w, dtype=np.float64) for w in hidden_weights]
        self.hidden_biases = [np.asarray(b, dtype=np.float64) for b in hidden_biases]
        self.head_weight = np.asarray(head_weight, dtype=np.float64)
        self.head_bias = None if head_bias is None else np.asarray(head_bias, dtype=np.float64)
        self.head = head
        dims = [w.shape for w in self.hidden_weights]
        for i in range(1, len(dims)):
            if dims[i][1] != dims[i - 1][0]:
                raise ValueError(f"group {i} input dim {dims[i][1]} != previous output {dims[i - 1][0]}")
        if self.head_weight.shape[1] != dims[-1][0]:
            raise ValueError("head input dim does not match last hidden group")

    @classmethod
    def create(cls, input_dim: int, hidden_dims: tuple[int, ...] = (64, 64),
               n_classes: int = 2, head: str = SOFTMAX, seed: int = 0) -> "GroupedClassifier":
        rng = np.random.default_rng(seed)
        ws, bs = [], []
        prev = input_dim
        for d in hidden_dims:
            ws.append(rng.normal(0.0, 1.0 / np.sqrt(prev), size=(d, prev)))
            bs.append(np.zeros(d))
            prev = d
        head_w = rng.normal(0.0, 1.0 / np.sqrt(prev), size=(n_classes, prev))
        head_b = np.zeros(n_classes) if head == SOFTMAX else None
        return cls(ws, bs, head_w, head_b, head=head)

    @property
    def n_groups(self) -> int:
        return len(self.hidden_weights) + 1

    @property
    def n_classes(self) -> int:
        return self.head_weight.shape[0]

    @property
    def input_dim(self) -> int:
        return self.hidden_weights[0].shape[1]

    def copy(self) -> "GroupedClassifier":
        return GroupedClassifier(
            [w.copy() for w in self.hidden_weights],
            [b.copy() for b in self.hidden_biases],
            self.head_weight.copy(),
            None if self.head_bias is None else self.head_bias.copy(),
            head=self.head,
        )

    # -- forward ---------------------------------------------------------

    def _head_directions(self):
        """Unit-norm rows of the angular head; all-zero rows stay zero and
        contribute a zero logit."""
        norms = np.linalg.norm(self.head_weight, axis=1)
        safe = np.where(norms > 0.0, norms, 1.0)
        return self.head_weight / safe[:, None], norms

    def forward_trace(self, x: np.ndarray):
        X = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if X.shape[1] != self.input_dim:
            raise ValueError(f"feature dim {X.shape[1]} != model input dim {self.input_dim}")
        hs = []
        h = X
        for w, b in zip(self.hidden_weights, self.hidden_biases):
            h = np.tanh(h @ w.T + b)
            hs.append(h)
        if self.head == SOFTMAX:
            logits = h @ self.head_weight.T + self.head_bias
            w_hat = None
        else:
            w_hat, _ = self._head_directions()
            logits = h @ w_hat.T
        return X, hs, logits, w_hat

    def forward(self, x: np.ndarray):
        """All group outputs plus the final class logits. The last group
        output is the logits themselves (final group is linear)."""
        single = np.asarray(x).ndim == 1
        _, hs, logits, _ = self.forward_trace(x)
        outputs = hs + [logits]
        if single:
            outputs = [o[0] for o in outputs]
            return outputs, outputs[-1]
        return outputs, logits

    def logits(self, x: np.ndarray) -> np.ndarray:
        _, _, logits, _ = self.forward_trace(x)
        return logits

    def rank_classes(self, x: np.ndarray) -> list[list[int]]:
        """Per-sample class indices by descending logit (stable ties)."""
        logits = self.logits(x)
        order = np.argsort(-logits, axis=1, kind="stable")
        return [row.tolist() for row in order]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)

    # -- parameter plumbing -----------------------------------------------

    def param_arrays(self) -> list[np.ndarray]:
        params = []
        for w, b in zip(self.hidden_weights, self.hidden_biases):
            params.extend([w, b])
        params.append(self.head_weight)
        if self.head_bias is not None:
            params.append(self.head_bias)
        return params

    def params_vector(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.param_arrays()])

    def set_params_vector(self, vec: np.ndarray) -> None:
        offset = 0
        for p in self.param_arrays():
            n = p.size
            p[...] = vec[offset : offset + n].reshape(p.shape)
            offset += n
        if offset != vec.size:
            raise ValueError(f"parameter vector length {vec.size} != model size {offset}")

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "head": self.head,
            "n_classes": self.n_classes,
            "groups": [
                {"weight": w.tolist(), "bias": b.tolist()}
                for w, b in zip(self.hidden_weights, self.hidden_biases)
            ],
            "head_weight": self.head_weight.tolist(),
            "head_bias": None if self.head_bias is None else self.head_bias.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GroupedClassifier":
        if data.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format {data.get('format_version')!r}")
        return cls(
            [g["weight"] for g in data["groups"]],
            [g["bias"] for g in data["groups"]],
            data["head_weight"],
            data["head_bias"],
            head=data["head"],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "GroupedClassifier":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# -- losses ----------------------------------------------------------------


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_loss(logits: np.ndarray, label: int) -> float:
    """Cross-entropy of the softmax distribution for one sample."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise ValueError("softmax_loss takes a single logit vector")
    if not (0 <= label < logits.shape[0]):
        raise ValueError(f"label {label} out of range for {logits.shape[0]} classes")
    return float(-_log_softmax(logits)[label])


def _margin_pieces(cos_target: np.ndarray, margin: int):
    """psi(theta) for the multiplicative angular margin, plus the pieces the
    gradient needs. psi extends cos(m*theta) monotonically over [0, pi] as
    (-1)^k cos(m*theta) - 2k on the k-th sector [k*pi/m, (k+1)*pi/m]."""
    c = np.clip(cos_target, -1.0 + _COS_CLIP, 1.0 - _COS_CLIP)
    theta = np.arccos(c)
    k = np.minimum(np.floor(theta * margin / np.pi), margin - 1)
    sign = np.where(k % 2 == 0, 1.0, -1.0)
    psi = sign * np.cos(margin * theta) - 2.0 * k
    # d f_target / d u where f = r * psi(arccos(u / r)):
    dpsi_du = margin * sign * np.sin(margin * theta) / np.sin(theta)
    return c, psi, dpsi_du


def asoftmax_loss(head_weight: np.ndarray, feature: np.ndarray, label: int, margin: int) -> float:
    """Angular-margin cross-entropy for one sample at the head.

    Class weights are row-normalized so logits are ||feature|| * cos(theta_j);
    the target logit is replaced by ||feature|| * psi(theta_label). margin=1
    reduces to plain softmax over the normalized-weight logits.
    """
    if margin < 1 or int(margin) != margin:
        raise ValueError(f"margin must be a positive integer, got {margin}")
    w = np.asarray(head_weight, dtype=np.float64)
    h = np.asarray(feature, dtype=np.float64)
    if h.ndim != 1:
        raise ValueError("asoftmax_loss takes a single feature vector")
    if not (0 <= label < w.shape[0]):
        raise ValueError(f"label {label} out of range for {w.shape[0]} classes")
    norms = np.linalg.norm(w, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    w_hat = w / safe[:, None]
    r = np.linalg.norm(h)
    logits = w_hat @ h
    cos_target = logits[label] / r if r > 0 else 0.0
    _, psi, _ = _margin_pieces(np.asarray([cos_target]), int(margin))
    f = logits.copy()
    f[label] = r * psi[0]
    return float(-_log_softmax(f)[label])


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _zero_grads(model: GroupedClassifier) -> list[np.ndarray]:
    return [np.zeros_like(p) for p in model.param_arrays()]


def _backward(model: GroupedClassifier, X, hs, g_hidden, g_logits, w_hat, dh_top_extra=None,
              g_what_extra=None):
    """Reverse pass. g_hidden[i] is the gradient injected at hidden group i's
    output (or None); g_logits at the final group. For the angular head,
    dh_top_extra / g_what_extra carry the margin path's direct contributions.
    Returns gradients aligned with param_arrays()."""
    grads = _zero_grads(model)
    n_hidden = len(model.hidden_weights)
    head_w_idx = 2 * n_hidden
    h_top = hs[-1]
    dh = np.zeros_like(h_top)
    if model.head == SOFTMAX:
        if g_logits is not None:
            grads[head_w_idx] += g_logits.T @ h_top
            grads[head_w_idx + 1] += g_logits.sum(axis=0)
            dh += g_logits @ model.head_weight
    else:
        g_what = np.zeros_like(model.head_weight)
        if g_logits is not None:
            g_what += g_logits.T @ h_top
            dh += g_logits @ w_hat
        if g_what_extra is not None:
            g_what += g_what_extra
        if dh_top_extra is not None:
            dh += dh_top_extra
        # through row normalization: only the component orthogonal to the
        # direction survives, scaled by 1/norm; zero rows stay frozen
        norms = np.linalg.norm(model.head_weight, axis=1)
        safe = np.where(norms > 0.0, norms, 1.0)
        radial = (g_what * w_hat).sum(axis=1, keepdims=True)
        grads[head_w_idx] += np.where(
            (norms > 0.0)[:, None], (g_what - radial * w_hat) / safe[:, None], 0.0
        )
    for i in reversed(range(n_hidden)):
        if g_hidden is not None and g_hidden[i] is not None:
            dh = dh + g_hidden[i]
        dz = dh * (1.0 - hs[i] ** 2)
        prev = X if i == 0 else hs[i - 1]
        grads[2 * i] += dz.T @ prev
        grads[2 * i + 1] += dz.sum(axis=0)
        dh = dz @ model.hidden_weights[i]
    return grads


def softmax_task_grads(model: GroupedClassifier, X: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over a batch and its parameter gradients."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    if np.any(y < 0) or np.any(y >= model.n_classes):
        raise ValueError("labels out of range")
    Xin, hs, logits, w_hat = model.forward_trace(X)
    n = X.shape[0]
    logp = _log_softmax(logits)
    loss = float(-logp[np.arange(n), y].mean())
    g_logits = _softmax_rows(logits)
    g_logits[np.arange(n), y] -= 1.0
    g_logits /= n
    grads = _backward(model, Xin, hs, None, g_logits, w_hat)
    return loss, grads


def asoftmax_task_grads(model: GroupedClassifier, X: np.ndarray, y: np.ndarray, margin: int,
                        blend_lambda: float = 0.0):
    """Mean angular-margin loss over a batch and its parameter gradients.

    blend_lambda > 0 anneals the margin the way the original construction is
    trained: the target logit becomes (lambda * u + r * psi) / (1 + lambda),
    easing from the plain angular logit toward the margin form as lambda
    decays. blend_lambda = 0 is the pure margin loss.
    """
    if model.head != A_SOFTMAX:
        raise ValueError("asoftmax_task_grads requires an a_softmax head")
    if margin < 1 or int(margin) != margin:
        raise ValueError(f"margin must be a positive integer, got {margin}")
    if blend_lambda < 0:
        raise ValueError("blend_lambda must be >= 0")
    margin = int(margin)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    if np.any(y < 0) or np.any(y >= model.n_classes):
        raise ValueError("labels out of range")
    Xin, hs, logits, w_hat = model.forward_trace(X)
    n = X.shape[0]
    h_top = hs[-1]
    r = np.linalg.norm(h_top, axis=1)
    r_safe = np.where(r > 0.0, r, 1.0)
    idx = np.arange(n)
    u = logits[idx, y]
    c, psi, dpsi_du = _margin_pieces(u / r_safe, margin)
    f = logits.copy()
    if blend_lambda > 0:
        f[idx, y] = (blend_lambda * u + r * psi) / (1.0 + blend_lambda)
    else:
        f[idx, y] = r * psi
    logp = _log_softmax(f)
    loss = float(-logp[idx, y].mean())

    G = _softmax_rows(f)
    G[idx, y] -= 1.0
    G /= n
    g_target = G[idx, y].copy()
    # split the target coordinate between the plain-logit path and the
    # margin path according to the blend
    plain_share = blend_lambda / (1.0 + blend_lambda)
    margin_share = 1.0 / (1.0 + blend_lambda)
    G[idx, y] = g_target * plain_share
    g_margin = g_target * margin_share

    df_du = dpsi_du
    df_dr = psi - c * df_du
    dh_extra = (
        (g_margin * df_du)[:, None] * w_hat[y]
        + (g_margin * df_dr)[:, None] * (h_top / r_safe[:, None])
    )
    g_what_extra = np.zeros_like(model.head_weight)
    np.add.at(g_what_extra, y, (g_margin * df_du)[:, None] * h_top)
    grads = _backward(model, Xin, hs, None, G, w_hat,
                      dh_top_extra=dh_extra, g_what_extra=g_what_extra)
    return loss, grads


def task_loss_and_grads(model: GroupedClassifier, X, y, margin: int = 4,
                        blend_lambda: float = 0.0):
    if model.head == SOFTMAX:
        return softmax_task_grads(model, X, y)
    return asoftmax_task_grads(model, X, y, margin, blend_lambda)


def batch_task_loss(model: GroupedClassifier, X, y, margin: int = 4,
                    blend_lambda: float = 0.0) -> float:
    return task_loss_and_grads(model, X, y, margin, blend_lambda)[0]
