"""Layer-by-layer gradient verification against central finite differences.

Each layer kind gets a batch of random small instances; for every instance
the analytic gradients of a randomly weighted scalar readout are compared
against central differences, for the input and every parameter tensor.
"""

from __future__ import annotations

import numpy as np

from . import layers as L
from .gradcheck import FiniteDiffReport, finite_diff_check
from .layers import softmax_cross_entropy
from .model import ModelConfig, build_model
from .tensor import Tensor

LAYER_KINDS = (
    "conv1d",
    "maxpool",
    "gap",
    "dense",
    "batchnorm",
    "layernorm",
    "gru_step",
    "bigru",
    "softmax_ce",
)


def _merge(target: FiniteDiffReport, part: FiniteDiffReport) -> None:
    target.n_checked += part.n_checked
    target.max_rel_err = max(target.max_rel_err, part.max_rel_err)
    target.failures.extend(part.failures)


def _check_tensors(report, f, tensors, tol, max_entries=None, rng=None):
    """FD-check the scalar function ``f`` against each tensor in ``tensors``."""
    for t in tensors:
        _merge(report, finite_diff_check(f, t, tol=tol, max_entries=max_entries, rng=rng))


def _readout(y: Tensor, rng: np.random.Generator) -> Tensor:
    return (y * Tensor(rng.normal(size=y.shape))).sum()


def check_layer_kind(kind: str, tol: float = 1e-4, instances: int = 20,
                     seed: int = 2024) -> FiniteDiffReport:
    rng = np.random.default_rng([seed, LAYER_KINDS.index(kind)])
    report = FiniteDiffReport(name=kind, tol=tol)

    for _ in range(instances):
        if kind == "conv1d":
            b, cin, cout = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
            t, f = rng.integers(4, 10), int(rng.choice([1, 2, 3, 5]))
            conv = L.Conv1D(f, int(cin), int(cout), rng)
            x = Tensor(rng.normal(size=(b, cin, t)))
            _check_tensors(report, lambda _: _readout(conv(x), np.random.default_rng(7)),
                           [x, conv.w, conv.b], tol)
        elif kind == "maxpool":
            b, c, t = rng.integers(1, 3), rng.integers(1, 4), rng.integers(4, 10)
            x = Tensor(rng.normal(size=(b, c, t)))
            _check_tensors(report, lambda _: _readout(L.maxpool1d(x, 2), np.random.default_rng(7)),
                           [x], tol)
        elif kind == "gap":
            b, c, t = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 9)
            x = Tensor(rng.normal(size=(b, c, t)))
            _check_tensors(report, lambda _: _readout(L.global_avg_pool(x), np.random.default_rng(7)),
                           [x], tol)
        elif kind == "dense":
            b, din, dout = rng.integers(1, 4), rng.integers(1, 5), rng.integers(1, 5)
            act = "relu" if rng.random() < 0.5 else None
            dense = L.Dense(int(din), int(dout), rng, activation=act)
            x = Tensor(rng.normal(size=(b, din)))
            _check_tensors(report, lambda _: _readout(dense(x), np.random.default_rng(7)),
                           [x, dense.w, dense.b], tol)
        elif kind == "batchnorm":
            c = int(rng.integers(1, 4))
            bn = L.BatchNorm(c)
            if rng.random() < 0.5:
                x = Tensor(rng.normal(size=(int(rng.integers(2, 5)), c)) * 2.0 + 1.0)
            else:
                x = Tensor(rng.normal(size=(int(rng.integers(2, 4)), int(rng.integers(2, 5)), c)))
            _check_tensors(report,
                           lambda _: _readout(bn.forward(x, train=True), np.random.default_rng(7)),
                           [x, bn.gamma, bn.beta], tol)
        elif kind == "layernorm":
            b, feats = rng.integers(1, 4), rng.integers(2, 6)
            ln = L.LayerNorm(int(feats))
            x = Tensor(rng.normal(size=(b, feats)))
            _check_tensors(report, lambda _: _readout(ln(x), np.random.default_rng(7)),
                           [x, ln.gamma, ln.beta], tol)
        elif kind == "gru_step":
            b, din, d = rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 5)
            cell = L.GRUCell(int(din), int(d), rng)
            x = Tensor(rng.normal(size=(b, din)))
            h = Tensor(rng.normal(size=(b, d)))
            tensors = [x, h] + [p for _, p in cell.params()]
            _check_tensors(report, lambda _: _readout(cell.step(x, h), np.random.default_rng(7)),
                           tensors, tol)
        elif kind == "bigru":
            b, t = rng.integers(1, 3), rng.integers(1, 5)
            din, d = rng.integers(1, 4), rng.integers(1, 4)
            full = rng.random() < 0.5
            layer = L.BiGRU(int(din), int(d), rng, return_sequences=full)
            x = Tensor(rng.normal(size=(b, t, din)))
            tensors = [x] + [p for _, p in layer.params()]
            _check_tensors(report, lambda _: _readout(layer(x), np.random.default_rng(7)),
                           tensors, tol)
        elif kind == "softmax_ce":
            b, k = int(rng.integers(1, 5)), int(rng.integers(2, 6))
            x = Tensor(rng.normal(size=(b, k)) * 3.0)
            labels = rng.integers(0, k, size=b)
            _check_tensors(report, lambda _: softmax_cross_entropy(x, labels)[0], [x], tol)
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
    return report


def check_tiny_model(tol: float = 1e-3, seed: int = 11, max_entries: int = 5,
                     config: ModelConfig | None = None) -> FiniteDiffReport:
    """Finite-difference check through the assembled full model (tiny widths).

    Checks the input batch plus a sampled subset of entries of every
    parameter tensor, in training mode (batch statistics active).
    """
    cfg = config or ModelConfig("full", seq_len=16, num_classes=3, seed=seed).scaled(8)
    model = build_model(cfg)
    rng = np.random.default_rng([seed, 99])
    # Deep ReLU stacks shrink activations toward zero; biases initialized at 0
    # would leave many preactivations within the finite-difference step of a
    # kink, where central differences are invalid. Jitter zero-initialized
    # vectors to check gradients at a generic smooth point.
    for _, p in model.named_params():
        if p.data.ndim == 1 and not p.data.any():
            p.data = rng.uniform(0.02, 0.08, size=p.data.shape)
    x = Tensor(rng.normal(size=(2, cfg.seq_len)))
    labels = rng.integers(0, cfg.num_classes, size=2)

    def loss_fn(_):
        return softmax_cross_entropy(model.forward(x, train=True), labels)[0]

    report = FiniteDiffReport(name="full_model", tol=tol)
    _merge(report, finite_diff_check(loss_fn, x, tol=tol, max_entries=2 * cfg.seq_len,
                                     rng=rng))
    for _, p in model.named_params():
        _merge(report, finite_diff_check(loss_fn, p, tol=tol, max_entries=max_entries,
                                         rng=rng))
    return report


def run_all_checks(tol: float = 1e-4, instances: int = 20, seed: int = 2024,
                   kinds=None, include_model: bool = True) -> list[FiniteDiffReport]:
    reports = [
        check_layer_kind(kind, tol=tol, instances=instances, seed=seed)
        for kind in (kinds or LAYER_KINDS)
    ]
    if include_model:
        reports.append(check_tiny_model(tol=max(tol, 1e-3), seed=seed))
    return reports
