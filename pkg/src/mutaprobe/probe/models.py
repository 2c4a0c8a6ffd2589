"""Probe families: L2 logistic regression and a two-layer MLP.

The logistic probe minimizes mean log-loss plus ||w||^2 / (2 C n) with an
unpenalized intercept, by deterministic L-BFGS-B to gradient tolerance
1e-6; inputs are standardized on the training data only. The MLP recipe:
two rectified-linear hidden layers with dropout after each, decoupled
weight decay, batch size 64, learning rate 1e-3, up to 200 epochs with
early stopping on a 10% stratified inner validation split (patience 20).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from ..errors import DegenerateStratification, ValidationError
from .split import stratified_holdout_indices

FAMILIES = ("logistic_l2", "mlp_2layer")


@dataclass(frozen=True)
class ProbeConfig:
    family: str
    layer_index: int
    C: float | None = None
    hidden_sizes: tuple[int, int] | None = None
    dropout: float | None = None
    weight_decay: float | None = None

    def __post_init__(self):
        if self.family == "logistic_l2":
            ok = self.C is not None and self.C > 0 and self.hidden_sizes is None
            ok = ok and self.dropout is None and self.weight_decay is None
        elif self.family == "mlp_2layer":
            ok = self.hidden_sizes is not None and self.C is None
            ok = ok and self.dropout is not None and 0.0 <= self.dropout < 1.0
            ok = ok and self.weight_decay is not None and self.weight_decay >= 0.0
        else:
            raise ValidationError(f"unknown probe family {self.family!r}")
        if not ok:
            raise ValidationError(f"config fields do not match family {self.family!r}")

    def label(self) -> str:
        if self.family == "logistic_l2":
            return f"logistic_l2@L{self.layer_index}:C={self.C}"
        h1, h2 = self.hidden_sizes
        return (
            f"mlp_2layer@L{self.layer_index}:h={h1}x{h2}"
            f",do={self.dropout},wd={self.weight_decay}"
        )


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std == 0.0, 1.0, std)
        return cls(mean=mean, std=std)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std


def logistic_loss_and_grad(
    params: np.ndarray, X: np.ndarray, y01: np.ndarray, C: float
) -> tuple[float, np.ndarray]:
    """Mean log-loss + ||w||^2/(2Cn), intercept unpenalized; analytic gradient."""
    n = X.shape[0]
    w, b = params[:-1], params[-1]
    z = X @ w + b
    signs = 2.0 * y01 - 1.0
    loss = float(np.mean(np.logaddexp(0.0, -signs * z)) + (w @ w) / (2.0 * C * n))
    residual = (expit(z) - y01) / n
    grad_w = X.T @ residual + w / (C * n)
    grad_b = residual.sum()
    return loss, np.append(grad_w, grad_b)


class LogisticProbe:
    def __init__(self, w: np.ndarray, b: float, standardizer: Standardizer | None, converged: bool):
        self.w = w
        self.b = b
        self.standardizer = standardizer
        self.converged = converged

    def score(self, X: np.ndarray) -> np.ndarray:
        if self.standardizer is not None:
            X = self.standardizer.transform(X)
        return X @ self.w + self.b


def train_logistic(
    X: np.ndarray,
    y: np.ndarray,
    C: float,
    standardize: bool = True,
    gtol: float = 1e-6,
    max_iter: int = 2000,
) -> LogisticProbe:
    y01 = np.asarray(y, dtype=float)
    st = Standardizer.fit(X) if standardize else None
    Xs = st.transform(X) if st is not None else np.asarray(X, dtype=float)
    x0 = np.zeros(X.shape[1] + 1)
    result = minimize(
        logistic_loss_and_grad,
        x0,
        args=(Xs, y01, C),
        jac=True,
        method="L-BFGS-B",
        options={"gtol": gtol, "ftol": 1e-14, "maxiter": max_iter},
    )
    return LogisticProbe(w=result.x[:-1], b=float(result.x[-1]), standardizer=st, converged=bool(result.success))


class MlpProbe:
    def __init__(self, model, converged: bool = True):
        self._model = model
        self.converged = converged

    def score(self, X: np.ndarray) -> np.ndarray:
        import torch

        self._model.eval()
        with torch.no_grad():
            logits = self._model(torch.from_numpy(np.ascontiguousarray(X, dtype=np.float32)))
        return logits.squeeze(1).numpy().astype(float)


def train_mlp(
    X: np.ndarray,
    y: np.ndarray,
    hidden_sizes: tuple[int, int],
    dropout: float,
    weight_decay: float,
    seed: int,
    lr: float = 1e-3,
    batch_size: int = 64,
    epochs: int = 200,
    patience: int = 20,
    val_fraction: float = 0.10,
) -> MlpProbe:
    import torch

    torch.manual_seed(seed & 0x7FFFFFFFFFFFFFFF)
    y = np.asarray(y, dtype=bool)
    try:
        train_idx, val_idx = stratified_holdout_indices(y, seed, val_fraction)
    except DegenerateStratification:
        # too small for an inner split: train the full epoch budget instead
        train_idx, val_idx = np.arange(len(y)), None

    h1, h2 = hidden_sizes
    model = torch.nn.Sequential(
        torch.nn.Linear(X.shape[1], h1),
        torch.nn.ReLU(),
        torch.nn.Dropout(dropout),
        torch.nn.Linear(h1, h2),
        torch.nn.ReLU(),
        torch.nn.Dropout(dropout),
        torch.nn.Linear(h2, 1),
    )
    optimizer = torch.optim.AdamW(model.parameters(), lr=lr, weight_decay=weight_decay)
    loss_fn = torch.nn.BCEWithLogitsLoss()

    Xt = torch.from_numpy(np.ascontiguousarray(X[train_idx], dtype=np.float32))
    yt = torch.from_numpy(y[train_idx].astype(np.float32)).unsqueeze(1)
    if val_idx is not None:
        Xv = torch.from_numpy(np.ascontiguousarray(X[val_idx], dtype=np.float32))
        yv = torch.from_numpy(y[val_idx].astype(np.float32)).unsqueeze(1)

    order_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 1])))
    best_val = np.inf
    best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    best_epoch = -1
    for epoch in range(epochs):
        model.train()
        perm = order_rng.permutation(len(train_idx))
        for start in range(0, len(perm), batch_size):
            batch = torch.from_numpy(perm[start : start + batch_size])
            optimizer.zero_grad()
            loss = loss_fn(model(Xt[batch]), yt[batch])
            loss.backward()
            optimizer.step()
        if val_idx is None:
            continue
        model.eval()
        with torch.no_grad():
            val_loss = float(loss_fn(model(Xv), yv))
        if val_loss < best_val:
            best_val = val_loss
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            best_epoch = epoch
        elif epoch - best_epoch >= patience:
            break
    if val_idx is not None:
        model.load_state_dict(best_state)
    return MlpProbe(model=model)


def train_probe(X: np.ndarray, y: np.ndarray, config: ProbeConfig, seed: int):
    """Fit one probe on already-layer-selected features."""
    if config.family == "logistic_l2":
        return train_logistic(X, y, C=config.C)
    return train_mlp(
        X,
        y,
        hidden_sizes=config.hidden_sizes,
        dropout=config.dropout,
        weight_decay=config.weight_decay,
        seed=seed,
    )
