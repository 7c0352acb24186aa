"""Domain-adversarially invariant meta-learning of the residual basis.

Each iteration picks one wind condition, draws two disjoint batches, solves
a ridge least-squares problem for the condition's linear coefficients on the
adaptation batch, and trains the basis network on the other batch with the
coefficients held as a differentiable function of the basis.  A discriminator
tries to recover the condition index from the basis output; the basis is
penalised for making that easy.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .errors import DivergedLoss, InvariantViolation

log = logging.getLogger(__name__)

PHI_DIMS = (11, 50, 60, 50, 4)
DISC_HIDDEN = 128
N_AXES = 3


@dataclass
class DaimlConfig:
    alpha: float = 0.1
    eta: float = 0.5
    gamma: float = 10.0
    batch_adapt: int = 128
    batch_train: int = 256
    lr_phi: float = 0.0005
    lr_h: float = 0.001
    momentum: float = 0.9
    epochs: int = 500
    # iterations per condition in one epoch
    iters_per_condition: int = 1
    patience: int | None = None
    # relative drop in the monitored loss that counts as progress for ``patience``
    min_improvement: float = 1e-4
    damping: float = 1e-6
    spectral_bound: float = 1.0
    seed: int = 0
    diag_batches: int = 16

    def validate(self, min_subdataset=None):
        if self.alpha < 0:
            raise InvariantViolation("alpha must be >= 0")
        if not 0 < self.eta <= 1:
            raise InvariantViolation("eta must be in (0, 1]")
        for name in ("gamma", "batch_adapt", "batch_train", "lr_phi", "lr_h", "epochs",
                     "iters_per_condition", "damping", "spectral_bound"):
            if getattr(self, name) <= 0:
                raise InvariantViolation(f"{name} must be positive")
        if min_subdataset is not None and self.batch_adapt + self.batch_train > min_subdataset:
            raise InvariantViolation(
                f"batches ({self.batch_adapt}+{self.batch_train}) exceed the smallest "
                f"subdataset ({min_subdataset} samples)")


@dataclass
class AdaptSolution:
    a_star: np.ndarray        # (12,) = [a_x; a_y; a_z]
    coeffs: np.ndarray        # (4, 3) column j holds the coefficients of axis j
    raw: np.ndarray           # (4, 3) before the norm cap
    gram: np.ndarray          # damped Gram matrix
    conditioning: float
    capped: bool


def least_squares_adapt(phi_outputs, labels, damping=1e-6, gamma=None) -> AdaptSolution:
    """Per-axis ridge regression sharing one Gram matrix, then the norm cap."""
    Phi = np.asarray(phi_outputs, dtype=float)
    Y = np.asarray(labels, dtype=float)
    if Phi.shape[0] < Phi.shape[1]:
        raise ValueError(f"need at least {Phi.shape[1]} samples, got {Phi.shape[0]}")
    G = Phi.T @ Phi + damping * np.eye(Phi.shape[1])
    raw = np.linalg.solve(G, Phi.T @ Y)
    coeffs = raw
    norm = np.linalg.norm(raw)
    capped = gamma is not None and norm > gamma
    if capped:
        coeffs = raw * (gamma / norm)
    return AdaptSolution(coeffs.T.ravel().copy(), coeffs, raw, G,
                         float(np.linalg.eigvalsh(G)[0]), bool(capped))


def adapt_gradient_through_ls(phi_outputs, labels, sol: AdaptSolution, grad_coeffs, gamma=None):
    """Pull a gradient on the (capped) coefficients back onto the adaptation-batch basis outputs.

    Implicit differentiation of (Phi^T Phi + damping I) A = Phi^T Y, composed
    with the Jacobian of A -> gamma A / |A| when the cap is active.
    """
    Phi = np.asarray(phi_outputs, dtype=float)
    Y = np.asarray(labels, dtype=float)
    g = np.asarray(grad_coeffs, dtype=float)
    if sol.capped:
        raw = sol.raw
        n = np.linalg.norm(raw)
        g = (gamma / n) * (g - (np.sum(g * raw) / (n * n)) * raw)
    Z = np.linalg.solve(sol.gram, g)
    return (Y - Phi @ sol.raw) @ Z.T - Phi @ Z @ sol.raw.T


def coefficients_matrix(a_star):
    """(12,) coefficient vector -> (4, 3) per-axis matrix."""
    return np.asarray(a_star, float).reshape(N_AXES, -1).T


def predict_force(phi_outputs, a_star):
    """blockdiag(phi, phi, phi) @ a for a batch of basis outputs."""
    return np.asarray(phi_outputs) @ coefficients_matrix(a_star)


def f_loss_and_grads(phi_net, h_net, xa, ya, xb, yb, k, cfg: DaimlConfig):
    """Basis-training objective on one batch pair and its gradients.

    The objective is the batch mean of |y - phi a*|^2 - alpha CE(h(phi(x)), k)
    over the training batch, with a* solved on the adaptation batch.
    Returns (f_loss, adversarial CE, solution, network gradients).
    """
    na, nb = xa.shape[0], xb.shape[0]
    out, cache = nn.forward(phi_net, np.vstack([xa, xb]))
    Phi_a, Phi_b = out[:na], out[na:]
    sol = least_squares_adapt(Phi_a, ya, cfg.damping, cfg.gamma)
    resid = yb - Phi_b @ sol.coeffs
    f_loss = float(np.sum(resid * resid)) / nb
    g_coeffs = (-2.0 / nb) * Phi_b.T @ resid
    g_phi_b = (-2.0 / nb) * resid @ sol.coeffs.T
    g_phi_a = adapt_gradient_through_ls(Phi_a, ya, sol, g_coeffs, cfg.gamma)
    ce = 0.0
    if cfg.alpha > 0 and h_net is not None:
        logits, hcache = nn.forward(h_net, Phi_b)
        ce, g_logits = nn.cross_entropy_batch(logits, np.full(nb, k))
        ce /= nb
        g_in = nn.backward(h_net, hcache, g_logits / nb).input
        g_phi_b = g_phi_b - cfg.alpha * g_in
    grads = nn.backward(phi_net, cache, np.vstack([g_phi_a, g_phi_b]))
    return f_loss, ce, sol, grads


def _condition_f_loss(phi_net, x, y, cfg, fit=None):
    """Mean per-sample |y - phi a*|^2 with a* solved on ``fit`` = (x, y), default (x, y) itself."""
    Phi = phi_net(x)
    fx, fy = fit if fit is not None else (x, y)
    Phi_fit = Phi if fit is None else phi_net(fx)
    sol = least_squares_adapt(Phi_fit, fy, cfg.damping, cfg.gamma)
    r = y - Phi @ sol.coeffs
    return float(np.mean(np.sum(r * r, axis=1)))


def mean_f_loss(phi_net, subsets, cfg, fit_subsets=None):
    """Average per-sample f-loss across conditions.

    Coefficients are fitted per condition on ``fit_subsets`` when given
    (held-out evaluation), otherwise on the evaluated samples themselves.
    """
    if fit_subsets is None:
        return float(np.mean([_condition_f_loss(phi_net, x, y, cfg) for x, y in subsets]))
    return float(np.mean([_condition_f_loss(phi_net, x, y, cfg, fit)
                          for (x, y), fit in zip(subsets, fit_subsets)]))


def cluster_ratio(points_by_condition):
    """Mean distance between condition centroids over mean within-condition spread.

    Undefined (NaN) with fewer than two conditions.
    """
    if len(points_by_condition) < 2:
        return float("nan")
    cents = np.array([p.mean(axis=0) for p in points_by_condition])
    spread = np.mean([np.mean(np.linalg.norm(p - c, axis=1))
                      for p, c in zip(points_by_condition, cents)])
    K = len(cents)
    inter = np.mean([np.linalg.norm(cents[i] - cents[j])
                     for i in range(K) for j in range(i + 1, K)])
    return float(inter / spread) if spread > 0 else float("inf")


@dataclass
class TrainingLog:
    rows: list = field(default_factory=list)

    COLUMNS = ("epoch", "train_f_loss", "val_f_loss", "cluster_metric", "discriminator_acc")

    def append(self, **row):
        self.rows.append(row)

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for r in self.rows:
                w.writerow([r["epoch"]] + [f"{r[c]:.10g}" for c in self.COLUMNS[1:]])


@dataclass
class TrainResult:
    phi: nn.Mlp
    h: nn.Mlp
    log: TrainingLog
    config: DaimlConfig


class _Diagnostics:
    """Fixed evaluation subsets so per-epoch numbers are comparable."""

    def __init__(self, train, val, cfg, rng):
        self.cfg = cfg
        self.train_sub = []
        for x, y in train:
            idx = np.sort(rng.choice(len(x), size=min(len(x), 1000), replace=False))
            self.train_sub.append((x[idx], y[idx]))
        self.val = val
        self.batches = [[rng.choice(len(x), size=cfg.batch_adapt, replace=False)
                         for _ in range(cfg.diag_batches)] for x, _ in train]
        self.train = train

    def evaluate(self, phi, h, epoch):
        cfg = self.cfg
        a_points = []
        for (x, y), batches in zip(self.train, self.batches):
            pts = [least_squares_adapt(phi(x[b]), y[b], cfg.damping, cfg.gamma).a_star
                   for b in batches]
            a_points.append(np.array(pts))
        correct = total = 0
        for k, (x, _) in enumerate(self.train_sub):
            pred = np.argmax(h(phi(x)), axis=1)
            correct += int(np.sum(pred == k))
            total += len(x)
        return dict(epoch=epoch,
                    train_f_loss=mean_f_loss(phi, self.train_sub, cfg),
                    val_f_loss=(mean_f_loss(phi, self.val, cfg, self.train_sub)
                                if self.val else float("nan")),
                    cluster_metric=cluster_ratio(a_points),
                    discriminator_acc=correct / total)


def train(dataset, config: DaimlConfig, validation=None, callback=None) -> TrainResult:
    """Run the alternating adaptation / basis / discriminator loop.

    ``dataset`` and ``validation`` are FlightDatasets (or lists of (x, y)
    array pairs, one per condition).  ``callback(epoch, phi, h)`` runs after
    every epoch, including epoch 0 before any update.
    """
    subsets = _as_arrays(dataset)
    val = _as_arrays(validation) if validation is not None else None
    K = len(subsets)
    config.validate(min(len(x) for x, _ in subsets))
    rng = np.random.default_rng(config.seed)
    phi = nn.Mlp.init(PHI_DIMS, rng, spectral_bound=config.spectral_bound)
    h = nn.Mlp.init((PHI_DIMS[-1], DISC_HIDDEN, K), rng)
    opt_phi = nn.Sgd(config.lr_phi, config.momentum)
    opt_h = nn.Sgd(config.lr_h, config.momentum)
    diag = _Diagnostics(subsets, val, config, np.random.default_rng(config.seed + 1))
    history = TrainingLog()

    history.append(**diag.evaluate(phi, h, 0))
    if callback:
        callback(0, phi, h)
    best, since_best = np.inf, 0
    na, nb = config.batch_adapt, config.batch_train
    for epoch in range(1, config.epochs + 1):
        for k in rng.permutation(K):
            x, y = subsets[k]
            for _ in range(config.iters_per_condition):
                idx = rng.choice(len(x), size=na + nb, replace=False)
                ia, ib = idx[:na], idx[na:]
                f_loss, _, _, grads = f_loss_and_grads(phi, h, x[ia], y[ia], x[ib], y[ib],
                                                       k, config)
                if not np.isfinite(f_loss):
                    raise DivergedLoss(f"f-loss became non-finite at epoch {epoch}")
                opt_phi.step(phi, grads)
                nn.spectral_normalize(phi)
                if rng.random() <= config.eta:
                    logits, hcache = nn.forward(h, phi(x[ib]))
                    _, g = nn.cross_entropy_batch(logits, np.full(nb, k))
                    opt_h.step(h, nn.backward(h, hcache, g / nb))
        row = diag.evaluate(phi, h, epoch)
        if not np.isfinite(row["train_f_loss"]):
            raise DivergedLoss(f"f-loss became non-finite at epoch {epoch}")
        history.append(**row)
        if callback:
            callback(epoch, phi, h)
        if config.patience:
            score = row["val_f_loss"] if val else row["train_f_loss"]
            if score < best * (1.0 - config.min_improvement):
                best, since_best = score, 0
            else:
                since_best += 1
                if since_best >= config.patience:
                    log.info("validation plateau, stopping at epoch %d", epoch)
                    break
    return TrainResult(phi, h, history, config)


def _as_arrays(dataset):
    if hasattr(dataset, "subdatasets"):
        return [(s.x, s.y) for s in dataset.subdatasets]
    return [(s.x, s.y) if hasattr(s, "x") else (np.asarray(s[0], float), np.asarray(s[1], float))
            for s in dataset]


def save_model(path, result: TrainResult):
    meta = {"config": asdict(result.config),
            "final": result.log.rows[-1] if result.log.rows else {}}
    nn.save_checkpoint(path, {"phi": result.phi, "h": result.h}, meta)


def load_basis(path):
    nets, meta = nn.load_checkpoint(path)
    return nets["phi"], meta
