"""Adversarial feature vectors from a small tabular GAN, and training-set contamination.

One GAN is trained per malicious activity on z-scored feature columns.
Generator: noise -> [Linear -> BatchNorm -> ReLU] x 2 -> Linear.
Discriminator: [Linear -> LeakyReLU -> Dropout] x 2 -> Linear (logit).
Both sides minimise binary cross-entropy; the generator uses the
non-saturating objective -log D(G(z)).
"""
from __future__ import annotations

import hashlib
import json
import warnings
import zlib
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import LabeledDataset

MIN_FIT_ROWS = 10
MIN_ELIGIBLE_ACCOUNTS = 10  # eligibility is strictly more than this
RECOMMENDED_EPOCHS = 300
BN_EPS = 1e-5
CONTAMINATION_MODES = ("fraction_1", "fraction_5", "all_80")


class InsufficientDataError(ValueError):
    pass


class IneligibleActivityError(ValueError):
    def __init__(self, activity, n):
        self.activity = activity
        super().__init__(f"activity {activity!r} has {n} accounts; adversarial generation needs more than "
                         f"{MIN_ELIGIBLE_ACCOUNTS}")


@dataclass(frozen=True)
class GanConfig:
    noise_dim: int = 32
    hidden_widths: tuple[int, ...] = (128, 128)
    epochs: int = 1000
    batch_size: int = 32
    lr_generator: float = 2e-4
    lr_discriminator: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.9
    leaky_slope: float = 0.2
    dropout: float = 0.5
    bn_momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(h) for h in self.hidden_widths))
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")


def derive_seed(seed: int, label: str) -> int:
    """Stable child seed for a named sub-task."""
    return int(np.random.default_rng([seed, zlib.crc32(label.encode("utf-8"))]).integers(2**31 - 1))


# --- building blocks -------------------------------------------------------

def _linear_init(rng, a, b):
    bound = 1.0 / np.sqrt(a)
    return rng.uniform(-bound, bound, size=(a, b)), rng.uniform(-bound, bound, size=b)


def _bce_logits(z, target):
    """Mean BCE on logits and its gradient."""
    loss = float(np.mean(np.logaddexp(0.0, z) - target * z))
    p = 1.0 / (1.0 + np.exp(-z))
    return loss, (p - target) / len(z)


class _Adam:
    def __init__(self, params, lr, b1, b2, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for i, g in enumerate(grads):
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g
            params[i] -= self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)


class _GeneratorNet:
    """Parameters laid out as [W1, b1, g1, be1, W2, b2, g2, be2, W3, b3]."""

    def __init__(self, noise_dim, widths, out_dim, rng):
        self.params = []
        sizes = [noise_dim, *widths]
        for a, b in zip(sizes[:-1], sizes[1:]):
            W, bb = _linear_init(rng, a, b)
            self.params += [W, bb, np.ones(b), np.zeros(b)]
        W, bb = _linear_init(rng, sizes[-1], out_dim)
        self.params += [W, bb]
        self.running = [(np.zeros(b), np.ones(b)) for b in widths]
        self.n_hidden = len(widths)

    def forward(self, z, train: bool, momentum=0.9):
        h = z
        cache = []
        for i in range(self.n_hidden):
            W, b, g, be = self.params[4 * i: 4 * i + 4]
            a = h @ W + b
            if train:
                mu = a.mean(axis=0)
                var = a.var(axis=0)
                rm, rv = self.running[i]
                n = len(a)
                unbiased = var * n / (n - 1) if n > 1 else var
                self.running[i] = (momentum * rm + (1 - momentum) * mu, momentum * rv + (1 - momentum) * unbiased)
            else:
                mu, var = self.running[i]
            inv = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (a - mu) * inv
            out = g * xhat + be
            r = np.maximum(out, 0.0)
            cache.append((h, xhat, inv, out))
            h = r
        W, b = self.params[-2:]
        cache.append((h,))
        return h @ W + b, cache

    def backward(self, dout, cache):
        grads = [None] * len(self.params)
        (h,) = cache[-1]
        W = self.params[-2]
        grads[-2] = h.T @ dout
        grads[-1] = dout.sum(axis=0)
        d = dout @ W.T
        for i in reversed(range(self.n_hidden)):
            h, xhat, inv, out = cache[i]
            W, b, g, be = self.params[4 * i: 4 * i + 4]
            d = d * (out > 0)
            grads[4 * i + 2] = np.sum(d * xhat, axis=0)
            grads[4 * i + 3] = d.sum(axis=0)
            dxhat = d * g
            n = len(dxhat)
            da = inv / n * (n * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0))
            grads[4 * i] = h.T @ da
            grads[4 * i + 1] = da.sum(axis=0)
            d = da @ W.T
        return grads


class _DiscriminatorNet:
    def __init__(self, in_dim, widths, rng, slope, dropout):
        self.params = []
        sizes = [in_dim, *widths, 1]
        for a, b in zip(sizes[:-1], sizes[1:]):
            self.params += list(_linear_init(rng, a, b))
        self.slope = slope
        self.dropout = dropout

    def forward(self, x, rng=None):
        h = x
        cache = []
        n_layers = len(self.params) // 2
        keep = 1.0 - self.dropout
        for i in range(n_layers):
            W, b = self.params[2 * i: 2 * i + 2]
            a = h @ W + b
            if i == n_layers - 1:
                cache.append((h, None, None))
                return a[:, 0], cache
            r = np.where(a > 0, a, self.slope * a)
            mask = None
            if rng is not None and self.dropout > 0:
                mask = (rng.random(r.shape) < keep) / keep
                r = r * mask
            cache.append((h, a, mask))
            h = r
        raise ValueError("empty discriminator")

    def backward(self, dlogit, cache, need_input_grad=False):
        grads = [None] * len(self.params)
        d = dlogit[:, None]
        for i in reversed(range(len(cache))):
            h, a, mask = cache[i]
            if a is not None:
                if mask is not None:
                    d = d * mask
                d = d * np.where(a > 0, 1.0, self.slope)
            W = self.params[2 * i]
            grads[2 * i] = h.T @ d
            grads[2 * i + 1] = d.sum(axis=0)
            if i > 0 or need_input_grad:
                d = d @ W.T
        return grads, (d if need_input_grad else None)


# --- public API ------------------------------------------------------------

class Generator:
    """Fitted generator plus the column transform of its training rows."""

    def __init__(self, cfg: GanConfig, net: _GeneratorNet, mean, std, history=None):
        self.cfg = cfg
        self.net = net
        self.mean = np.asarray(mean, dtype=float)
        self.std = np.asarray(std, dtype=float)
        self.history = history or {}

    @property
    def dim(self) -> int:
        return len(self.mean)

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def inverse_transform(self, Z):
        return np.asarray(Z, dtype=float) * self.std + self.mean

    def state(self) -> dict:
        return {
            "format_version": 1,
            "config": asdict(self.cfg),
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
            "params": [{"shape": list(p.shape), "data": [float(v) for v in p.ravel()]} for p in self.net.params],
            "running": [[[float(v) for v in m], [float(v) for v in s]] for m, s in self.net.running],
        }

    def to_json(self) -> str:
        return json.dumps(self.state(), sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Generator":
        st = json.loads(text)
        cfg = GanConfig(**st["config"])
        net = _GeneratorNet.__new__(_GeneratorNet)
        net.params = [np.array(p["data"], dtype=float).reshape(p["shape"]) for p in st["params"]]
        net.running = [(np.array(m), np.array(s)) for m, s in st["running"]]
        net.n_hidden = len(net.running)
        return cls(cfg, net, st["mean"], st["std"])

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()[:16]


def gan_fit(rows, cfg: GanConfig = GanConfig()) -> Generator:
    """Fit one GAN on the rows of a single activity (at least 10 rows)."""
    X = np.asarray(rows, dtype=float)
    if X.ndim != 2:
        raise ValueError("rows must be a 2-D matrix")
    m, d = X.shape
    if m < MIN_FIT_ROWS:
        raise InsufficientDataError(f"insufficient feature vectors: got {m}, need at least {MIN_FIT_ROWS}")
    if cfg.epochs < RECOMMENDED_EPOCHS:
        warnings.warn(f"{cfg.epochs} epochs; more than {RECOMMENDED_EPOCHS} is recommended", stacklevel=2)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    Z = (X - mean) / std

    rng = np.random.default_rng(cfg.seed)
    G = _GeneratorNet(cfg.noise_dim, cfg.hidden_widths, d, rng)
    D = _DiscriminatorNet(d, cfg.hidden_widths, rng, cfg.leaky_slope, cfg.dropout)
    opt_g = _Adam(G.params, cfg.lr_generator, cfg.beta1, cfg.beta2)
    opt_d = _Adam(D.params, cfg.lr_discriminator, cfg.beta1, cfg.beta2)

    bs = min(cfg.batch_size, m)
    steps = max(1, m // bs)
    ones = np.ones(bs)
    target = np.concatenate([ones, np.zeros(bs)])
    hist = {"d_loss": [], "g_loss": [], "d_accuracy": []}
    for epoch in range(cfg.epochs):
        order = rng.permutation(m)
        for s in range(steps):
            real = Z[order[s * bs:(s + 1) * bs]]
            # discriminator step
            fake, _ = G.forward(rng.standard_normal((bs, cfg.noise_dim)), True, cfg.bn_momentum)
            # real and fake halves share one pass; each half's BCE is a mean over bs rows
            logits, cd = D.forward(np.vstack([real, fake]), rng)
            loss_rf, g_rf = _bce_logits(logits, target)
            gd, _ = D.backward(2.0 * g_rf, cd)
            opt_d.step(D.params, gd)
            lr_, lf_ = logits[:bs], logits[bs:]
            # generator step
            fake, cg = G.forward(rng.standard_normal((bs, cfg.noise_dim)), True, cfg.bn_momentum)
            lg, cd = D.forward(fake, rng)
            loss_g, g_g = _bce_logits(lg, ones)
            _, dx = D.backward(g_g, cd, need_input_grad=True)
            opt_g.step(G.params, G.backward(dx, cg))
            d_loss = 2.0 * loss_rf
            if not (np.isfinite(d_loss) and np.isfinite(loss_g)):
                raise FloatingPointError(f"GAN diverged at epoch {epoch} step {s}: d_loss={d_loss}, g_loss={loss_g}")
        hist["d_loss"].append(float(d_loss))
        hist["g_loss"].append(float(loss_g))
        hist["d_accuracy"].append(float((np.sum(lr_ > 0) + np.sum(lf_ <= 0)) / (2 * bs)))
    return Generator(cfg, G, mean, std, hist)


def _sample_rows(gen: Generator, n: int, seed: int) -> np.ndarray:
    z = np.random.default_rng(seed).standard_normal((n, gen.cfg.noise_dim))
    out, _ = gen.net.forward(z, train=False)
    return gen.inverse_transform(out)


@dataclass(frozen=True)
class AdversarialBatch:
    activity: str
    rows: np.ndarray
    generator_fingerprint: str
    provenance: str = "Dg"


def gan_sample(gen: Generator, n: int, seed: int = 0, activity: str = "") -> AdversarialBatch:
    if n < 1:
        raise ValueError("n must be a positive integer")
    rows = _sample_rows(gen, n, seed)
    if not np.all(np.isfinite(rows)):
        raise FloatingPointError("generator produced non-finite values")
    return AdversarialBatch(activity, rows, gen.fingerprint)


def eligible_activities(dataset: LabeledDataset) -> list[str]:
    counts = dataset.malicious().activity_counts()
    return [a for a, c in counts.items() if c > MIN_ELIGIBLE_ACCOUNTS]


def make_dg(dataset: LabeledDataset, plan: dict[str, int], cfg: GanConfig = GanConfig(),
            generators: dict | None = None) -> LabeledDataset:
    """Fit one generator per planned activity on its malicious rows and sample the planned count.

    Fitted generators are stored into ``generators`` when a dict is given.
    """
    mal = dataset.malicious()
    counts = mal.activity_counts()
    for act in plan:
        if counts.get(act, 0) <= MIN_ELIGIBLE_ACCOUNTS:
            raise IneligibleActivityError(act, counts.get(act, 0))
    out = LabeledDataset.empty(dataset.dim)
    for act in sorted(plan):
        rows = mal.X[mal.activity_mask(act)]
        child = GanConfig(**{**asdict(cfg), "seed": derive_seed(cfg.seed, "fit:" + act)})
        gen = gan_fit(rows, child)
        if generators is not None:
            generators[act] = gen
        batch = gan_sample(gen, int(plan[act]), derive_seed(cfg.seed, "sample:" + act), act)
        n = len(batch.rows)
        out = out.concat(LabeledDataset(
            tuple(f"dg:{act}:{i:05d}" for i in range(n)), batch.rows, np.ones(n, dtype=int),
            (act,) * n, ("Dg",) * n))
    return out


def _round_half_up(n: int, percent: int) -> int:
    return (n * percent + 50) // 100


def contaminate_training(train: LabeledDataset, dg: LabeledDataset, mode: str, seed: int):
    """Add part of ``dg`` to ``train``; returns (contaminated train, remaining dg rows).

    fraction_1 / fraction_5 draw 1% / 5% of all dg rows uniformly without
    replacement; all_80 draws 80% of every activity's dg rows.  Counts are
    rounded half up.
    """
    if len(dg) == 0:
        raise ValueError("adversarial dataset is empty")
    if mode not in CONTAMINATION_MODES:
        raise ValueError(f"unknown contamination mode {mode!r}")
    rng = np.random.default_rng(seed)
    if mode == "all_80":
        drawn = []
        for act in sorted(set(dg.activities)):
            idx = np.flatnonzero(dg.activity_mask(act))
            k = _round_half_up(len(idx), 80)
            drawn.extend(rng.choice(idx, size=k, replace=False).tolist())
    else:
        k = _round_half_up(len(dg), 1 if mode == "fraction_1" else 5)
        if k == 0:
            raise ValueError(f"{mode} of {len(dg)} adversarial rows rounds to 0 rows")
        drawn = rng.choice(len(dg), size=k, replace=False).tolist()
    drawn_set = set(drawn)
    rest = [i for i in range(len(dg)) if i not in drawn_set]
    return train.concat(dg.take(sorted(drawn))), dg.take(rest)


__all__ = [
    "GanConfig", "Generator", "AdversarialBatch", "gan_fit", "gan_sample", "make_dg", "contaminate_training",
    "eligible_activities", "derive_seed", "InsufficientDataError", "IneligibleActivityError",
]
