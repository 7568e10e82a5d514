"""Learned smooth stand-in for the non-differentiable penalty sum.

A single sigmoid hidden layer with a linear output is trained on randomly
generated agent/threat layouts labeled with the smoothed penalty. Inputs are
the flattened coordinates (2N+2M wide, agents first); they are standardized
to [-1, 1] per coordinate and labels are scaled to [0, 1] over the training
split, with both affine maps stored in the net so callers only ever see raw
km coordinates and raw penalty values. The input gradient is analytic, which
is the whole point: it steers the agents.

The range-budget part of the penalty depends on per-agent path history that
the input vector cannot carry, so its training label uses a synthetic
history draw (it adds label noise the net cannot and need not explain) and
the exact ramp is applied analytically downstream at control time.
"""

import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np

from . import cost
from .scenario import ScenarioParams

WEIGHTS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SurrogateDataset:
    """Labeled layouts plus the input standardization fitted to the region."""

    inputs: np.ndarray        # (S, 2N+2M) raw km coordinates
    labels: np.ndarray        # (S,) raw smoothed penalty
    input_scale: np.ndarray
    input_shift: np.ndarray
    n_agents: int
    n_threats: int
    seed: int
    content_hash: str

    @property
    def size(self):
        return len(self.labels)


@dataclass(frozen=True)
class SurrogateNet:
    """sigmoid(x W^T + theta) . lam + mu, wrapped in affine input/label maps."""

    w_in: np.ndarray          # (J, D) hidden weights, row j is omega^j
    b_in: np.ndarray          # (J,) hidden biases theta
    w_out: np.ndarray         # (J,) output weights lambda
    b_out: float              # output bias mu
    input_scale: np.ndarray   # std = scale * raw + shift
    input_shift: np.ndarray
    label_scale: float        # raw = label_scale * std + label_shift
    label_shift: float
    n_agents: int
    n_threats: int
    train_seed: int = 0
    dataset_hash: str = ""

    @property
    def input_dim(self):
        return self.w_in.shape[1]

    @property
    def hidden_count(self):
        return self.w_in.shape[0]


@dataclass(frozen=True)
class TrainingReport:
    train_mse: float
    validation_mse: float
    test_mse: float
    epochs_used: int
    dataset_size: int
    split_fractions: tuple
    label_scale: float
    label_variance: float     # variance of normalized test labels (baseline MSE)


def zero_net(params: ScenarioParams, hidden: int = 1) -> SurrogateNet:
    """All-zero net for the given scenario shape (useful as a neutral surrogate)."""
    d = params.input_dim
    scale, shift = _region_maps(params, d)
    return SurrogateNet(
        w_in=np.zeros((hidden, d)), b_in=np.zeros(hidden),
        w_out=np.zeros(hidden), b_out=0.0,
        input_scale=scale, input_shift=shift,
        label_scale=1.0, label_shift=0.0,
        n_agents=params.n_agents, n_threats=params.n_radar_missiles)


def identity_net(w_in, b_in, w_out, b_out, n_agents=0, n_threats=0) -> SurrogateNet:
    """Net with pass-through standardization, for hand-constructed cases."""
    w_in = np.atleast_2d(np.asarray(w_in, float))
    d = w_in.shape[1]
    if n_agents == 0 and n_threats == 0:
        n_agents = d // 2
    return SurrogateNet(
        w_in=w_in, b_in=np.asarray(b_in, float).ravel(),
        w_out=np.asarray(w_out, float).ravel(), b_out=float(b_out),
        input_scale=np.ones(d), input_shift=np.zeros(d),
        label_scale=1.0, label_shift=0.0,
        n_agents=n_agents, n_threats=n_threats)


def _region_maps(params, d):
    scale = np.full(d, 2.0 / params.region_side)
    shift = np.full(d, -1.0)
    return scale, shift


def generate_dataset(params: ScenarioParams, n_samples: int, seed: int) -> SurrogateDataset:
    """Uniform random layouts labeled with the smoothed penalty.

    Agent and threat coordinates are the inputs. The range-budget term needs
    a covered-distance and a target leg that the input cannot encode, so
    each sample draws a synthetic path length uniform on [0, 1.2*L_bar] and
    a synthetic target position uniform over the region.
    """
    if n_samples < 0:
        raise ValueError("n_samples must be >= 0")
    rng = np.random.default_rng(seed)
    side = params.region_side
    n, m = params.n_agents, params.n_radar_missiles
    xu = rng.uniform(0.0, side, (n_samples, 2 * n))
    xo = rng.uniform(0.0, side, (n_samples, 2 * m))
    path_len = rng.uniform(0.0, 1.2 * params.max_range, (n_samples, n))
    tgt_pos = rng.uniform(0.0, side, (n_samples, n, 2))
    agent_pos = xu.reshape(n_samples, n, 2)
    target_dist = np.linalg.norm(agent_pos - tgt_pos, axis=2)

    labels = (cost.smoothed_penalty_batch(xu, xo, path_len, target_dist,
                                          np.ones(n, bool), params)
              if n_samples else np.empty(0))
    inputs = np.hstack([xu, xo]) if n_samples else np.empty((0, 2 * n + 2 * m))
    scale, shift = _region_maps(params, 2 * n + 2 * m)

    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(inputs).tobytes())
    digest.update(np.ascontiguousarray(labels).tobytes())
    return SurrogateDataset(inputs=inputs, labels=labels,
                            input_scale=scale, input_shift=shift,
                            n_agents=n, n_threats=m, seed=seed,
                            content_hash=digest.hexdigest())


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------

def _sigmoid(z):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def forward(net: SurrogateNet, x) -> float:
    """Surrogate value at one raw coordinate vector."""
    x = np.asarray(x, float)
    if x.shape != (net.input_dim,):
        raise ValueError(f"input shape {x.shape} != ({net.input_dim},)")
    return float(forward_batch(net, x[None, :])[0])


def forward_batch(net: SurrogateNet, x) -> np.ndarray:
    x = np.asarray(x, float)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(f"input shape {x.shape} incompatible with dim {net.input_dim}")
    z = (x * net.input_scale + net.input_shift) @ net.w_in.T + net.b_in
    y_std = _sigmoid(z) @ net.w_out + net.b_out
    return net.label_scale * y_std + net.label_shift


def input_gradient(net: SurrogateNet, x) -> np.ndarray:
    """Analytic d(surrogate)/d(raw coordinate), all coordinates."""
    x = np.asarray(x, float)
    if x.shape != (net.input_dim,):
        raise ValueError(f"input shape {x.shape} != ({net.input_dim},)")
    z = net.w_in @ (x * net.input_scale + net.input_shift) + net.b_in
    s = _sigmoid(z)
    coef = net.w_out * s * (1.0 - s)          # (J,)
    return net.label_scale * (coef @ net.w_in) * net.input_scale


def zero_pad(x, lost_ids) -> np.ndarray:
    """Blank out the coordinate pair of each lost agent (raw-zero padding)."""
    out = np.array(x, float, copy=True)
    for agent_id in lost_ids:
        hi = 2 * agent_id + 1
        if agent_id < 0 or hi >= len(out):
            raise IndexError(f"lost agent id {agent_id} out of range")
        out[2 * agent_id] = 0.0
        out[hi] = 0.0
    return out


def weight_bound(net: SurrogateNet) -> float:
    """Certified sup of |gradient| over agent coordinates: max_m 1/4 sum_j |lam_j w_jm|.

    The 1/4 is the sigmoid's maximum slope; the affine input/label maps are
    folded in so the bound applies to raw km coordinates.
    """
    agent_cols = 2 * net.n_agents
    per_coord = np.abs(net.w_out) @ np.abs(net.w_in[:, :agent_cols])
    per_coord = per_coord * np.abs(net.input_scale[:agent_cols]) * abs(net.label_scale)
    return float(per_coord.max() / 4.0) if agent_cols else 0.0


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def train(dataset: SurrogateDataset, hidden: int, max_epochs: int, seed: int,
          lr: float = 1e-2, batch_size: int = 256, momentum: float = 0.9,
          patience: int = 20, lr_halve_after: int = 8,
          splits=(0.70, 0.15, 0.15)):
    """Mini-batch momentum SGD on MSE with plateau-halved learning rate.

    Splits are drawn by a seeded shuffle; the label map is fitted on the
    training split. Early stop after `patience` epochs without validation
    improvement; the best-validation weights are restored before returning.
    """
    if abs(sum(splits) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    s = dataset.size
    n_train = int(s * splits[0])
    n_val = int(s * splits[1])
    if n_train == 0:
        raise ValueError("training split is empty")

    rng = np.random.default_rng(seed)
    order = rng.permutation(s)
    idx_train = order[:n_train]
    idx_val = order[n_train:n_train + n_val]
    idx_test = order[n_train + n_val:]

    x_all = dataset.inputs * dataset.input_scale + dataset.input_shift
    y_raw = dataset.labels
    lo = float(y_raw[idx_train].min())
    hi = float(y_raw[idx_train].max())
    label_scale = max(hi - lo, 1e-300)
    y_all = (y_raw - lo) / label_scale

    xt, yt = x_all[idx_train], y_all[idx_train]
    xv, yv = x_all[idx_val], y_all[idx_val]
    xs, ys = x_all[idx_test], y_all[idx_test]

    d = dataset.inputs.shape[1]
    lim_in = np.sqrt(6.0 / (d + hidden))
    lim_out = np.sqrt(6.0 / (hidden + 1))
    w_in = rng.uniform(-lim_in, lim_in, (hidden, d))
    b_in = rng.uniform(-lim_in, lim_in, hidden)
    w_out = rng.uniform(-lim_out, lim_out, hidden)
    b_out = float(yt.mean())

    def mse(x, y):
        if len(y) == 0:
            return 0.0
        pred = _sigmoid(x @ w_in.T + b_in) @ w_out + b_out
        return float(np.mean((pred - y) ** 2))

    vel = [np.zeros_like(w_in), np.zeros_like(b_in), np.zeros_like(w_out), 0.0]
    best = (mse(xv, yv), w_in.copy(), b_in.copy(), w_out.copy(), b_out)
    since_improve = 0
    since_halve = 0
    cur_lr = lr
    epochs_used = 0

    for epoch in range(max_epochs):
        epochs_used = epoch + 1
        perm = rng.permutation(n_train)
        for start in range(0, n_train, batch_size):
            sel = perm[start:start + batch_size]
            xb, yb = xt[sel], yt[sel]
            z = xb @ w_in.T + b_in
            h = _sigmoid(z)
            pred = h @ w_out + b_out
            err = (pred - yb) * (2.0 / len(sel))        # d(mse)/d(pred)
            g_wout = err @ h
            g_bout = err.sum()
            back = np.outer(err, w_out) * h * (1.0 - h)  # (B, J)
            g_win = back.T @ xb
            g_bin = back.sum(axis=0)
            vel[0] = momentum * vel[0] - cur_lr * g_win
            vel[1] = momentum * vel[1] - cur_lr * g_bin
            vel[2] = momentum * vel[2] - cur_lr * g_wout
            vel[3] = momentum * vel[3] - cur_lr * g_bout
            w_in += vel[0]
            b_in += vel[1]
            w_out += vel[2]
            b_out += vel[3]

        val = mse(xv, yv)
        if val < best[0]:
            best = (val, w_in.copy(), b_in.copy(), w_out.copy(), b_out)
            since_improve = 0
            since_halve = 0
        else:
            since_improve += 1
            since_halve += 1
            if since_halve >= lr_halve_after:
                cur_lr *= 0.5
                since_halve = 0
            if since_improve >= patience:
                break

    if max_epochs > 0:
        _, w_in, b_in, w_out, b_out = best

    net = SurrogateNet(
        w_in=w_in, b_in=b_in, w_out=w_out, b_out=float(b_out),
        input_scale=dataset.input_scale.copy(), input_shift=dataset.input_shift.copy(),
        label_scale=label_scale, label_shift=lo,
        n_agents=dataset.n_agents, n_threats=dataset.n_threats,
        train_seed=seed, dataset_hash=dataset.content_hash)
    report = TrainingReport(
        train_mse=mse(xt, yt), validation_mse=mse(xv, yv), test_mse=mse(xs, ys),
        epochs_used=epochs_used, dataset_size=s, split_fractions=tuple(splits),
        label_scale=label_scale,
        label_variance=float(np.var(ys)) if len(ys) else 0.0)
    return net, report


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_weights(net: SurrogateNet, path, manifest_path: str = ""):
    """Versioned npz container; array order follows the documented layout."""
    meta = {
        "format_version": WEIGHTS_FORMAT_VERSION,
        "n_agents": net.n_agents,
        "n_threats": net.n_threats,
        "train_seed": net.train_seed,
        "dataset_hash": net.dataset_hash,
        "manifest": manifest_path,
    }
    np.savez(path,
             w_in=net.w_in, b_in=net.b_in, w_out=net.w_out,
             b_out=np.float64(net.b_out),
             input_scale=net.input_scale, input_shift=net.input_shift,
             label_scale=np.float64(net.label_scale),
             label_shift=np.float64(net.label_shift),
             meta=np.str_(json.dumps(meta)))


def load_weights(path) -> SurrogateNet:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format_version") != WEIGHTS_FORMAT_VERSION:
            raise ValueError(f"unsupported weights format {meta.get('format_version')}")
        return SurrogateNet(
            w_in=data["w_in"], b_in=data["b_in"], w_out=data["w_out"],
            b_out=float(data["b_out"]),
            input_scale=data["input_scale"], input_shift=data["input_shift"],
            label_scale=float(data["label_scale"]),
            label_shift=float(data["label_shift"]),
            n_agents=int(meta["n_agents"]), n_threats=int(meta["n_threats"]),
            train_seed=int(meta["train_seed"]),
            dataset_hash=meta.get("dataset_hash", ""))
