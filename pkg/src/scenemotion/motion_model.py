"""Autoregressive cVAE over character states with expert-blended decoding.

The encoder maps (previous state, current state, interaction grid) to a
Gaussian latent. The decoder draws the latent, mixes K expert parameter sets
through a gating network conditioned on (latent, previous state), and runs
the blended prediction network on (previous state, interaction encoding) to
emit the next state. Training rolls windows forward with scheduled sampling
so the network learns to consume its own predictions.

All state vectors entering the networks are standardized by dataset mean/std
and de-standardized on the way out; the stats live inside the params.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import nn
from .errors import DimMismatch, NonFiniteOutput, WeightsNotNormalized
from .state import CharacterState, StateConfig, field_layout, flatten, state_dim, unflatten
from .voxel import GRID_FLAT, VoxelGrid, flatten_grid


@dataclass(frozen=True)
class MotionArch:
    state_enc: tuple = (512, 256, 256)
    inter_enc: tuple = (256, 256, 256)
    latent: int = 64
    gating: tuple = (512, 256)
    experts: int = 12
    pred_hidden: tuple = (512, 512)
    grid_dim: int = GRID_FLAT

    def to_dict(self) -> dict:
        return {
            "stateEnc": list(self.state_enc),
            "interEnc": list(self.inter_enc),
            "latent": self.latent,
            "gating": list(self.gating),
            "experts": self.experts,
            "predHidden": list(self.pred_hidden),
            "gridDim": self.grid_dim,
        }

    @staticmethod
    def from_dict(d: dict) -> "MotionArch":
        return MotionArch(
            state_enc=tuple(d["stateEnc"]),
            inter_enc=tuple(d["interEnc"]),
            latent=int(d["latent"]),
            gating=tuple(d["gating"]),
            experts=int(d["experts"]),
            pred_hidden=tuple(d["predHidden"]),
            grid_dim=int(d.get("gridDim", GRID_FLAT)),
        )


@dataclass(frozen=True)
class ScheduleConfig:
    c1: int = 30
    c2: int = 60
    rollout: int = 60
    epochs: int = 100
    beta1: float = 0.1
    lr: float = 5e-5
    batch_clips: int = 32

    def __post_init__(self):
        if not (self.c1 < self.c2 <= self.epochs):
            raise ValueError(f"need C1 < C2 <= epochs, got {self.c1}, {self.c2}, {self.epochs}")
        if self.rollout < 2:
            raise ValueError("rollout window must cover at least one transition")


def schedule_p(epoch: int, c1: int = 30, c2: int = 60) -> float:
    """Probability of feeding ground truth at a rollout step."""
    if epoch <= c1:
        return 1.0
    if epoch <= c2:
        return 1.0 - (epoch - c1) / (c2 - c1)
    return 0.0


class ExpertBank:
    """K parameter sets for one prediction network, blended per sample.

    Weights are stacked (K, out, in); a blend omega collapses them to one
    effective network. Blending weights first or blending per-expert
    pre-activations is the same affine map, so forward computes all expert
    pre-activations and mixes.
    """

    def __init__(self, Ws: list[np.ndarray], bs: list[np.ndarray], activations: list[str]):
        self.Ws = Ws
        self.bs = bs
        self.activations = activations

    @staticmethod
    def create(rng: np.random.Generator, k: int, in_dim: int, sizes: list[int]) -> "ExpertBank":
        Ws, bs, acts = [], [], []
        prev = in_dim
        for i, size in enumerate(sizes):
            Ws.append(np.stack([nn.glorot(rng, size, prev) for _ in range(k)]))
            bs.append(np.zeros((k, size)))
            acts.append("linear" if i == len(sizes) - 1 else "elu")
            prev = size
        return ExpertBank(Ws, bs, acts)

    @property
    def k(self) -> int:
        return self.Ws[0].shape[0]

    def forward_cached(self, omega: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, list]:
        h = x
        cache = []
        for W, b, act in zip(self.Ws, self.bs, self.activations):
            k, out, inp = W.shape
            z_all = (h @ W.reshape(k * out, inp).T).reshape(*h.shape[:-1], k, out) + b
            z = np.einsum("...k,...ko->...o", omega, z_all)
            y = nn.elu(z) if act == "elu" else z
            cache.append((h, z_all, z, y))
            h = y
        return h, cache

    def backward(self, omega: np.ndarray, cache: list, dy: np.ndarray
                 ) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray, np.ndarray]:
        """Returns per-layer (dW, db), plus domega and dx."""
        grads: list = [None] * len(self.Ws)
        domega = np.zeros_like(omega)
        d = dy
        for idx in range(len(self.Ws) - 1, -1, -1):
            W = self.Ws[idx]
            k, out, inp = W.shape
            h, z_all, z, y = cache[idx]
            dz = d * np.where(z > 0, 1.0, y + 1.0) if self.activations[idx] == "elu" else d
            flat_h = h.reshape(-1, inp)
            flat_dz = dz.reshape(-1, out)
            flat_om = omega.reshape(-1, k)
            dzk = flat_dz[:, None, :] * flat_om[:, :, None]  # (B, k, out)
            dW = (dzk.reshape(-1, k * out).T @ flat_h).reshape(k, out, inp)
            db = dzk.sum(axis=0)
            domega += (z_all * dz[..., None, :]).sum(axis=-1)
            d = (dzk.reshape(-1, k * out) @ W.reshape(k * out, inp)).reshape(h.shape)
            grads[idx] = (dW, db)
        return grads, domega, d

    def parameters(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.Ws, self.bs):
            out.extend((W, b))
        return out


def blend_experts(omega: np.ndarray, bank: ExpertBank, atol: float = 1e-6) -> nn.DenseNet:
    """Collapse the bank into one DenseNet with convexly combined parameters."""
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (bank.k,):
        raise DimMismatch(f"omega has shape {omega.shape}, bank has {bank.k} experts")
    if np.any(omega < -atol) or abs(omega.sum() - 1.0) > atol:
        raise WeightsNotNormalized(f"omega must be a convex combination, got {omega}")
    layers = []
    for W, b, act in zip(bank.Ws, bank.bs, bank.activations):
        layers.append(nn.DenseLayer(np.einsum("k,koi->oi", omega, W),
                                    omega @ b, act))
    return nn.DenseNet(layers)


class MotionNetParams:
    def __init__(self, cfg: StateConfig, arch: MotionArch,
                 state_enc: nn.DenseNet, inter_enc: nn.DenseNet,
                 mu_head: nn.DenseNet, sigma_head: nn.DenseNet,
                 gating: nn.DenseNet, experts: ExpertBank,
                 mean: np.ndarray, std: np.ndarray):
        self.cfg = cfg
        self.arch = arch
        self.state_enc = state_enc
        self.inter_enc = inter_enc
        self.mu_head = mu_head
        self.sigma_head = sigma_head
        self.gating = gating
        self.experts = experts
        self.mean = mean
        self.std = std

    @property
    def dim(self) -> int:
        return state_dim(self.cfg)

    def parameters(self) -> list[np.ndarray]:
        return (self.state_enc.parameters() + self.inter_enc.parameters()
                + self.mu_head.parameters() + self.sigma_head.parameters()
                + self.gating.parameters() + self.experts.parameters())

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for prefix, net in (("stateEnc", self.state_enc), ("interEnc", self.inter_enc),
                            ("muHead", self.mu_head), ("sigmaHead", self.sigma_head),
                            ("gating", self.gating)):
            for i, layer in enumerate(net.layers):
                out.append((f"{prefix}.{i}.W", layer.W))
                out.append((f"{prefix}.{i}.b", layer.b))
        for i, (W, b) in enumerate(zip(self.experts.Ws, self.experts.bs)):
            out.append((f"experts.{i}.W", W))
            out.append((f"experts.{i}.b", b))
        out.append(("norm.mean", self.mean))
        out.append(("norm.std", self.std))
        return out

    def save(self, path: str) -> None:
        meta = {
            "kind": "motion",
            "stateConfig": self.cfg.to_dict(),
            "arch": self.arch.to_dict(),
        }
        nn.save_checkpoint(path, meta, self.named_arrays())

    @staticmethod
    def load(path: str) -> "MotionNetParams":
        meta, arrays = nn.load_checkpoint(path)
        if meta.get("kind") != "motion":
            raise nn.CorruptHeader(f"{path} is not a motion checkpoint")
        cfg = StateConfig.from_dict(meta["stateConfig"])
        arch = MotionArch.from_dict(meta["arch"])
        params = init_motion_params(cfg, arch, np.random.default_rng(0))
        for name, arr in params.named_arrays():
            if name not in arrays:
                raise nn.CorruptHeader(f"checkpoint missing array {name!r}")
            if arrays[name].shape != arr.shape:
                raise DimMismatch(f"{name}: checkpoint {arrays[name].shape} vs model {arr.shape}")
            arr[...] = arrays[name].astype(float)
        return params


def init_motion_params(cfg: StateConfig, arch: MotionArch,
                       rng: np.random.Generator) -> MotionNetParams:
    d = state_dim(cfg)
    enc_out = arch.state_enc[-1] + arch.inter_enc[-1]
    state_enc = nn.DenseNet.create(rng, 2 * d, list(arch.state_enc), out_act="elu")
    inter_enc = nn.DenseNet.create(rng, arch.grid_dim, list(arch.inter_enc), out_act="elu")
    mu_head = nn.DenseNet.create(rng, enc_out, [arch.latent])
    sigma_head = nn.DenseNet.create(rng, enc_out, [arch.latent])
    gating = nn.DenseNet.create(rng, arch.latent + d, list(arch.gating) + [arch.experts],
                                out_act="softmax")
    experts = ExpertBank.create(rng, arch.experts, d + arch.inter_enc[-1],
                                list(arch.pred_hidden) + [d])
    return MotionNetParams(cfg, arch, state_enc, inter_enc, mu_head, sigma_head,
                           gating, experts, mean=np.zeros(d), std=np.ones(d))


def _grid_vec(I, arch: MotionArch) -> np.ndarray:
    v = flatten_grid(I) if isinstance(I, VoxelGrid) else np.asarray(I, dtype=float)
    if v.shape[-1] != arch.grid_dim:
        raise DimMismatch(f"grid vector width {v.shape[-1]}, expected {arch.grid_dim}")
    return v


def normalize(params: MotionNetParams, flat: np.ndarray) -> np.ndarray:
    return (flat - params.mean) / params.std


def denormalize(params: MotionNetParams, flat: np.ndarray) -> np.ndarray:
    return flat * params.std + params.mean


# ---------------------------------------------------------------------------
# forward passes (batched over leading axis, normalized flat states)


def _encode_norm(params: MotionNetParams, xprev: np.ndarray, xcur: np.ndarray,
                 grid: np.ndarray):
    se, se_cache = params.state_enc.forward_cached(np.concatenate([xprev, xcur], axis=-1))
    ie, ie_cache = params.inter_enc.forward_cached(grid)
    joint = np.concatenate([se, ie], axis=-1)
    mu, mu_cache = params.mu_head.forward_cached(joint)
    ls, ls_cache = params.sigma_head.forward_cached(joint)
    return mu, ls, {"se": se_cache, "ie": ie_cache, "mu": mu_cache, "ls": ls_cache}


def _decode_norm(params: MotionNetParams, z: np.ndarray, xprev: np.ndarray,
                 ie: np.ndarray, ie_cache: list):
    gate_in = np.concatenate([z, xprev], axis=-1)
    omega, gate_cache = params.gating.forward_cached(gate_in)
    pred_in = np.concatenate([xprev, ie], axis=-1)
    xhat, pred_cache = params.experts.forward_cached(omega, pred_in)
    return xhat, {"omega": omega, "gate": gate_cache, "pred": pred_cache,
                  "ie": ie_cache, "z_width": z.shape[-1]}


def encode(x_cur: CharacterState, x_prev: CharacterState, I, params: MotionNetParams
           ) -> tuple[np.ndarray, np.ndarray]:
    """Posterior (mu, logSigma) for the transition x_prev -> x_cur."""
    xp = normalize(params, flatten(x_prev, params.cfg))
    xc = normalize(params, flatten(x_cur, params.cfg))
    mu, ls, _ = _encode_norm(params, xp, xc, _grid_vec(I, params.arch))
    return mu, ls


def decode(z: np.ndarray, x_prev: CharacterState, I, params: MotionNetParams) -> np.ndarray:
    """Predicted next flat state (denormalized), without sampling."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != params.arch.latent:
        raise DimMismatch(f"latent width {z.shape[-1]}, expected {params.arch.latent}")
    xp = normalize(params, flatten(x_prev, params.cfg))
    ie, ie_cache = params.inter_enc.forward_cached(_grid_vec(I, params.arch))
    xhat, _ = _decode_norm(params, z, xp, ie, ie_cache)
    return denormalize(params, xhat)


def motion_loss(xhat: np.ndarray, xtrue: np.ndarray, mu: np.ndarray,
                log_sigma: np.ndarray, beta1: float) -> float:
    err = np.asarray(xhat, dtype=float) - np.asarray(xtrue, dtype=float)
    return float(np.sum(err * err) + beta1 * np.sum(nn.kl_standard_normal(mu, log_sigma)))


def _guarded_renorm(rows: np.ndarray, fallback: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=-1, keepdims=True)
    ok = norms > eps
    return np.where(ok, rows / np.where(ok, norms, 1.0), fallback)


def sanitize_prediction(flat: np.ndarray, x_prev: CharacterState,
                        cfg: StateConfig) -> CharacterState:
    """Unflatten a raw prediction and restore structural guarantees."""
    if not np.all(np.isfinite(flat)):
        raise NonFiniteOutput("prediction contains nan or inf")
    out = unflatten(flat, cfg)
    out.td = _guarded_renorm(out.td, x_prev.td)
    out.td_goal = _guarded_renorm(out.td_goal, x_prev.td_goal)
    out.gd = _guarded_renorm(out.gd, x_prev.gd)
    out.contacts = np.clip(out.contacts, 0.0, 1.0)
    return out


def predict_next(x_prev: CharacterState, I, rng: np.random.Generator,
                 params: MotionNetParams, latent_scale: float = 1.0) -> CharacterState:
    """Sample the next state. latent_scale=0 collapses to the deterministic mode."""
    z = latent_scale * rng.standard_normal(params.arch.latent)
    flat = decode(z, x_prev, I, params)
    return sanitize_prediction(flat, x_prev, params.cfg)


# ---------------------------------------------------------------------------
# training


def _rollout_step_grads(params: MotionNetParams, xprev: np.ndarray, target: np.ndarray,
                        grid: np.ndarray, eps: np.ndarray, beta1: float):
    """Forward + backward for one batched transition.

    Returns (xhat, per-sample losses, gradient list matching params.parameters()).
    """
    mu, ls, enc_cache = _encode_norm(params, xprev, target, grid)
    sigma = np.exp(ls)
    z = mu + sigma * eps
    ie = enc_cache["ie"][-1][2]
    xhat, dec_cache = _decode_norm(params, z, xprev, ie, enc_cache["ie"])

    err = xhat - target
    kl = nn.kl_standard_normal(mu, ls)
    losses = (err * err).sum(axis=-1) + beta1 * kl

    # decoder backward
    dxhat = 2.0 * err
    pred_grads, domega, dpred_in = params.experts.backward(
        dec_cache["omega"], dec_cache["pred"], dxhat)
    gate_grads, dgate_in = params.gating.backward(dec_cache["gate"], domega)
    dz = dgate_in[..., : dec_cache["z_width"]]
    die_dec = dpred_in[..., xprev.shape[-1]:]

    # latent + KL backward
    dmu_kl, dls_kl = nn.kl_standard_normal_grad(mu, ls)
    dmu = dz + beta1 * dmu_kl
    dls = dz * sigma * eps + beta1 * dls_kl

    mu_grads, djoint_mu = params.mu_head.backward(enc_cache["mu"], dmu)
    ls_grads, djoint_ls = params.sigma_head.backward(enc_cache["ls"], dls)
    djoint = djoint_mu + djoint_ls
    se_width = params.arch.state_enc[-1]
    se_grads, _ = params.state_enc.backward(enc_cache["se"], djoint[..., :se_width])
    die = djoint[..., se_width:] + die_dec
    ie_grads, _ = params.inter_enc.backward(enc_cache["ie"], die)

    grads = (nn.flatten_layer_grads(se_grads) + nn.flatten_layer_grads(ie_grads)
             + nn.flatten_layer_grads(mu_grads) + nn.flatten_layer_grads(ls_grads)
             + nn.flatten_layer_grads(gate_grads) + nn.flatten_layer_grads(pred_grads))
    return xhat, losses, grads


def rollout_pass(params: MotionNetParams, norm: np.ndarray, grids: np.ndarray,
                 eps: np.ndarray, keep: np.ndarray, beta1: float,
                 want_grads: bool = True):
    """Scheduled-sampling rollout over normalized windows (B, L, dim).

    eps is (L-1, B, latent); keep is (L-1, B) teacher-forcing coins. Recycled
    predictions get their goal fields (gp, gd, ga) refreshed from ground truth,
    and gradients never flow across steps. Returns (mean loss, grads or None)
    with grads already scaled by 1/(B*(L-1)).
    """
    b, length, _ = norm.shape
    layout = field_layout(params.cfg)
    env_slices = [layout["gp"], layout["gd"], layout["ga"]]

    acc = nn.GradAccumulator(params.parameters()) if want_grads else None
    total = 0.0
    xprev = norm[:, 0].copy()
    for i in range(1, length):
        if want_grads:
            xhat, losses, grads = _rollout_step_grads(
                params, xprev, norm[:, i], grids[:, i - 1], eps[i - 1], beta1)
            acc.add(grads)
        else:
            mu, ls, enc_cache = _encode_norm(params, xprev, norm[:, i], grids[:, i - 1])
            z = mu + np.exp(ls) * eps[i - 1]
            ie = enc_cache["ie"][-1][2]
            xhat, _ = _decode_norm(params, z, xprev, ie, enc_cache["ie"])
            err = xhat - norm[:, i]
            losses = (err * err).sum(axis=-1) + beta1 * nn.kl_standard_normal(mu, ls)
        total += float(losses.sum())
        if i < length - 1:
            recycled = xhat.copy()
            for sl in env_slices:
                recycled[:, sl] = norm[:, i, sl]
            xprev = np.where(keep[i - 1][:, None], norm[:, i], recycled)
    denom = b * (length - 1)
    return total / denom, (acc.scaled(1.0 / denom) if want_grads else None)


def train_rollout(params: MotionNetParams, opt: nn.Adam, flats: np.ndarray,
                  grids: np.ndarray, epoch: int, rng: np.random.Generator,
                  sched: ScheduleConfig) -> float:
    """One optimizer step over a batch of windows (B, L, dim) with grids (B, L, G).

    Flats arrive unnormalized; grids are root-relative per ground-truth frame.
    Returns the mean per-transition loss.
    """
    flats = np.asarray(flats, dtype=float)
    if flats.ndim != 3:
        raise DimMismatch(f"expected (B, L, dim) windows, got {flats.shape}")
    b, length, d = flats.shape
    if d != params.dim:
        raise DimMismatch(f"window dim {d}, model dim {params.dim}")
    norm = normalize(params, flats)
    p_keep = schedule_p(epoch, sched.c1, sched.c2)
    eps = rng.standard_normal((length - 1, b, params.arch.latent))
    keep = rng.random((length - 1, b)) < p_keep
    loss, grads = rollout_pass(params, norm, grids, eps, keep, sched.beta1)
    opt.step(grads, epoch)
    return loss


def train_motion(params: MotionNetParams, windows_flats: np.ndarray,
                 windows_grids: np.ndarray, sched: ScheduleConfig, seed: int,
                 log_path: str | None = None, epochs: int | None = None,
                 callback=None) -> list[dict]:
    """Full training loop over precomputed windows. Returns the loss trace."""
    rng = np.random.default_rng(seed)
    opt = nn.Adam(params.parameters(), sched.lr, sched.epochs)
    n = windows_flats.shape[0]
    trace = []
    log_f = open(log_path, "w") if log_path else None
    try:
        for epoch in range(1, (epochs or sched.epochs) + 1):
            order = rng.permutation(n)
            for step, start in enumerate(range(0, n, sched.batch_clips)):
                idx = order[start:start + sched.batch_clips]
                loss = train_rollout(params, opt, windows_flats[idx], windows_grids[idx],
                                     epoch, rng, sched)
                rec = {"epoch": epoch, "step": step, "loss": loss,
                       "P": schedule_p(epoch, sched.c1, sched.c2)}
                trace.append(rec)
                if log_f:
                    log_f.write(json.dumps(rec) + "\n")
            if callback:
                callback(epoch, trace)
    finally:
        if log_f:
            log_f.close()
    return trace
