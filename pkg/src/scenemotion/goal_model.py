"""cVAE over goal positions and directions conditioned on object geometry.

The object enters as its center-relative voxel grid. The encoder compresses
the grid, concatenates the (normalized) goal, and produces a 3-dimensional
Gaussian latent; the decoder mirrors it, reconstructing 6 values. Goal
positions are learned in units of the object's bounding-box half-diagonal so
one set of weights serves objects of different sizes.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .errors import DimMismatch, ZeroDirection
from .goals import Goal
from .voxel import GRID_FLAT, VoxelGrid, flatten_grid


class GoalArch:
    def __init__(self, inter_enc=(512, 512, 64), tail=64, latent=3, grid_dim=GRID_FLAT):
        self.inter_enc = tuple(inter_enc)
        self.tail = tail
        self.latent = latent
        self.grid_dim = grid_dim

    def to_dict(self) -> dict:
        return {"interEnc": list(self.inter_enc), "tail": self.tail,
                "latent": self.latent, "gridDim": self.grid_dim}

    @staticmethod
    def from_dict(d: dict) -> "GoalArch":
        return GoalArch(d["interEnc"], int(d["tail"]), int(d["latent"]),
                        int(d.get("gridDim", GRID_FLAT)))


class GoalNetParams:
    def __init__(self, arch: GoalArch, inter_enc: nn.DenseNet, enc_tail: nn.DenseNet,
                 mu_head: nn.DenseNet, sigma_head: nn.DenseNet,
                 dec_tail: nn.DenseNet, out_head: nn.DenseNet):
        self.arch = arch
        self.inter_enc = inter_enc
        self.enc_tail = enc_tail
        self.mu_head = mu_head
        self.sigma_head = sigma_head
        self.dec_tail = dec_tail
        self.out_head = out_head

    def parameters(self) -> list[np.ndarray]:
        return (self.inter_enc.parameters() + self.enc_tail.parameters()
                + self.mu_head.parameters() + self.sigma_head.parameters()
                + self.dec_tail.parameters() + self.out_head.parameters())

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for prefix, net in (("interEnc", self.inter_enc), ("encTail", self.enc_tail),
                            ("muHead", self.mu_head), ("sigmaHead", self.sigma_head),
                            ("decTail", self.dec_tail), ("outHead", self.out_head)):
            for i, layer in enumerate(net.layers):
                out.append((f"{prefix}.{i}.W", layer.W))
                out.append((f"{prefix}.{i}.b", layer.b))
        return out

    def save(self, path: str) -> None:
        nn.save_checkpoint(path, {"kind": "goal", "arch": self.arch.to_dict()},
                           self.named_arrays())

    @staticmethod
    def load(path: str) -> "GoalNetParams":
        meta, arrays = nn.load_checkpoint(path)
        if meta.get("kind") != "goal":
            raise nn.CorruptHeader(f"{path} is not a goal checkpoint")
        params = init_goal_params(GoalArch.from_dict(meta["arch"]), np.random.default_rng(0))
        for name, arr in params.named_arrays():
            if name not in arrays:
                raise nn.CorruptHeader(f"checkpoint missing array {name!r}")
            arr[...] = arrays[name].astype(float)
        return params


def init_goal_params(arch: GoalArch, rng: np.random.Generator) -> GoalNetParams:
    e = arch.inter_enc[-1]
    return GoalNetParams(
        arch=arch,
        inter_enc=nn.DenseNet.create(rng, arch.grid_dim, list(arch.inter_enc), out_act="elu"),
        enc_tail=nn.DenseNet.create(rng, e + 6, [arch.tail], out_act="elu"),
        mu_head=nn.DenseNet.create(rng, arch.tail, [arch.latent]),
        sigma_head=nn.DenseNet.create(rng, arch.tail, [arch.latent]),
        dec_tail=nn.DenseNet.create(rng, e + arch.latent, [arch.tail], out_act="elu"),
        out_head=nn.DenseNet.create(rng, arch.tail, [6]),
    )


def _grid_vec(I, arch: GoalArch) -> np.ndarray:
    v = flatten_grid(I) if isinstance(I, VoxelGrid) else np.asarray(I, dtype=float)
    if v.shape[-1] != arch.grid_dim:
        raise DimMismatch(f"grid vector width {v.shape[-1]}, expected {arch.grid_dim}")
    return v


def _goal_vec(g: Goal, scale: float) -> np.ndarray:
    return np.concatenate([g.position / scale, g.direction])


def encode_goal(g: Goal, I: VoxelGrid, params: GoalNetParams) -> tuple[np.ndarray, np.ndarray]:
    """Posterior (mu, logSigma) of the goal latent; goal is object-center-relative."""
    e = params.inter_enc.forward(_grid_vec(I, params.arch))
    h = params.enc_tail.forward(np.concatenate([e, _goal_vec(g, I.half_diagonal())], axis=-1))
    return params.mu_head.forward(h), params.sigma_head.forward(h)


def _decode_norm(params: GoalNetParams, z: np.ndarray, e: np.ndarray) -> np.ndarray:
    h = params.dec_tail.forward(np.concatenate([e, z], axis=-1))
    return params.out_head.forward(h)


def decode_goal(z: np.ndarray, I: VoxelGrid, params: GoalNetParams,
                action: str = "sit") -> Goal:
    z = np.asarray(z, dtype=float)
    if z.shape != (params.arch.latent,):
        raise DimMismatch(f"latent shape {z.shape}, expected ({params.arch.latent},)")
    e = params.inter_enc.forward(_grid_vec(I, params.arch))
    out = _decode_norm(params, z, e)
    d = out[3:]
    if np.linalg.norm(d) < 1e-8:
        raise ZeroDirection("decoded goal direction is degenerate")
    return Goal(out[:3] * I.half_diagonal(), d, action)


def goal_loss(g_hat: Goal, g: Goal, mu: np.ndarray, log_sigma: np.ndarray,
              beta2: float) -> float:
    dp = g_hat.position - g.position
    dd = g_hat.direction - g.direction
    return float(dp @ dp + dd @ dd + beta2 * np.sum(nn.kl_standard_normal(mu, log_sigma)))


def sample_goals(I: VoxelGrid, n: int, rng: np.random.Generator,
                 params: GoalNetParams, action: str = "sit") -> list[Goal]:
    if n < 1:
        raise ValueError(f"need n >= 1 goals, got {n}")
    return [decode_goal(rng.standard_normal(params.arch.latent), I, params, action)
            for _ in range(n)]


# ---------------------------------------------------------------------------
# training


def _goal_step_grads(params: GoalNetParams, grids: np.ndarray, g6: np.ndarray,
                     eps: np.ndarray, beta2: float):
    """Batched forward/backward; g6 holds normalized positions + raw directions."""
    e, ie_cache = params.inter_enc.forward_cached(grids)
    enc_in = np.concatenate([e, g6], axis=-1)
    h_e, et_cache = params.enc_tail.forward_cached(enc_in)
    mu, mu_cache = params.mu_head.forward_cached(h_e)
    ls, ls_cache = params.sigma_head.forward_cached(h_e)
    sigma = np.exp(ls)
    z = mu + sigma * eps
    dec_in = np.concatenate([e, z], axis=-1)
    h_d, dt_cache = params.dec_tail.forward_cached(dec_in)
    out, oh_cache = params.out_head.forward_cached(h_d)

    err = out - g6
    kl = nn.kl_standard_normal(mu, ls)
    losses = (err * err).sum(axis=-1) + beta2 * kl

    oh_grads, dh_d = params.out_head.backward(oh_cache, 2.0 * err)
    dt_grads, ddec_in = params.dec_tail.backward(dt_cache, dh_d)
    ew = e.shape[-1]
    de = ddec_in[..., :ew]
    dz = ddec_in[..., ew:]
    dmu_kl, dls_kl = nn.kl_standard_normal_grad(mu, ls)
    mu_grads, dh_mu = params.mu_head.backward(mu_cache, dz + beta2 * dmu_kl)
    ls_grads, dh_ls = params.sigma_head.backward(ls_cache, dz * sigma * eps + beta2 * dls_kl)
    et_grads, denc_in = params.enc_tail.backward(et_cache, dh_mu + dh_ls)
    de = de + denc_in[..., :ew]
    ie_grads, _ = params.inter_enc.backward(ie_cache, de)

    grads = (nn.flatten_layer_grads(ie_grads) + nn.flatten_layer_grads(et_grads)
             + nn.flatten_layer_grads(mu_grads) + nn.flatten_layer_grads(ls_grads)
             + nn.flatten_layer_grads(dt_grads) + nn.flatten_layer_grads(oh_grads))
    return out, losses, grads


def goal_pass(params: GoalNetParams, grids: np.ndarray, g6: np.ndarray,
              eps: np.ndarray, beta2: float, want_grads: bool = True):
    """Mean loss over a batch, optionally with 1/B-scaled gradients.

    g6 rows hold half-diagonal-normalized positions plus raw unit directions;
    eps is the (B, latent) reparameterization draw, making the loss a pure
    function of the parameters (used by gradient checks).
    """
    b = grids.shape[0]
    if want_grads:
        _, losses, grads = _goal_step_grads(params, grids, g6, eps, beta2)
        acc = nn.GradAccumulator(params.parameters())
        acc.add(grads)
        return float(losses.mean()), acc.scaled(1.0 / b)
    e = params.inter_enc.forward(grids)
    h_e = params.enc_tail.forward(np.concatenate([e, g6], axis=-1))
    mu = params.mu_head.forward(h_e)
    ls = params.sigma_head.forward(h_e)
    z = mu + np.exp(ls) * eps
    out = _decode_norm(params, z, e)
    err = out - g6
    losses = (err * err).sum(axis=-1) + beta2 * nn.kl_standard_normal(mu, ls)
    return float(losses.mean()), None


def train_goal_net(params: GoalNetParams, grids: np.ndarray, goals6: np.ndarray,
                   scales: np.ndarray, epochs: int, seed: int, lr: float = 1e-3,
                   beta2: float = 0.5, batch: int = 64,
                   kl_warmup: int | None = None,
                   log_path: str | None = None) -> list[dict]:
    """Train on (grid, goal) pairs; goals6 = (N, 6) raw meters + unit directions.

    The KL weight ramps linearly from 0 to beta2 over kl_warmup epochs
    (default: half the run). Without the warmup the latent collapses before
    the decoder learns to use it, and multi-goal objects regress to their
    mean goal.
    """
    import json as _json

    rng = np.random.default_rng(seed)
    opt = nn.Adam(params.parameters(), lr, epochs)
    n = grids.shape[0]
    g6 = goals6.astype(float).copy()
    g6[:, :3] /= np.asarray(scales, dtype=float)[:, None]
    warmup = max(1, epochs // 2 if kl_warmup is None else kl_warmup)
    trace = []
    log_f = open(log_path, "w") if log_path else None
    try:
        for epoch in range(1, epochs + 1):
            beta_e = beta2 * min(1.0, epoch / warmup)
            order = rng.permutation(n)
            for step, start in enumerate(range(0, n, batch)):
                idx = order[start:start + batch]
                eps = rng.standard_normal((len(idx), params.arch.latent))
                loss, grads = goal_pass(params, grids[idx], g6[idx], eps, beta_e)
                opt.step(grads, epoch)
                rec = {"epoch": epoch, "step": step, "loss": loss}
                trace.append(rec)
                if log_f:
                    log_f.write(_json.dumps(rec) + "\n")
    finally:
        if log_f:
            log_f.close()
    return trace
