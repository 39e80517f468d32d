"""Small vision transformer with analytic forward and backward passes.

Parameters live in a flat dict of named numpy arrays; low-rank adapters are a
separate dict keyed by the weight they modulate, so the base matrix can stay
frozen while (W + AB)x is computed in factored form. Gradients are derived by
hand layer by layer and checked against central finite differences in the test
suite.

Key format for the combined parameter space (masks, optimizer, gradients):
base weights use their dict key verbatim, adapter factors use
"lora:<target>:A" / "lora:<target>:B".
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import ConfigError, DimensionError, StateError
from .imageops import interp_matrix

ATTN_PROJS = ("q", "k", "v")


@dataclass
class ViTConfig:
    image_size: int = 64
    patch_size: int = 8
    embed_dim: int = 64
    depth: int = 4
    num_heads: int = 4
    mlp_ratio: float = 4.0
    head_hidden_dim: int = 256
    head_bottleneck_dim: int = 64
    num_prototypes: int = 256
    channels: int = 3
    ln_eps: float = 1e-6

    def validate(self):
        if self.image_size % self.patch_size != 0:
            raise ConfigError("image_size must be divisible by patch_size "
                              f"({self.image_size} % {self.patch_size})")
        if self.embed_dim % self.num_heads != 0:
            raise ConfigError("embed_dim must be divisible by num_heads "
                              f"({self.embed_dim} % {self.num_heads})")
        if self.num_prototypes < 2:
            raise ConfigError("num_prototypes must be >= 2")
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def mlp_dim(self) -> int:
        return int(self.embed_dim * self.mlp_ratio)


@dataclass
class LoraAdapter:
    A: np.ndarray               # [d, r]
    B: np.ndarray               # [r, k]
    target: str                 # key of the adapted weight, e.g. "blocks.0.attn.q.w"

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    def delta(self) -> np.ndarray:
        return self.A @ self.B


@dataclass
class FreezeSchedule:
    head_only_epochs: int = 10
    lora_layers: int = 2        # leading blocks adapted via low-rank factors
    full_layers: int = 2        # trailing blocks fully unfrozen
    norms_trainable: bool = True
    lora_rank: int = 4

    def validate(self, depth: int):
        if self.head_only_epochs < 0:
            raise ConfigError("head_only_epochs must be >= 0")
        if self.lora_layers < 0 or self.full_layers < 0:
            raise ConfigError("lora_layers and full_layers must be >= 0")
        if self.lora_layers + self.full_layers > depth:
            raise ConfigError(
                f"lora_layers + full_layers exceeds depth: "
                f"{self.lora_layers} + {self.full_layers} > {depth}")


def init_head_params(cfg: ViTConfig, rng, dtype=np.float32) -> dict:
    d, hid, bot, k = cfg.embed_dim, cfg.head_hidden_dim, cfg.head_bottleneck_dim, cfg.num_prototypes
    p = {
        "head.fc1.w": rng.normal(0, 0.02, (d, hid)),
        "head.fc1.b": np.zeros(hid),
        "head.fc2.w": rng.normal(0, 0.02, (hid, hid)),
        "head.fc2.b": np.zeros(hid),
        "head.fc3.w": rng.normal(0, 0.02, (hid, bot)),
        "head.fc3.b": np.zeros(bot),
        "head.protos.v": rng.normal(0, 0.02, (k, bot)),
        "head.protos.g": np.ones(k),
    }
    return {k_: v.astype(dtype) for k_, v in p.items()}


def init_params(cfg: ViTConfig, rng, dtype=np.float32) -> dict:
    cfg.validate()
    d = cfg.embed_dim
    n_tokens = cfg.grid * cfg.grid + 1
    p = {
        "patch_embed.w": rng.normal(0, 0.02, (cfg.patch_size ** 2 * cfg.channels, d)),
        "patch_embed.b": np.zeros(d),
        "cls_token": rng.normal(0, 0.02, d),
        "pos_embed": rng.normal(0, 0.02, (n_tokens, d)),
    }
    for i in range(cfg.depth):
        pre = f"blocks.{i}"
        p[f"{pre}.ln1.g"] = np.ones(d)
        p[f"{pre}.ln1.b"] = np.zeros(d)
        for proj in (*ATTN_PROJS, "o"):
            p[f"{pre}.attn.{proj}.w"] = rng.normal(0, 0.02, (d, d))
            p[f"{pre}.attn.{proj}.b"] = np.zeros(d)
        p[f"{pre}.ln2.g"] = np.ones(d)
        p[f"{pre}.ln2.b"] = np.zeros(d)
        p[f"{pre}.mlp.fc1.w"] = rng.normal(0, 0.02, (d, cfg.mlp_dim))
        p[f"{pre}.mlp.fc1.b"] = np.zeros(cfg.mlp_dim)
        p[f"{pre}.mlp.fc2.w"] = rng.normal(0, 0.02, (cfg.mlp_dim, d))
        p[f"{pre}.mlp.fc2.b"] = np.zeros(d)
    p["final_norm.g"] = np.ones(d)
    p["final_norm.b"] = np.zeros(d)
    p = {k_: v.astype(dtype) for k_, v in p.items()}
    p.update(init_head_params(cfg, rng, dtype))
    return p


# ---------------------------------------------------------------------------
# LoRA

def default_lora_targets(num_blocks: int) -> list:
    return [(i, proj) for i in range(num_blocks) for proj in ATTN_PROJS]


def inject_lora(params: dict, rank: int, targets, rng, dtype=None) -> dict:
    """One adapter per (block, projection) target; A gaussian, B zero, so the
    initial additive update is exactly zero."""
    adapters = {}
    for block, proj in targets:
        if proj not in ATTN_PROJS:
            raise ConfigError(f"LoRA target projection must be one of {ATTN_PROJS}, got {proj!r}")
        key = f"blocks.{block}.attn.{proj}.w"
        if key not in params:
            raise ConfigError(f"LoRA target references missing block: {key}")
        w = params[key]
        d, k = w.shape
        if rank < 1 or rank >= min(d, k):
            raise ConfigError(f"LoRA rank must satisfy 1 <= r < min(d, k) = {min(d, k)}, got {rank}")
        dt = dtype or w.dtype
        adapters[key] = LoraAdapter(A=rng.normal(0, 0.02, (d, rank)).astype(dt),
                                    B=np.zeros((rank, k), dtype=dt), target=key)
    return adapters


def merge_adapters(params: dict, adapters: dict) -> dict:
    """Dense weights with every adapter folded in: W <- W + AB."""
    merged = dict(params)
    for key, ad in (adapters or {}).items():
        merged[key] = params[key] + ad.delta()
    return merged


def lora_key(target: str, factor: str) -> str:
    return f"lora:{target}:{factor}"


def is_lora_key(key: str) -> bool:
    return key.startswith("lora:")


def get_param(params: dict, adapters: dict, key: str) -> np.ndarray:
    if is_lora_key(key):
        _, target, factor = key.split(":")
        return getattr(adapters[target], factor)
    return params[key]


def set_param(params: dict, adapters: dict, key: str, value: np.ndarray) -> None:
    if is_lora_key(key):
        _, target, factor = key.split(":")
        setattr(adapters[target], factor, value)
    else:
        params[key] = value


def all_keys(params: dict, adapters: dict | None) -> list:
    keys = sorted(params)
    for target in sorted(adapters or {}):
        keys.append(lora_key(target, "A"))
        keys.append(lora_key(target, "B"))
    return keys


def count_values(params: dict, adapters: dict | None, keys) -> int:
    return sum(get_param(params, adapters, k).size for k in keys)


# ---------------------------------------------------------------------------
# Freeze masks

def trainable_mask(schedule: FreezeSchedule, phase: str, depth: int,
                   params: dict, adapters: dict | None = None) -> set:
    """Keys trainable in the given phase.

    head_only: projection head only. staged: head, adapter factors and (if
    configured) the norm parameters of the first `lora_layers` blocks, and
    every parameter of the last `full_layers` blocks.
    """
    schedule.validate(depth)
    if phase not in ("head_only", "staged"):
        raise ConfigError(f"phase must be 'head_only' or 'staged', got {phase!r}")
    mask = {k for k in params if k.startswith("head.")}
    if phase == "head_only":
        return mask
    for target in (adapters or {}):
        block = int(target.split(".")[1])
        if block < schedule.lora_layers:
            mask.add(lora_key(target, "A"))
            mask.add(lora_key(target, "B"))
    for i in range(schedule.lora_layers):
        if schedule.norms_trainable:
            for ln in ("ln1", "ln2"):
                mask.add(f"blocks.{i}.{ln}.g")
                mask.add(f"blocks.{i}.{ln}.b")
    for i in range(depth - schedule.full_layers, depth):
        mask.update(k for k in params if k.startswith(f"blocks.{i}."))
    return mask


# ---------------------------------------------------------------------------
# Forward / backward

def _gelu_parts(x):
    """(gelu(x), phi) where phi = 1 + erf(x / sqrt(2)) is reused by the backward pass."""
    inv_sqrt2 = np.asarray(1.0 / np.sqrt(2.0), dtype=x.dtype)
    phi = 1.0 + erf(x * inv_sqrt2)
    return 0.5 * x * phi, phi


def _gelu(x):
    return _gelu_parts(x)[0]


def _gelu_grad(x, phi=None):
    inv_sqrt2pi = np.asarray(1.0 / np.sqrt(2.0 * np.pi), dtype=x.dtype)
    if phi is None:
        phi = 1.0 + erf(x * np.asarray(1.0 / np.sqrt(2.0), dtype=x.dtype))
    return 0.5 * phi + x * inv_sqrt2pi * np.exp(-0.5 * x * x)


def _layernorm(x, g, b, eps):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    istd = 1.0 / np.sqrt(var + eps)
    xhat = xc * istd
    return xhat * g + b, xhat, istd


def _layernorm_backward(dy, xhat, istd, g):
    dg = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * g
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = (dxhat - m1 - xhat * m2) * istd
    return dx, dg, db


def _softmax(x):
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=-1, keepdims=True)


def patchify(images: np.ndarray, patch: int) -> np.ndarray:
    b, h, w, c = images.shape
    g = h // patch
    x = images.reshape(b, g, patch, g, patch, c)
    return x.transpose(0, 1, 3, 2, 4, 5).reshape(b, g * g, patch * patch * c)


def _pos_for_grid(pos_embed: np.ndarray, native_grid: int, grid: int, dtype):
    """Positional embeddings for a grid of the given side, bilinearly resized
    from the native grid when sizes differ. Returns (pos [1+g*g, D], M|None)."""
    if grid == native_grid:
        return pos_embed, None
    d = pos_embed.shape[1]
    m = interp_matrix(native_grid, grid).astype(dtype)
    src = pos_embed[1:].reshape(native_grid, native_grid, d)
    tmp = np.tensordot(m, src, axes=(1, 0))                # [g, G, D]
    new = np.tensordot(m, tmp, axes=(1, 1))                # [g, g, D] (axes: j, i, D)
    new = new.transpose(1, 0, 2).reshape(grid * grid, d)
    return np.concatenate([pos_embed[:1], new], axis=0), m


def _pos_grad_native(d_pos: np.ndarray, m: np.ndarray, native_grid: int) -> np.ndarray:
    """Adjoint of _pos_for_grid's interpolation, mapping gradients back to the
    native grid."""
    g = int(np.sqrt(d_pos.shape[0] - 1))
    d = d_pos.shape[1]
    dg = d_pos[1:].reshape(g, g, d)
    tmp = np.tensordot(m.T, dg, axes=(1, 0))               # [G, g, D]
    nat = np.tensordot(m.T, tmp, axes=(1, 1)).transpose(1, 0, 2)
    out = np.concatenate([d_pos[:1], nat.reshape(native_grid * native_grid, d)], axis=0)
    return out


def _linear_lora(x, params, adapters, key_prefix, cache):
    """y = x @ (W + AB) + b in factored form; stores what backward needs."""
    w = params[key_prefix + ".w"]
    y = x @ w + params[key_prefix + ".b"]
    ad = (adapters or {}).get(key_prefix + ".w")
    if ad is not None:
        xa = x @ ad.A
        y = y + xa @ ad.B
        cache[key_prefix + ".xa"] = xa
    return y


def _split_heads(x, num_heads):
    b, n, d = x.shape
    hd = d // num_heads
    return x.reshape(b, n, num_heads, hd).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, n, hd = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, n, h * hd)


def forward(params: dict, adapters: dict | None, images: np.ndarray, cfg: ViTConfig,
            want_cache: bool = False):
    """Run the backbone and projection head.

    images: [B, H, W, C] with H == W divisible by patch_size. Returns
    (embeddings [B, D], logits [B, K]) or (embeddings, logits, cache) when a
    backward pass will follow.
    """
    cfg.validate()
    if images.ndim != 4 or images.shape[1] != images.shape[2] or images.shape[3] != cfg.channels:
        raise DimensionError(f"expected [B, S, S, {cfg.channels}] images, got {images.shape}")
    if images.shape[1] % cfg.patch_size != 0:
        raise DimensionError(f"image side {images.shape[1]} not divisible by patch {cfg.patch_size}")
    dtype = params["patch_embed.w"].dtype
    images = images.astype(dtype, copy=False)
    grid = images.shape[1] // cfg.patch_size
    b = images.shape[0]

    cache = {"cfg": cfg, "grid": grid, "batch": b}
    patches = patchify(images, cfg.patch_size)
    cache["patches"] = patches
    tok = patches @ params["patch_embed.w"] + params["patch_embed.b"]
    cls = np.broadcast_to(params["cls_token"], (b, 1, cfg.embed_dim))
    x = np.concatenate([cls, tok], axis=1)
    pos, pos_m = _pos_for_grid(params["pos_embed"], cfg.grid, grid, dtype)
    cache["pos_m"] = pos_m
    x = x + pos[None]

    scale = np.asarray(1.0 / np.sqrt(cfg.embed_dim // cfg.num_heads), dtype=dtype)
    blocks = []
    for i in range(cfg.depth):
        pre = f"blocks.{i}"
        blk = {"x_in": x}
        xn, xhat1, istd1 = _layernorm(x, params[f"{pre}.ln1.g"], params[f"{pre}.ln1.b"], cfg.ln_eps)
        blk.update(xn1=xn, xhat1=xhat1, istd1=istd1)
        q = _linear_lora(xn, params, adapters, f"{pre}.attn.q", blk)
        k = _linear_lora(xn, params, adapters, f"{pre}.attn.k", blk)
        v = _linear_lora(xn, params, adapters, f"{pre}.attn.v", blk)
        qh, kh, vh = (_split_heads(t, cfg.num_heads) for t in (q, k, v))
        att = _softmax(np.matmul(qh, kh.swapaxes(-1, -2)) * scale)
        ctx = _merge_heads(np.matmul(att, vh))
        blk.update(qh=qh, kh=kh, vh=vh, att=att, ctx=ctx)
        x = x + ctx @ params[f"{pre}.attn.o.w"] + params[f"{pre}.attn.o.b"]
        blk["x_mid"] = x
        xn2, xhat2, istd2 = _layernorm(x, params[f"{pre}.ln2.g"], params[f"{pre}.ln2.b"], cfg.ln_eps)
        a1 = xn2 @ params[f"{pre}.mlp.fc1.w"] + params[f"{pre}.mlp.fc1.b"]
        h, phi = _gelu_parts(a1)
        blk.update(xn2=xn2, xhat2=xhat2, istd2=istd2, a1=a1, a1_phi=phi, h=h)
        x = x + h @ params[f"{pre}.mlp.fc2.w"] + params[f"{pre}.mlp.fc2.b"]
        blocks.append(blk)
    cache["blocks"] = blocks

    cache["x_out"] = x
    y, xhatf, istdf = _layernorm(x, params["final_norm.g"], params["final_norm.b"], cfg.ln_eps)
    cache.update(xhatf=xhatf, istdf=istdf)
    emb = y[:, 0]
    cache["emb"] = emb

    a1 = emb @ params["head.fc1.w"] + params["head.fc1.b"]
    h1, phi1 = _gelu_parts(a1)
    a2 = h1 @ params["head.fc2.w"] + params["head.fc2.b"]
    h2, phi2 = _gelu_parts(a2)
    h3 = h2 @ params["head.fc3.w"] + params["head.fc3.b"]
    norm = np.maximum(np.linalg.norm(h3, axis=-1, keepdims=True), 1e-12).astype(dtype)
    z = h3 / norm
    vnorm = np.maximum(np.linalg.norm(params["head.protos.v"], axis=-1, keepdims=True),
                       1e-12).astype(dtype)
    vhat = params["head.protos.v"] / vnorm
    raw = z @ vhat.T
    logits = raw * params["head.protos.g"]
    cache.update(h_a1=a1, h_phi1=phi1, h_h1=h1, h_a2=a2, h_phi2=phi2, h_h2=h2, h3=h3,
                 h3_norm=norm, z=z, vhat=vhat, vnorm=vnorm, raw_logits=raw,
                 params=params, adapters=adapters)

    if want_cache:
        return emb, logits, cache
    return emb, logits


def _matgrad(x, dy):
    """dW for y = x @ W with arbitrary leading axes."""
    return np.tensordot(x, dy, axes=(tuple(range(x.ndim - 1)), tuple(range(dy.ndim - 1))))


def _sumgrad(dy):
    return dy.sum(axis=tuple(range(dy.ndim - 1)))


def backward(cache, d_logits: np.ndarray | None = None,
             d_embedding: np.ndarray | None = None,
             trainable: set | None = None) -> dict:
    """Gradients for the recorded forward pass.

    `trainable` restricts the output (and skips the backbone traversal when
    only head parameters are requested); None means every parameter and
    adapter factor. Gradients flow from d_logits and/or d_embedding.
    """
    if cache is None:
        raise StateError("backward called without a recorded forward pass")
    params, adapters, cfg = cache["params"], cache["adapters"], cache["cfg"]
    dtype = params["patch_embed.w"].dtype
    emb = cache["emb"]
    grads = {}

    if d_logits is None:
        d_logits = np.zeros((emb.shape[0], params["head.protos.v"].shape[0]), dtype=dtype)
    d_logits = d_logits.astype(dtype, copy=False)

    # head
    z, vhat = cache["z"], cache["vhat"]
    grads["head.protos.g"] = (d_logits * cache["raw_logits"]).sum(axis=0)
    d_raw = d_logits * params["head.protos.g"]
    dz = d_raw @ vhat
    dvhat = d_raw.T @ z
    grads["head.protos.v"] = (dvhat - (dvhat * vhat).sum(-1, keepdims=True) * vhat) / cache["vnorm"]
    h3 = cache["h3"]
    dh3 = (dz - (dz * z).sum(-1, keepdims=True) * z) / cache["h3_norm"]
    grads["head.fc3.w"] = _matgrad(cache["h_h2"], dh3)
    grads["head.fc3.b"] = _sumgrad(dh3)
    dh2 = dh3 @ params["head.fc3.w"].T
    da2 = dh2 * _gelu_grad(cache["h_a2"], cache["h_phi2"])
    grads["head.fc2.w"] = _matgrad(cache["h_h1"], da2)
    grads["head.fc2.b"] = _sumgrad(da2)
    dh1 = da2 @ params["head.fc2.w"].T
    da1 = dh1 * _gelu_grad(cache["h_a1"], cache["h_phi1"])
    grads["head.fc1.w"] = _matgrad(emb, da1)
    grads["head.fc1.b"] = _sumgrad(da1)
    demb = da1 @ params["head.fc1.w"].T
    if d_embedding is not None:
        demb = demb + d_embedding.astype(dtype, copy=False)

    head_only = trainable is not None and all(k.startswith("head.") for k in trainable)
    if not head_only:
        _backbone_backward(cache, demb, grads)

    if trainable is not None:
        grads = {k: g for k, g in grads.items() if k in trainable}
    return grads


def _backbone_backward(cache, demb, grads):
    params, adapters, cfg = cache["params"], cache["adapters"], cache["cfg"]
    b = cache["batch"]
    dtype = demb.dtype
    n_tokens = cache["x_out"].shape[1]
    scale = np.asarray(1.0 / np.sqrt(cfg.embed_dim // cfg.num_heads), dtype=dtype)

    dy = np.zeros_like(cache["x_out"])
    dy[:, 0] = demb
    dx, dgf, dbf = _layernorm_backward(dy, cache["xhatf"], cache["istdf"], params["final_norm.g"])
    grads["final_norm.g"] = dgf
    grads["final_norm.b"] = dbf

    for i in range(cfg.depth - 1, -1, -1):
        pre = f"blocks.{i}"
        blk = cache["blocks"][i]
        # mlp branch
        grads[f"{pre}.mlp.fc2.w"] = _matgrad(blk["h"], dx)
        grads[f"{pre}.mlp.fc2.b"] = _sumgrad(dx)
        dh = dx @ params[f"{pre}.mlp.fc2.w"].T
        da1 = dh * _gelu_grad(blk["a1"], blk["a1_phi"])
        grads[f"{pre}.mlp.fc1.w"] = _matgrad(blk["xn2"], da1)
        grads[f"{pre}.mlp.fc1.b"] = _sumgrad(da1)
        dxn2 = da1 @ params[f"{pre}.mlp.fc1.w"].T
        dres, dg2, db2 = _layernorm_backward(dxn2, blk["xhat2"], blk["istd2"], params[f"{pre}.ln2.g"])
        grads[f"{pre}.ln2.g"] = dg2
        grads[f"{pre}.ln2.b"] = db2
        dx = dx + dres
        # attention branch
        grads[f"{pre}.attn.o.w"] = _matgrad(blk["ctx"], dx)
        grads[f"{pre}.attn.o.b"] = _sumgrad(dx)
        dctx = _split_heads(dx @ params[f"{pre}.attn.o.w"].T, cfg.num_heads)
        att, vh = blk["att"], blk["vh"]
        datt = np.matmul(dctx, vh.swapaxes(-1, -2))
        dvh = np.matmul(att.swapaxes(-1, -2), dctx)
        ds = att * (datt - (datt * att).sum(-1, keepdims=True))
        dqh = np.matmul(ds, blk["kh"]) * scale
        dkh = np.matmul(ds.swapaxes(-1, -2), blk["qh"]) * scale
        dxn = np.zeros_like(blk["xn1"])
        for proj, dt in (("q", _merge_heads(dqh)), ("k", _merge_heads(dkh)),
                         ("v", _merge_heads(dvh))):
            key = f"{pre}.attn.{proj}"
            w = params[key + ".w"]
            grads[key + ".w"] = _matgrad(blk["xn1"], dt)
            grads[key + ".b"] = _sumgrad(dt)
            dxn += dt @ w.T
            ad = (adapters or {}).get(key + ".w")
            if ad is not None:
                dt_bt = dt @ ad.B.T
                grads[lora_key(key + ".w", "A")] = _matgrad(blk["xn1"], dt_bt)
                grads[lora_key(key + ".w", "B")] = _matgrad(blk[key + ".xa"], dt)
                dxn += dt_bt @ ad.A.T
        dres, dg1, db1 = _layernorm_backward(dxn, blk["xhat1"], blk["istd1"], params[f"{pre}.ln1.g"])
        grads[f"{pre}.ln1.g"] = dg1
        grads[f"{pre}.ln1.b"] = db1
        dx = dx + dres

    # token embedding stage
    grads["cls_token"] = dx[:, 0].sum(axis=0)
    dtok = dx[:, 1:]
    grads["patch_embed.w"] = _matgrad(cache["patches"], dtok)
    grads["patch_embed.b"] = _sumgrad(dtok)
    dpos = dx.sum(axis=0)
    if cache["pos_m"] is None:
        grads["pos_embed"] = dpos
    else:
        grads["pos_embed"] = _pos_grad_native(dpos, cache["pos_m"], cfg.grid)
