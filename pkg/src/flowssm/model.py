"""The statistical shape model: auto-decoder training, PCA latent statistics,
span-restricted inference and latent-space sampling.

Training runs in two consecutive stages against the same targets: first the
global deformer (shared MLP + one latent per shape), then the local deformer
(shared MLP, trainable kernel widths, M local latents per shape) applied to
the globally deformed template. The loss is the symmetric, unsquared Chamfer
distance between freshly sampled template and target surface points. After
training, separate PCAs over the global and the flattened local latents
describe the population; inference optimizes PCA coefficients directly, so
fitted latents lie exactly in the training span.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import autodiff as ad
from .autodiff import Adam, Tape, Tensor
from .checkpoint import load_container, save_container
from .errors import DataError, DegenerateDataWarning, NonFiniteLoss, NonFiniteValue
from .flow import (FlowConfig, ImNetMlp, flow_config_from_dict,
                   flow_config_to_dict, integrate_flow)
from .latents import (ControlPointSet, LatentState, compose_deformers,
                      place_control_points, rbf_weights)
from .mesh.core import PointSet, TriMesh
from .mesh.sampling import sample_surface
from .validation import check_matrix, check_rng

LOSS_MODES = ("symmetric", "one_sided_deformed_to_target", "one_sided_target_to_deformed")


@dataclass
class PcaBasis:
    """Mean, orthonormal components (modes x dim) and per-mode stddevs."""

    mean: np.ndarray
    components: np.ndarray
    stddevs: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.components = np.asarray(self.components, dtype=np.float64).reshape(-1, len(self.mean))
        self.stddevs = np.asarray(self.stddevs, dtype=np.float64).reshape(-1)
        if len(self.stddevs) != len(self.components):
            raise DataError("one stddev per component")
        if np.any(self.stddevs < 0) or np.any(np.diff(self.stddevs) > 1e-12):
            raise DataError("stddevs must be non-negative and sorted descending")
        if self.n_modes:
            gram = self.components @ self.components.T
            if not np.allclose(gram, np.eye(self.n_modes), atol=1e-8):
                raise DataError("components must be orthonormal")

    @property
    def n_modes(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return len(self.mean)

    def project(self, z: np.ndarray) -> np.ndarray:
        return self.components @ (np.asarray(z, dtype=np.float64) - self.mean)

    def decode(self, coeffs: np.ndarray) -> np.ndarray:
        c = np.asarray(coeffs, dtype=np.float64)
        if self.n_modes == 0:
            return self.mean.copy()
        return self.mean + c @ self.components

    def span_residual(self, z: np.ndarray) -> float:
        """Norm of the component of (z - mean) outside the span."""
        centered = np.asarray(z, dtype=np.float64) - self.mean
        if self.n_modes == 0:
            return float(np.linalg.norm(centered))
        return float(np.linalg.norm(centered - self.components.T @ (self.components @ centered)))


def fit_pca(latents) -> PcaBasis:
    """Mean-centered PCA keeping every mode with nonzero variance.

    Stddevs are the sample standard deviations (ddof=1) of the training
    projections. Component signs are fixed so the largest-magnitude entry of
    each component is positive.
    """
    x = check_matrix(latents, "latents")
    n = x.shape[0]
    if n < 2:
        raise DataError("PCA needs at least two rows")
    mean = x.mean(axis=0)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    keep = s > (s[0] * 1e-10 if s.size and s[0] > 0 else 0.0)
    components = vt[keep]
    stddevs = s[keep] / np.sqrt(n - 1)
    if components.shape[0] == 0:
        warnings.warn("all latent rows identical: PCA has zero modes", DegenerateDataWarning)
        components = np.zeros((0, x.shape[1]))
        stddevs = np.zeros(0)
    else:
        flip = np.sign(components[np.arange(len(components)),
                                  np.argmax(np.abs(components), axis=1)])
        components = components * flip[:, None]
    return PcaBasis(mean, components, stddevs)


@dataclass
class TrainingConfig:
    """Training hyperparameters (defaults match the reference protocol)."""

    epochs: int = 300
    lr: float = 1e-3
    batch_size: int = 16
    n_sample_points: int = 15000
    latent_init_std: float = 0.1
    latent_dim: int = 128
    n_control_points: int = 125
    initial_eps: float = 3.0
    hidden: tuple[int, ...] = (512, 512, 256, 128)
    alpha: float = 0.02
    flow: FlowConfig = field(default_factory=FlowConfig)
    inference_epochs: int = 600
    inference_lr: float = 0.01
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        for name in ("epochs", "lr", "batch_size", "n_sample_points",
                     "latent_init_std", "latent_dim", "n_control_points",
                     "initial_eps", "inference_epochs", "inference_lr"):
            if not getattr(self, name) > 0:
                raise DataError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs, "lr": self.lr, "batch_size": self.batch_size,
            "n_sample_points": self.n_sample_points,
            "latent_init_std": self.latent_init_std,
            "latent_dim": self.latent_dim,
            "n_control_points": self.n_control_points,
            "initial_eps": self.initial_eps,
            "hidden": list(self.hidden), "alpha": self.alpha,
            "flow": flow_config_to_dict(self.flow),
            "inference_epochs": self.inference_epochs,
            "inference_lr": self.inference_lr,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        d = dict(d)
        if "flow" in d:
            d["flow"] = flow_config_from_dict(d["flow"])
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(**d)


@dataclass
class FlowSsmModel:
    """Trained shape model: template, two deformers and latent statistics."""

    template: TriMesh
    mlp_global: ImNetMlp
    mlp_local: ImNetMlp | None
    cps: ControlPointSet | None
    latent_dim: int
    z_global_train: np.ndarray  # (N, d)
    z_local_train: np.ndarray | None  # (N, M, d)
    pca_global: PcaBasis
    pca_local: PcaBasis | None
    config: TrainingConfig
    norm_scale: float | None = None
    train_log: dict = field(default_factory=dict)

    @property
    def has_local(self) -> bool:
        return self.mlp_local is not None and self.pca_local is not None

    @property
    def n_train(self) -> int:
        return self.z_global_train.shape[0]

    def decode_points(self, points, state: LatentState, cfg: FlowConfig | None = None) -> np.ndarray:
        """Deform arbitrary points through the (composed) trained flow."""
        cfg = cfg or self.config.flow
        local = (self.mlp_local, self.cps, state.z_local) if self.has_local else None
        out = compose_deformers(np.asarray(points, dtype=np.float64),
                                (self.mlp_global, state.z_global), local, cfg)
        return out.data.copy()

    def decode_mesh(self, state: LatentState, cfg: FlowConfig | None = None) -> TriMesh:
        """Deform the template vertices; connectivity is preserved."""
        return self.template.with_vertices(self.decode_points(self.template.vertices, state, cfg))

    def zero_state(self) -> LatentState:
        m = self.cps.m if self.cps is not None else 1
        return LatentState(np.zeros(self.latent_dim), np.zeros((m, self.latent_dim)))

    def training_states(self) -> list[LatentState]:
        states = []
        for i in range(self.n_train):
            zl = (self.z_local_train[i] if self.z_local_train is not None
                  else np.zeros((self.cps.m if self.cps else 1, self.latent_dim)))
            states.append(LatentState(self.z_global_train[i], zl))
        return states

    def training_weights(self) -> np.ndarray:
        """PCA coefficients of the training shapes (global, then local)."""
        cols = [np.stack([self.pca_global.project(z) for z in self.z_global_train])]
        if self.has_local:
            flat = self.z_local_train.reshape(self.n_train, -1)
            cols.append(np.stack([self.pca_local.project(z) for z in flat]))
        return np.concatenate(cols, axis=1)


def _check_preprocessed(shapes: list[TriMesh]):
    for i, s in enumerate(shapes):
        if np.abs(s.vertices).max() > 1.25:
            raise DataError(
                f"shape {i} exceeds the normalized unit box; run preprocessing first"
            )


def _chamfer_terms(deformed: Tensor, target: np.ndarray, mode: str) -> Tensor:
    """Differentiable Chamfer loss with nearest neighbors held fixed."""
    d_np = deformed.data
    if mode in ("symmetric", "one_sided_target_to_deformed"):
        idx_t2d = cKDTree(d_np).query(target, k=1)[1]
        to_def = ad.tmean(ad.row_norm(ad.gather(deformed, idx_t2d) - target))
    if mode in ("symmetric", "one_sided_deformed_to_target"):
        idx_d2t = cKDTree(target).query(d_np, k=1)[1]
        to_tgt = ad.tmean(ad.row_norm(deformed - target[idx_d2t]))
    if mode == "symmetric":
        return ad.scale(to_def + to_tgt, 0.5)
    if mode == "one_sided_deformed_to_target":
        return to_tgt
    if mode == "one_sided_target_to_deformed":
        return to_def
    raise DataError(f"unknown loss mode {mode!r}")


def _stacked_rows(batch_size: int, n: int) -> list[np.ndarray]:
    return [np.arange(i * n, (i + 1) * n) for i in range(batch_size)]


def _train_global_stage(shapes, template, cfg: TrainingConfig, rng):
    n_shapes = len(shapes)
    mlp = ImNetMlp(3 + cfg.latent_dim, cfg.hidden, alpha=cfg.alpha,
                   seed=rng.integers(2**31))
    zg = Tensor(rng.normal(0.0, cfg.latent_init_std, size=(n_shapes, cfg.latent_dim)),
                requires_grad=True)
    params = {f"g/{k}": v for k, v in mlp.params.items()}
    params["zg"] = zg
    opt = Adam(params, lr=cfg.lr)
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_shapes)
        epoch_loss = []
        for start in range(0, n_shapes, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            tpl = sample_surface(template, cfg.n_sample_points, seed=rng).points
            targets = [sample_surface(shapes[i], cfg.n_sample_points, seed=rng).points
                       for i in batch]
            x0 = np.tile(tpl, (len(batch), 1))
            point_owner = np.repeat(batch, cfg.n_sample_points)
            rows = _stacked_rows(len(batch), cfg.n_sample_points)
            try:
                with Tape() as tape:
                    lat = ad.gather(zg, point_owner)
                    out = integrate_flow(mlp, x0, lat, cfg.flow)
                    loss = None
                    for rr, tgt in zip(rows, targets):
                        term = _chamfer_terms(ad.gather(out, rr), tgt, "symmetric")
                        loss = term if loss is None else loss + term
                    loss = ad.scale(loss, 1.0 / len(batch))
                    ad.backward(loss, tape)
            except NonFiniteValue as exc:
                raise NonFiniteLoss(
                    f"global stage diverged at epoch {epoch}: {exc}") from exc
            opt.step()
            opt.zero_grad()
            epoch_loss.append(loss.item())
        losses.append(float(np.mean(epoch_loss)))
    return mlp, zg.data.copy(), losses


def _global_only_forward(mlp_g, zg_rows: np.ndarray, x0: np.ndarray, cfg: TrainingConfig) -> np.ndarray:
    """Frozen global deformation (no tape)."""
    out = integrate_flow(mlp_g, x0, zg_rows, cfg.flow)
    return out.data


def _train_local_stage(shapes, template, cfg: TrainingConfig, rng,
                       mlp_g: ImNetMlp, zg: np.ndarray, cps_positions: np.ndarray):
    n_shapes = len(shapes)
    m = len(cps_positions)
    mlp = ImNetMlp(3 + cfg.latent_dim, cfg.hidden, alpha=cfg.alpha,
                   seed=rng.integers(2**31))
    zl = Tensor(rng.normal(0.0, cfg.latent_init_std, size=(n_shapes * m, cfg.latent_dim)),
                requires_grad=True)
    eps = Tensor(np.full(m, cfg.initial_eps), requires_grad=True)
    params = {f"l/{k}": v for k, v in mlp.params.items()}
    params["zl"] = zl
    params["eps"] = eps
    opt = Adam(params, lr=cfg.lr)
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_shapes)
        epoch_loss = []
        for start in range(0, n_shapes, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            tpl = sample_surface(template, cfg.n_sample_points, seed=rng).points
            targets = [sample_surface(shapes[i], cfg.n_sample_points, seed=rng).points
                       for i in batch]
            x0 = np.tile(tpl, (len(batch), 1))
            zg_rows = zg[np.repeat(batch, cfg.n_sample_points)]
            x_mid = _global_only_forward(mlp_g, zg_rows, x0, cfg)
            rows = _stacked_rows(len(batch), cfg.n_sample_points)
            try:
                with Tape() as tape:
                    w = rbf_weights(cps_positions, eps, x_mid)  # (B*n, M)
                    blocks = []
                    for bi, shape_idx in enumerate(batch):
                        w_i = ad.gather(w, rows[bi])
                        zl_i = ad.gather(zl, shape_idx * m + np.arange(m))
                        blocks.append(w_i @ zl_i)
                    z_pts = ad.concat(blocks, axis=0)
                    out = integrate_flow(mlp, x_mid, z_pts, cfg.flow)
                    loss = None
                    for rr, tgt in zip(rows, targets):
                        term = _chamfer_terms(ad.gather(out, rr), tgt, "symmetric")
                        loss = term if loss is None else loss + term
                    loss = ad.scale(loss, 1.0 / len(batch))
                    ad.backward(loss, tape)
            except NonFiniteValue as exc:
                raise NonFiniteLoss(
                    f"local stage diverged at epoch {epoch}: {exc}") from exc
            opt.step()
            opt.zero_grad()
            epoch_loss.append(loss.item())
        losses.append(float(np.mean(epoch_loss)))
    return mlp, zl.data.reshape(n_shapes, m, cfg.latent_dim).copy(), np.abs(eps.data.copy()), losses


def train(
    shapes: list[TriMesh],
    template: TriMesh,
    cfg: TrainingConfig | None = None,
    include_local: bool = True,
    norm_scale: float | None = None,
) -> tuple[FlowSsmModel, list[LatentState]]:
    """Fit the shape model to preprocessed (aligned, normalized) meshes.

    Latents are initialized from N(0, latent_init_std^2) and optimized
    jointly with the shared MLP weights; the two deformers train
    consecutively against the same targets. Deterministic for a given seed.
    """
    cfg = cfg or TrainingConfig()
    if len(shapes) < 2:
        raise DataError("training needs at least two shapes")
    _check_preprocessed(shapes + [template])
    rng = check_rng(cfg.seed)

    mlp_g, zg, losses_g = _train_global_stage(shapes, template, cfg, rng)
    pca_global = fit_pca(zg)

    model = FlowSsmModel(
        template=template,
        mlp_global=mlp_g,
        mlp_local=None,
        cps=None,
        latent_dim=cfg.latent_dim,
        z_global_train=zg,
        z_local_train=None,
        pca_global=pca_global,
        pca_local=None,
        config=cfg,
        norm_scale=norm_scale,
        train_log={"stage1": losses_g},
    )
    if include_local:
        model = add_local_stage(model, shapes, rng=rng)
    return model, model.training_states()


def add_local_stage(
    model: FlowSsmModel, shapes: list[TriMesh], rng=None
) -> FlowSsmModel:
    """Train the local deformer on top of a (frozen) global-only model.

    Returns a new model; the input model keeps only its global stage. Used
    both by :func:`train` and by the global-vs-local ablation.
    """
    cfg = model.config
    if rng is None:
        # continue from a documented offset so a separate ablation call is
        # reproducible without replaying stage 1's RNG consumption
        rng = check_rng(cfg.seed + 1_000_003)
    cps = place_control_points(model.template, cfg.n_control_points,
                               cfg.initial_eps, seed=cfg.seed)
    mlp_l, zl, eps, losses_l = _train_local_stage(
        shapes, model.template, cfg, rng, model.mlp_global,
        model.z_global_train, cps.positions)
    cps = ControlPointSet(cps.positions, np.maximum(eps, 1e-6))
    flat = zl.reshape(len(shapes), -1)
    pca_local = fit_pca(flat)
    return FlowSsmModel(
        template=model.template,
        mlp_global=model.mlp_global,
        mlp_local=mlp_l,
        cps=cps,
        latent_dim=cfg.latent_dim,
        z_global_train=model.z_global_train,
        z_local_train=zl,
        pca_global=model.pca_global,
        pca_local=pca_local,
        config=cfg,
        norm_scale=model.norm_scale,
        train_log={**model.train_log, "stage2": losses_l},
    )


def _resolve_target(target, n_points: int, rng) -> np.ndarray:
    """Fresh surface samples for meshes; fixed points for point sets."""
    if isinstance(target, TriMesh):
        return sample_surface(target, n_points, seed=rng).points
    if isinstance(target, PointSet):
        return target.points
    return np.asarray(target, dtype=np.float64)


def fit_latent(
    model: FlowSsmModel,
    target,
    loss_mode: str = "symmetric",
    iters: int | None = None,
    lr: float | None = None,
    n_sample_points: int | None = None,
    seed: int = 0,
) -> tuple[LatentState, TriMesh]:
    """Embed a target (mesh or point set) in the trained shape space.

    PCA coefficient vectors are optimized directly (MLP weights and kernel
    widths frozen), global coefficients first and local second, so the
    result lies exactly in the span of the training latents. Loss modes:
    ``symmetric`` for full targets, ``one_sided_deformed_to_target`` for
    partial meshes (unobserved regions unpenalized),
    ``one_sided_target_to_deformed`` for sparse point clouds (every observed
    point must be explained).
    """
    if loss_mode not in LOSS_MODES:
        raise DataError(f"loss_mode must be one of {LOSS_MODES}")
    cfg = model.config
    iters = cfg.inference_epochs if iters is None else iters
    lr = cfg.inference_lr if lr is None else lr
    n_pts = cfg.n_sample_points if n_sample_points is None else n_sample_points
    rng = check_rng(seed)

    basis_g = model.pca_global
    coeff_g = Tensor(rng.normal(0.0, 0.1, size=max(basis_g.n_modes, 1)),
                     requires_grad=True)
    if basis_g.n_modes == 0:
        z_g = basis_g.mean.copy()
    else:
        opt = Adam({"coeff": coeff_g}, lr=lr)
        for _ in range(iters):
            tpl = sample_surface(model.template, n_pts, seed=rng).points
            tgt = _resolve_target(target, n_pts, rng)
            try:
                with Tape() as tape:
                    z = ad.reshape(ad.reshape(coeff_g, (1, basis_g.n_modes)) @ basis_g.components,
                                   (basis_g.dim,)) + basis_g.mean
                    out = integrate_flow(model.mlp_global, tpl, z, cfg.flow)
                    loss = _chamfer_terms(out, tgt, loss_mode)
                    ad.backward(loss, tape)
            except NonFiniteValue as exc:
                raise NonFiniteLoss(f"global latent fit diverged: {exc}") from exc
            opt.step()
            opt.zero_grad()
        z_g = basis_g.decode(coeff_g.data[: basis_g.n_modes])

    m = model.cps.m if model.cps is not None else 1
    z_l = np.zeros((m, model.latent_dim))
    if model.has_local:
        basis_l = model.pca_local
        if basis_l.n_modes > 0:
            coeff_l = Tensor(rng.normal(0.0, 0.1, size=basis_l.n_modes),
                             requires_grad=True)
            opt = Adam({"coeff": coeff_l}, lr=lr)
            eps_frozen = model.cps.inverse_widths
            for _ in range(iters):
                tpl = sample_surface(model.template, n_pts, seed=rng).points
                tgt = _resolve_target(target, n_pts, rng)
                zg_rows = np.tile(z_g, (n_pts, 1))
                x_mid = _global_only_forward(model.mlp_global, zg_rows, tpl, cfg)
                w_np = rbf_weights(model.cps.positions, eps_frozen, x_mid)
                try:
                    with Tape() as tape:
                        z_mat = ad.reshape(
                            ad.reshape(coeff_l, (1, basis_l.n_modes)) @ basis_l.components,
                            (m, model.latent_dim)) + basis_l.mean.reshape(m, model.latent_dim)
                        z_pts = w_np @ z_mat
                        out = integrate_flow(model.mlp_local, x_mid, z_pts, cfg.flow)
                        loss = _chamfer_terms(out, tgt, loss_mode)
                        ad.backward(loss, tape)
                except NonFiniteValue as exc:
                    raise NonFiniteLoss(f"local latent fit diverged: {exc}") from exc
                opt.step()
                opt.zero_grad()
            z_l = basis_l.decode(coeff_l.data).reshape(m, model.latent_dim)
        else:
            z_l = basis_l.mean.reshape(m, model.latent_dim)

    state = LatentState(z_g, z_l)
    return state, model.decode_mesh(state)


def sample_shape(model: FlowSsmModel, seed=0) -> tuple[TriMesh, LatentState]:
    """Draw a random shape: per-mode N(0, stddev^2) coefficients, decoded
    through the PCA bases and the deformers; template connectivity kept."""
    rng = check_rng(seed)
    bg = model.pca_global
    z_g = bg.decode(rng.normal(0.0, 1.0, size=bg.n_modes) * bg.stddevs)
    m = model.cps.m if model.cps is not None else 1
    if model.has_local:
        bl = model.pca_local
        z_l = bl.decode(rng.normal(0.0, 1.0, size=bl.n_modes) * bl.stddevs)
        z_l = z_l.reshape(m, model.latent_dim)
    else:
        z_l = np.zeros((m, model.latent_dim))
    state = LatentState(z_g, z_l)
    return model.decode_mesh(state), state


def save_model(model: FlowSsmModel, path) -> None:
    """Serialize to the binary tensor container + JSON manifest."""
    tensors: dict[str, np.ndarray] = {
        "template/vertices": model.template.vertices,
        "template/faces": model.template.faces.astype(np.float64),
        "z_global_train": model.z_global_train,
        "pca_global/mean": model.pca_global.mean,
        "pca_global/components": model.pca_global.components,
        "pca_global/stddevs": model.pca_global.stddevs,
    }
    for k, v in model.mlp_global.params.items():
        tensors[f"mlp_global/{k}"] = v.data
    if model.has_local:
        for k, v in model.mlp_local.params.items():
            tensors[f"mlp_local/{k}"] = v.data
        tensors["cps/positions"] = model.cps.positions
        tensors["cps/inverse_widths"] = model.cps.inverse_widths
        tensors["z_local_train"] = model.z_local_train.reshape(model.n_train, -1)
        tensors["pca_local/mean"] = model.pca_local.mean
        tensors["pca_local/components"] = model.pca_local.components
        tensors["pca_local/stddevs"] = model.pca_local.stddevs
    manifest = {
        "kind": "flowssm-model",
        "latent_dim": model.latent_dim,
        "has_local": model.has_local,
        "n_train": model.n_train,
        "n_control_points": model.cps.m if model.cps is not None else 0,
        "mlp": model.mlp_global.spec(),
        "config": model.config.to_dict(),
        "norm_scale": model.norm_scale,
        "train_log": model.train_log,
    }
    save_container(path, tensors, manifest)


def load_model(path) -> FlowSsmModel:
    tensors, manifest = load_container(path)
    if manifest.get("kind") != "flowssm-model":
        raise DataError(f"{path} is not a model checkpoint")
    cfg = TrainingConfig.from_dict(manifest["config"])
    template = TriMesh(tensors["template/vertices"],
                       tensors["template/faces"].astype(np.int64))
    mlp_g = ImNetMlp.from_spec(manifest["mlp"])
    mlp_g.load_state_arrays(
        {k.split("/", 1)[1]: v for k, v in tensors.items() if k.startswith("mlp_global/")})
    pca_g = PcaBasis(tensors["pca_global/mean"], tensors["pca_global/components"],
                     tensors["pca_global/stddevs"])
    has_local = bool(manifest["has_local"])
    mlp_l = cps = pca_l = z_local = None
    if has_local:
        mlp_l = ImNetMlp.from_spec(manifest["mlp"])
        mlp_l.load_state_arrays(
            {k.split("/", 1)[1]: v for k, v in tensors.items() if k.startswith("mlp_local/")})
        cps = ControlPointSet(tensors["cps/positions"], tensors["cps/inverse_widths"])
        pca_l = PcaBasis(tensors["pca_local/mean"], tensors["pca_local/components"],
                         tensors["pca_local/stddevs"])
        n_train = int(manifest["n_train"])
        z_local = tensors["z_local_train"].reshape(n_train, cps.m, manifest["latent_dim"])
    return FlowSsmModel(
        template=template,
        mlp_global=mlp_g,
        mlp_local=mlp_l,
        cps=cps,
        latent_dim=int(manifest["latent_dim"]),
        z_global_train=tensors["z_global_train"],
        z_local_train=z_local,
        pca_global=pca_g,
        pca_local=pca_l,
        config=cfg,
        norm_scale=manifest.get("norm_scale"),
        train_log=manifest.get("train_log", {}),
    )
