"""Alternating optimization of the prediction model and the discriminators.

Every step consumes one DomainBatch: the generator minimizes the six-term
weighted objective with the discriminators frozen, then the discriminators
minimize their classification loss on detached representations. The two
optimizers partition the parameters exactly, so each phase leaves the other
side bit-identical.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as torchF
from torch.optim import Adam

from .adversarial import PatchDiscriminator
from .checkpoint import load_checkpoint, save_checkpoint
from .config import Domain, TrainingConfig
from .data import DomainBatch, load_dataset, make_pair_sampler
from .losses import (GeneratorLossParts, LOSS_FIELDS, LossRecord, adversarial_loss,
                     bce_map_loss, discriminator_loss, l1_map_loss, make_loss_record,
                     total_generator_loss)
from .model import SaliencyDepthNet


class NonFiniteLossError(RuntimeError):
    """Training aborted on a non-finite loss; carries the component dump."""

    def __init__(self, components: dict):
        self.components = components
        dump = ", ".join(f"{k}={v!r}" for k, v in components.items())
        super().__init__(f"non-finite training loss; components: {dump}")


@contextmanager
def _frozen(*modules):
    """Temporarily exclude modules' parameters from autograd graphs."""
    saved = []
    for m in modules:
        if m is None:
            continue
        for p in m.parameters():
            saved.append((p, p.requires_grad))
            p.requires_grad_(False)
    try:
        yield
    finally:
        for p, prior in saved:
            p.requires_grad_(prior)


def _stack(samples, attr) -> torch.Tensor:
    return torch.from_numpy(np.stack([getattr(s, attr) for s in samples]))


def _batch_domain(samples) -> Domain:
    domains = {s.domain for s in samples}
    if len(domains) != 1:
        raise ValueError(f"mixed domains inside one sub-batch: {domains}")
    return next(iter(domains))


class TrainState:
    """Model, discriminators, optimizers and the step counter of one run."""

    def __init__(self, config: TrainingConfig):
        self.config = config
        torch.manual_seed(config.seed)
        self.model = SaliencyDepthNet(config)
        self.disc_s = None
        self.disc_d = None
        self.opt_d = None
        if config.ablation.use_discriminators:
            ch345 = config.encoder_config().channels_per_level[2:]
            grid = config.resolved_patch_grid()
            self.disc_s = PatchDiscriminator(ch345, patch_grid=grid)
            self.disc_d = PatchDiscriminator(ch345, patch_grid=grid)
        self.opt_g = Adam(self.model.parameters(), lr=config.lr_generator,
                          betas=config.adam_betas)
        if self.disc_s is not None:
            disc_params = list(self.disc_s.parameters()) + list(self.disc_d.parameters())
            self.opt_d = Adam(disc_params, lr=config.lr_discriminator,
                              betas=config.adam_betas)
        self.step = 0

    def parameter_count(self) -> int:
        """Trainable parameters across the model and both discriminators."""
        total = self.model.parameter_count()
        for disc in (self.disc_s, self.disc_d):
            if disc is not None:
                total += sum(p.numel() for p in disc.parameters())
        return total

    # ------------------------------------------------------------------
    # forward and the two optimization phases
    # ------------------------------------------------------------------

    def forward_losses(self, batch: DomainBatch):
        """Run the generator on both sub-batches; returns (parts, disc reps)."""
        abl = self.config.ablation
        rgb_domain = _batch_domain(batch.rgb_batch)
        x_m = _stack(batch.rgb_batch, "rgb")
        y_m = _stack(batch.rgb_batch, "saliency_gt")

        parts = GeneratorLossParts()
        out_m = self.model(x_m)
        parts.init_s = bce_map_loss(out_m.preds.F, y_m)
        parts.domains["init_s"] = rgb_domain
        reps = None

        if abl.use_depth_branch:
            rgbd_domain = _batch_domain(batch.rgbd_batch)
            x_n = _stack(batch.rgbd_batch, "rgb")
            z_n = _stack(batch.rgbd_batch, "depth_gt")
            out_n = self.model(x_n)
            parts.init_d = l1_map_loss(out_n.preds.R, z_n)
            parts.fin_s = bce_map_loss(out_m.preds.P, y_m)
            parts.fin_d = l1_map_loss(out_n.preds.Q, z_n)
            parts.domains["init_d"] = rgbd_domain
            parts.domains["fin_s"] = rgb_domain
            parts.domains["fin_d"] = rgbd_domain

            if abl.use_discriminators:
                with _frozen(self.disc_s, self.disc_d):
                    adv_s_logits = self.disc_s(*out_n.v_sal, out_n.preds.P)
                    adv_d_logits = self.disc_d(*out_m.v_dep, out_m.preds.Q)
                parts.adv_s = adversarial_loss(adv_s_logits)
                parts.adv_d = adversarial_loss(adv_d_logits)
                parts.domains["adv_s"] = rgbd_domain
                parts.domains["adv_d"] = rgb_domain

                detach = lambda ts: tuple(t.detach() for t in ts)
                reps = {
                    "ds_sup": detach((*out_m.v_sal, out_m.preds.P)),
                    "ds_unsup": detach((*out_n.v_sal, out_n.preds.P)),
                    "dt_sup": detach((*out_n.v_dep, out_n.preds.Q)),
                    "dt_unsup": detach((*out_m.v_dep, out_m.preds.Q)),
                }
        return parts, reps

    def generator_step(self, total_g: torch.Tensor) -> None:
        self.opt_g.zero_grad(set_to_none=True)
        total_g.backward()
        self.opt_g.step()

    def discriminator_step(self, reps: dict):
        """One update of both discriminators on detached representations."""
        self.opt_d.zero_grad(set_to_none=True)
        ds_loss = discriminator_loss(self.disc_s(*reps["ds_sup"]),
                                     self.disc_s(*reps["ds_unsup"]))
        dt_loss = discriminator_loss(self.disc_d(*reps["dt_sup"]),
                                     self.disc_d(*reps["dt_unsup"]))
        (ds_loss + dt_loss).backward()
        self.opt_d.step()
        return ds_loss, dt_loss

    def train_step(self, batch: DomainBatch) -> LossRecord:
        parts, reps = self.forward_losses(batch)
        total_g = total_generator_loss(parts, self.config.loss_weights)

        probe = {name: float(v.detach()) if torch.is_tensor(v) else float(v)
                 for name, v in parts.components().items()}
        if not all(math.isfinite(v) for v in probe.values()):
            raise NonFiniteLossError(probe)

        self.generator_step(total_g)
        disc_s_loss, disc_d_loss = (0.0, 0.0)
        if reps is not None:
            disc_s_loss, disc_d_loss = self.discriminator_step(reps)

        record = make_loss_record(parts, disc_s_loss, disc_d_loss,
                                  self.config.loss_weights)
        if not all(math.isfinite(v) for v in record.as_tuple()):
            raise NonFiniteLossError({k: getattr(record, k) for k in LOSS_FIELDS})
        self.step += 1
        return record

    # ------------------------------------------------------------------
    # checkpointing
    # ------------------------------------------------------------------

    def _module_groups(self):
        groups = {"model": self.model}
        if self.disc_s is not None:
            groups["disc_s"] = self.disc_s
            groups["disc_d"] = self.disc_d
        return groups

    def _optimizer_groups(self):
        groups = {"opt_g": (self.opt_g, [("model." + n, p) for n, p in
                                         self.model.named_parameters()])}
        if self.opt_d is not None:
            named = ([("disc_s." + n, p) for n, p in self.disc_s.named_parameters()]
                     + [("disc_d." + n, p) for n, p in self.disc_d.named_parameters()])
            groups["opt_d"] = (self.opt_d, named)
        return groups

    def _collect_arrays(self) -> dict[str, np.ndarray]:
        arrays = {}
        for prefix, module in self._module_groups().items():
            for name, tensor in module.state_dict().items():
                arrays[f"{prefix}/{name}"] = tensor.detach().cpu().numpy()
        for prefix, (opt, named) in self._optimizer_groups().items():
            for name, param in named:
                state = opt.state.get(param)
                if not state:
                    continue
                for key, value in state.items():
                    tensor = value if torch.is_tensor(value) else torch.tensor(value)
                    arrays[f"{prefix}/{name}/{key}"] = tensor.detach().cpu().numpy()
        arrays["rng/torch"] = torch.get_rng_state().numpy()
        return arrays

    def save(self, path) -> Path:
        path = Path(path)
        save_checkpoint(path, self.config.to_dict(), self.step, self._collect_arrays())
        return path

    def _restore_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for prefix, module in self._module_groups().items():
            state = {
                name[len(prefix) + 1:]: torch.from_numpy(arr.copy())
                for name, arr in arrays.items()
                if name.startswith(prefix + "/") and name.count("/") == 1
            }
            module.load_state_dict(state)
        for prefix, (opt, named) in self._optimizer_groups().items():
            for name, param in named:
                entry_prefix = f"{prefix}/{name}/"
                state = {
                    key[len(entry_prefix):]: torch.from_numpy(arr.copy())
                    for key, arr in arrays.items() if key.startswith(entry_prefix)
                }
                if state:
                    opt.state[param] = state
        if "rng/torch" in arrays:
            torch.set_rng_state(torch.from_numpy(arrays["rng/torch"].copy()))

    @classmethod
    def load(cls, path) -> "TrainState":
        header, arrays = load_checkpoint(path)
        config = TrainingConfig.from_dict(header["config"])
        state = cls(config)
        state._restore_arrays(arrays)
        state.step = int(header["step"])
        return state


# ----------------------------------------------------------------------
# run orchestration
# ----------------------------------------------------------------------

CSV_HEADER = "step," + ",".join(LOSS_FIELDS)


def _csv_row(step: int, record: LossRecord) -> str:
    return str(step) + "," + ",".join(format(v, ".17g") for v in record.as_tuple())


def train(config: TrainingConfig, rgb_root, rgbd_root, resume_from=None,
          log_csv=None, progress_every: int = 0):
    """Run config.steps training steps; returns (final checkpoint path, records).

    Checkpoints land in config.checkpoint_dir ("step_%06d.bin" periodically
    plus "final.bin"), and every step appends one row to the loss CSV.
    """
    if config.torch_threads > 0:
        torch.set_num_threads(config.torch_threads)

    rgb_set = load_dataset(rgb_root, Domain.RGB_SOURCE, config.input_size)
    rgbd_set = load_dataset(rgbd_root, Domain.RGBD_SOURCE, config.input_size)
    sampler = make_pair_sampler(rgb_set, rgbd_set, config.batch_size, config.seed)

    # on resume the checkpoint's config rebuilds the model; the caller's
    # config still drives scheduling (steps, checkpoint cadence, log path)
    state = TrainState.load(resume_from) if resume_from is not None else TrainState(config)

    ckpt_dir = Path(config.checkpoint_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    csv_path = Path(log_csv) if log_csv is not None else ckpt_dir / "loss_log.csv"
    mode = "a" if resume_from is not None and csv_path.exists() else "w"

    records = []
    with open(csv_path, mode) as fh:
        if mode == "w":
            fh.write(CSV_HEADER + "\n")
        for t in range(state.step, config.steps):
            record = state.train_step(sampler.batch_at(t))
            records.append(record)
            fh.write(_csv_row(t + 1, record) + "\n")
            if progress_every and (t + 1) % progress_every == 0:
                print(f"step {t + 1}/{config.steps} "
                      f"total_G={record.total_G:.4f} total_D={record.total_D:.4f}")
            if config.checkpoint_every and (t + 1) % config.checkpoint_every == 0:
                state.save(ckpt_dir / f"step_{t + 1:06d}.bin")

    final_path = state.save(ckpt_dir / "final.bin")
    return final_path, records


def infer(rgb: np.ndarray, state: TrainState) -> np.ndarray:
    """Predict a saliency map from RGB alone; output matches the input size.

    The depth branch still runs internally (its initial map feeds the
    cross-refinement query) but no depth data is consumed.
    """
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise ValueError(f"expected [3, H, W] rgb array, got {rgb.shape}")
    x = torch.from_numpy(np.array(rgb, dtype=np.float32)).unsqueeze(0)
    h0, w0 = x.shape[-2:]
    s = state.config.input_size
    if (h0, w0) != (s, s):
        x = torchF.interpolate(x, size=(s, s), mode="bilinear", align_corners=False)
    with torch.no_grad():
        pred = state.model.predict_map(x)
        if pred.shape[-2:] != (h0, w0):
            pred = torchF.interpolate(pred, size=(h0, w0), mode="bilinear",
                                      align_corners=False)
    return pred[0, 0].clamp(0, 1).numpy()


def load_train_state(path) -> TrainState:
    return TrainState.load(path)
