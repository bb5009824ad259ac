"""Training loop: cosine-annealed Adam on pixel + weighted physics loss.

Std-SR and PINNSR are the same code path; eta = 0 switches the physics term
off. The learning rate follows cosine annealing with warm restarts: it decays
from lr_max to lr_min within one cycle and snaps back to lr_max at each cycle
boundary, for n_cycles cycles. Desk-scale runs shrink the cycle length from
the reference 2.5e5 iterations; the shrink factor is recorded in every
checkpoint so runs remain comparable.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .data import Corpus
from .network import NetworkConfig, build_network
from .residual import total_loss

REFERENCE_CYCLE_ITERS = 250_000


@dataclass(frozen=True)
class TrainConfig:
    eta: float = 100.0              # 0 -> Std-SR objective
    batch_size: int = 16
    lr_max: float = 2e-4
    lr_min: float = 1e-7
    cycle_iters: int = 20_000       # desk default; reference scale is 2.5e5
    n_cycles: int = 4
    adam_betas: tuple = (0.9, 0.999)
    lr_patch: int = 16
    seed: int = 0
    log_every: int = 50

    @property
    def total_iters(self) -> int:
        return self.cycle_iters * self.n_cycles

    @property
    def scale_factor(self) -> float:
        return self.cycle_iters / REFERENCE_CYCLE_ITERS


def cosine_restart_lr(iteration: int, cfg: TrainConfig) -> float:
    """Learning rate at a (0-based) iteration; resets to lr_max each cycle."""
    phase = (iteration % cfg.cycle_iters) / cfg.cycle_iters
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + math.cos(math.pi * phase))


def _atomic_save(payload, path):
    tmp = f"{path}.tmp"
    torch.save(payload, tmp)
    os.replace(tmp, path)


def save_checkpoint(path, model, net_cfg: NetworkConfig, train_cfg: TrainConfig,
                    iteration: int):
    _atomic_save({
        "state_dict": model.state_dict(),
        "network": asdict(net_cfg),
        "train": asdict(train_cfg),
        "iteration": iteration,
        "scale_factor": train_cfg.scale_factor,
    }, path)


def load_checkpoint(path):
    payload = torch.load(path, map_location="cpu", weights_only=False)
    net_cfg = NetworkConfig(**payload["network"])
    model = build_network(net_cfg)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, net_cfg, payload


def train(model, corpus: Corpus, train_cfg: TrainConfig, out_dir,
          progress=None):
    """Minimize the total loss over random patch batches.

    Writes loss curves to out_dir/losses.csv and checkpoints at cycle
    boundaries (plus final.pt). A non-finite loss aborts after dumping the
    offending batch for diagnosis. Returns the path of the final checkpoint.
    """
    os.makedirs(out_dir, exist_ok=True)
    torch.manual_seed(train_cfg.seed)
    rng = np.random.default_rng(train_cfg.seed)
    net_cfg = model.cfg
    optimizer = torch.optim.Adam(model.parameters(), lr=train_cfg.lr_max,
                                 betas=train_cfg.adam_betas)
    model.train()

    csv_path = os.path.join(out_dir, "losses.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "l_tot", "l_pix", "l_phys", "lr"])
        for iteration in range(train_cfg.total_iters):
            lr_now = cosine_restart_lr(iteration, train_cfg)
            for group in optimizer.param_groups:
                group["lr"] = lr_now

            batch = corpus.patch_batch(rng, train_cfg.batch_size, train_cfg.lr_patch)
            lr_in = torch.from_numpy(batch["lr"])
            hr = torch.from_numpy(batch["hr"])
            sr = model(lr_in)
            l_tot, l_pix, l_phys = total_loss(
                sr, hr, train_cfg.eta, batch["ux"], batch["uy"],
                batch["kappa"], batch["dx"], batch["dt"])
            if not torch.isfinite(l_tot):
                dump = os.path.join(out_dir, f"nan_batch_{iteration:07d}.npz")
                np.savez(dump, **batch, sr=sr.detach().numpy())
                raise RuntimeError(
                    f"non-finite loss at iteration {iteration}; batch dumped to {dump}")

            optimizer.zero_grad()
            l_tot.backward()
            optimizer.step()

            logs = (float(l_tot.detach()), float(l_pix.detach()),
                    float(l_phys.detach()))
            writer.writerow([iteration, *logs, lr_now])
            if progress is not None and iteration % train_cfg.log_every == 0:
                progress(iteration, *logs, lr_now)
            if (iteration + 1) % train_cfg.cycle_iters == 0:
                cycle = (iteration + 1) // train_cfg.cycle_iters
                save_checkpoint(os.path.join(out_dir, f"cycle_{cycle:02d}.pt"),
                                model, net_cfg, train_cfg, iteration + 1)

    final = os.path.join(out_dir, "final.pt")
    save_checkpoint(final, model, net_cfg, train_cfg, train_cfg.total_iters)
    return final
