"""One-shot training of the generator against a (content, style) pair."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .features import make_features, gram, weighted_gram_loss
from .generator import HighResGenerator

log = logging.getLogger(__name__)

WEIGHTS_SUFFIX = ".weights.npz"


class JobError(RuntimeError):
    """A job cannot be completed (bad inputs, diverged training, ...)."""


@dataclass
class TrainSettings:
    features: str = "vgg19"
    iterations: int = 300
    lr: float = 0.5
    seed: int = 0


# SGD with a decaying step: the unsquared matrix-norm loss has a kink at its
# minimum, so a constant step limit-cycles instead of settling
def _step_lr(lr0: float, iteration: int) -> float:
    return lr0 / (1.0 + iteration / 25.0)


@dataclass
class TrainResult:
    output: Path
    weights: Path
    initial_loss: float
    final_loss: float
    iterations_run: int
    losses: list[float] = field(default_factory=list)


def load_image(path) -> torch.Tensor:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)


def save_image(path, tensor: torch.Tensor) -> None:
    arr = tensor.detach().squeeze(0).permute(1, 2, 0).clamp(0, 1).numpy()
    Image.fromarray(np.rint(arr * 255.0).astype(np.uint8)).save(path)


def save_weights(path, model: torch.nn.Module) -> None:
    np.savez(path, **{k: v.numpy() for k, v in model.state_dict().items()})


def load_weights(path, model: torch.nn.Module) -> None:
    with np.load(path) as data:
        state = {k: torch.from_numpy(data[k]) for k in data.files}
    model.load_state_dict(state)


def train_oneshot(
    job: dict,
    settings: TrainSettings,
    stop_below: float | None = None,
) -> TrainResult:
    """Optimize the generator so its output minimizes the weighted Gram loss.

    Writes the stylized image to ``job["output"]`` and the final weights to
    the ``.weights.npz`` sidecar (the warm-start handle for the next job).
    ``stop_below`` ends training early once the loss reaches that value.
    """
    torch.manual_seed(settings.seed)
    content = load_image(job["content"])
    style = load_image(job["style"])
    weight = float(job["lambda"])
    if not 0.0 <= weight <= 1.0:
        raise JobError(f"lambda {weight} outside [0, 1]")

    features = make_features(settings.features)
    generator = HighResGenerator()
    warm = job.get("warm_start")
    if warm:
        if Path(warm).is_file():
            try:
                load_weights(warm, generator)
                log.info("warm start from %s", warm)
            except Exception as exc:
                raise JobError(f"bad warm start weights {warm}: {exc}") from exc
        else:
            log.info("warm start %s not present; cold start", warm)

    with torch.no_grad():
        grams_c = [gram(f) for f in features(content)]
        grams_s = [gram(f) for f in features(style)]

    optimizer = torch.optim.SGD(generator.parameters(), lr=settings.lr)
    losses: list[float] = []
    iterations_run = 0
    for it in range(1, settings.iterations + 1):
        for group in optimizer.param_groups:
            group["lr"] = _step_lr(settings.lr, it - 1)
        optimizer.zero_grad()
        output = generator(content)
        loss = weighted_gram_loss(features(output), grams_c, grams_s, weight)
        value = float(loss.detach())
        if math.isnan(value) or math.isinf(value):
            raise JobError(f"loss diverged to {value} at iteration {it}")
        losses.append(value)
        iterations_run = it
        if stop_below is not None and value <= stop_below:
            break
        loss.backward()
        optimizer.step()

    out_path = Path(job["output"])
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with torch.no_grad():
        save_image(out_path, generator(content))
    weights_path = Path(str(out_path) + WEIGHTS_SUFFIX)
    save_weights(weights_path, generator)
    return TrainResult(
        output=out_path,
        weights=weights_path,
        initial_loss=losses[0],
        final_loss=losses[-1],
        iterations_run=iterations_run,
        losses=losses,
    )
