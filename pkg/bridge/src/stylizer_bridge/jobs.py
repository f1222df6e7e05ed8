"""Bridge job files and the directory-serving worker.

A job is a JSON object: {"content": path, "style": path, "lambda": number,
"output": path, "warm_start": optional path}. The server processes job
files in name order, skips jobs whose output already exists, writes a
``.done`` marker per completed job and a ``.error`` marker (with the
message) for jobs that fail, then keeps going.
"""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path

from .train import JobError, TrainSettings, train_oneshot

log = logging.getLogger(__name__)

REQUIRED_KEYS = ("content", "style", "lambda", "output")


def load_job(path) -> dict:
    try:
        with open(path) as f:
            job = json.load(f)
    except json.JSONDecodeError as exc:
        raise JobError(f"malformed job JSON: {exc}") from exc
    if not isinstance(job, dict):
        raise JobError("job file must hold a JSON object")
    missing = [k for k in REQUIRED_KEYS if k not in job]
    if missing:
        raise JobError(f"job missing keys: {missing}")
    for key in ("content", "style"):
        if not Path(job[key]).is_file():
            raise JobError(f"{key} image not found: {job[key]}")
    return job


def run_job(path, settings: TrainSettings):
    job = load_job(path)
    result = train_oneshot(job, settings)
    log.info(
        "%s: loss %.4g -> %.4g in %d iterations",
        Path(path).name,
        result.initial_loss,
        result.final_loss,
        result.iterations_run,
    )
    return result


def serve_jobs(job_dir, settings: TrainSettings, poll: float = 0.0) -> list[str]:
    """Process every job file in ``job_dir``; one pass when poll <= 0,
    otherwise rescan forever at that interval. Idempotent."""
    job_dir = Path(job_dir)
    if not job_dir.is_dir():
        raise FileNotFoundError(f"job directory not found: {job_dir}")
    processed: list[str] = []
    while True:
        for path in sorted(job_dir.glob("*.json")):
            done = path.with_suffix(path.suffix + ".done")
            error = path.with_suffix(path.suffix + ".error")
            if done.exists() or error.exists():
                continue
            try:
                job = load_job(path)
                if Path(job["output"]).exists():
                    done.write_text("output already present\n")
                    continue
                result = train_oneshot(job, settings)
                done.write_text(
                    f"final_loss={result.final_loss:.6g} "
                    f"iterations={result.iterations_run}\n"
                )
                processed.append(path.name)
                log.info("done %s", path.name)
            except (JobError, OSError) as exc:
                error.write_text(f"{exc}\n")
                log.warning("job %s failed: %s", path.name, exc)
        if poll <= 0:
            return processed
        time.sleep(poll)
