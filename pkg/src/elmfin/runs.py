"""Run-directory plumbing shared by the CLI subcommands.

Every run owns one directory holding the resolved config echo, data CSVs,
a JSON summary, timings, and a log. Data CSVs are pure functions of the
config (floats written with shortest round-trip repr); wall-clock numbers
live only in timings.json and the log, so re-running a config reproduces
every CSV byte for byte."""

from __future__ import annotations

import datetime
import json
import os
import subprocess

from . import __version__


def version_string() -> str:
    """git-describe-style identifier of the code that produced a run."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=os.path.dirname(__file__),
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"elmfin-{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"elmfin-{__version__}"


def fmt(value) -> str:
    """Deterministic CSV field formatting."""
    if isinstance(value, float):
        return repr(value)
    return str(value)


class RunWriter:
    def __init__(self, out_dir: str):
        self.dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.timings: dict[str, float] = {}
        self._log_path = os.path.join(out_dir, "run.log")

    def path(self, name: str) -> str:
        return os.path.join(self.dir, name)

    def log(self, message: str) -> None:
        stamp = datetime.datetime.now().isoformat(timespec="seconds")
        with open(self._log_path, "a") as fh:
            fh.write(f"{stamp} {message}\n")

    def echo_config(self, subcommand: str, cfg: dict) -> None:
        with open(self.path("config.txt"), "w") as fh:
            fh.write(f"subcommand = {subcommand}\n")
            for key in sorted(cfg):
                fh.write(f"{key} = {cfg[key]}\n")

    def timing(self, key: str, seconds: float) -> None:
        self.timings[key] = self.timings.get(key, 0.0) + seconds

    def write_csv(self, name: str, header: list[str], rows) -> str:
        path = self.path(name)
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(fmt(v) for v in row) + "\n")
        return path

    def write_summary(self, payload: dict) -> None:
        payload = dict(payload)
        payload["version"] = version_string()
        with open(self.path("summary.json"), "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def close(self) -> None:
        with open(self.path("timings.json"), "w") as fh:
            json.dump(self.timings, fh, indent=2, sort_keys=True)
            fh.write("\n")
