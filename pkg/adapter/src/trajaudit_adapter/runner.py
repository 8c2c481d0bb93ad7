"""Audit invocation: shells out to the trajaudit CLI and parses its verdicts.

The boundary is the documented config/report formats, so notebooks and
training pipelines only need the CLI on PATH.
"""

from __future__ import annotations

import json
import os
import subprocess
import tempfile


class AuditCliNotFoundError(RuntimeError):
    """The trajaudit executable is not installed / not on PATH."""


class AuditCliError(RuntimeError):
    """The CLI exited nonzero; carries its exit code and stderr."""

    def __init__(self, returncode: int, stderr: str):
        super().__init__(f"trajaudit audit failed (exit {returncode}): {stderr.strip()}")
        self.returncode = returncode
        self.stderr = stderr


class VerdictParseError(ValueError):
    """A verdict file could not be parsed; carries the offending path."""


def _write_temp_config(config: dict) -> str:
    fd, path = tempfile.mkstemp(prefix="trajaudit-config-", suffix=".json")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2)
    return path


def run_audit(config: dict | str | os.PathLike, *, binary: str = "trajaudit",
              jobs: int | None = None, extra_args: list[str] = (),
              timeout: float | None = None) -> dict[str, dict]:
    """Run ``trajaudit audit`` and return {scenario: verdict} from its output.

    ``config`` is either a path to an audit config JSON or a dict with the
    same schema (written to a temporary file).  The config's ``output_dir``
    is where verdicts are collected from.
    """
    temp_path = None
    if isinstance(config, dict):
        temp_path = _write_temp_config(config)
        config_path = temp_path
        output_dir = config.get("output_dir")
    else:
        config_path = os.fspath(config)
        with open(config_path, "r", encoding="utf-8") as fh:
            output_dir = json.load(fh).get("output_dir")
    if not output_dir:
        raise ValueError("audit config must declare output_dir")

    argv = [binary, "audit", "--config", config_path]
    if jobs is not None:
        argv += ["--jobs", str(jobs)]
    argv += list(extra_args)
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
    except FileNotFoundError as exc:
        raise AuditCliNotFoundError(
            f"{binary!r} not found on PATH; install the trajaudit package"
        ) from exc
    finally:
        if temp_path is not None:
            os.unlink(temp_path)
    if proc.returncode != 0:
        raise AuditCliError(proc.returncode, proc.stderr)
    return collect_verdicts(output_dir)


def collect_verdicts(output_dir: str | os.PathLike) -> dict[str, dict]:
    """Parse every <scenario>.verdict.json under an audit output directory."""
    output_dir = os.fspath(output_dir)
    verdicts: dict[str, dict] = {}
    for name in sorted(os.listdir(output_dir)):
        if not name.endswith(".verdict.json"):
            continue
        path = os.path.join(output_dir, name)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
            verdicts[obj["scenario"]] = obj
        except (json.JSONDecodeError, KeyError) as exc:
            raise VerdictParseError(f"{path}: malformed verdict ({exc})") from exc
    return verdicts
