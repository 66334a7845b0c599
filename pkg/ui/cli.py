"""Terminal surface for demirage runs.

Runs one registered experiment with a run log, prints the machine-readable
result as JSON on stdout and a short human summary on stderr. Exit codes:
0 success, 2 configuration error, 1 any other failure.
"""

import json
import sys

from core.errors import DemirageError
from core.provenance import canonical_json, config_hash
from core.run_log import RunLog


def _dumps(obj) -> str:
    return json.dumps(json.loads(canonical_json(obj)), indent=2, sort_keys=True)


def exit_code(result: dict) -> int:
    if result["ok"]:
        return 0
    return 2 if result.get("kind") == "config" else 1


def print_error(exc: Exception) -> None:
    """Error JSON on stdout, one-line message on stderr."""
    kind = exc.kind if isinstance(exc, DemirageError) else "internal"
    message = f"{type(exc).__name__}: {exc}"
    print(_dumps({"ok": False, "kind": kind, "error": message}))
    print(f"Error: {message}", file=sys.stderr)


def format_summary(name: str, result: dict) -> list[str]:
    """Human-readable lines for a finished run."""
    if not result["ok"]:
        return [f"{name}: FAILED ({result.get('kind', 'error')}) {result['error']}"]
    data = result["data"]
    lines = [f"{name}: ok in {result['duration_ms'] / 1000:.1f}s, outputs in {data['out']}"]
    report = data.get("report", {})
    for label in ("uncorrected", "corrected"):
        fit = report.get(label)
        if fit and "position_error_nm" in fit:
            lines.append(f"  {label:<12} error {fit['position_error_nm']:8.2f} nm  "
                         f"{fit['angle_error_deg']:6.2f} deg")
    for entry in report.get("resonances", [])[:6]:
        lines.append(f"  mode {entry['mode']:>2}  lambda {entry['lambda']:+.6f}  omega {entry['omega']:.4e}")
    return lines


def run_experiment(registry, name: str, config: dict, write_log: bool = True) -> int:
    """Execute ``name`` with ``config``; returns the process exit code."""
    run = config["run"]
    log = RunLog(run["out"], enabled=write_log)
    log.run_start(name, config_hash(config), run["seed"], run["threads"])
    result = registry.execute(name, config, log)
    log.run_end(result["ok"], result.get("data", {}).get("files", []) if result["ok"] else [])

    if result["ok"]:
        print(_dumps({"ok": True, "experiment": name, **result["data"]}))
    else:
        print(_dumps({"ok": False, "kind": result.get("kind", "error"), "error": result["error"]}))
    for line in format_summary(name, result):
        print(line, file=sys.stderr)
    return exit_code(result)
