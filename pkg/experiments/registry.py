"""Experiment registry for demirage.

Experiments are plain functions ``func(config, log) -> dict`` registered
under their CLI name. ``execute`` never raises: failures come back as result
dicts so the CLI can print them as JSON.
"""

import time
import warnings

from core.errors import DemirageError
from core.run_log import RunLog


class ExperimentRegistry:
    """Registry of named experiments."""

    def __init__(self):
        self._experiments: dict[str, dict] = {}

    def register_experiment(self, name: str, func: callable, description: str) -> None:
        if name in self._experiments:
            raise ValueError(f"Experiment '{name}' is already registered.")
        self._experiments[name] = {"func": func, "description": description}

    def unregister_experiment(self, name: str) -> bool:
        """Remove an experiment. Returns True if it existed."""
        return self._experiments.pop(name, None) is not None

    def get_experiment(self, name: str) -> dict | None:
        return self._experiments.get(name)

    def list_experiments(self) -> list[dict]:
        return [
            {"name": n, "description": e["description"]}
            for n, e in self._experiments.items()
        ]

    def execute(self, name: str, config: dict, log: RunLog | None = None) -> dict:
        """Run an experiment.

        Returns dict with keys: ok (bool), data or error (str), kind on
        failure, duration_ms (int). Warnings raised during the run are
        recorded in ``log`` as notices.
        """
        start_time = time.time()
        if name not in self._experiments:
            return {"ok": False, "error": f"Experiment '{name}' is not registered.",
                    "kind": "config", "duration_ms": 0}
        log = log or RunLog(enabled=False)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                result = self._experiments[name]["func"](config, log)
                outcome = {"ok": True, "data": result}
            except Exception as e:
                kind = e.kind if isinstance(e, DemirageError) else "internal"
                log.error(name, f"{type(e).__name__}: {e}")
                outcome = {"ok": False, "error": f"{type(e).__name__}: {e}", "kind": kind}
        log.record_warnings(caught)
        outcome["duration_ms"] = int((time.time() - start_time) * 1000)
        return outcome


def build_registry() -> ExperimentRegistry:
    """Registry with every experiment and scripting primitive."""
    from experiments.gallery import run_modes
    from experiments.mirage_report import run_mirage
    from experiments.distance_sweep import run_distance_sweep
    from experiments.noise_sweep import run_noise_sweep
    from experiments.mode_table import run_mode_table
    from experiments.primitives import run_forward, run_image, run_localize

    reg = ExperimentRegistry()
    reg.register_experiment("modes", run_modes,
                            "NP spectrum, resonance table and exterior mode-field grids")
    reg.register_experiment("mirage", run_mirage,
                            "Forward solve, image, uncorrected and mode-corrected localization")
    reg.register_experiment("sweep-distance", run_distance_sweep,
                            "Localization errors as the dipole moves away from the particle")
    reg.register_experiment("sweep-noise", run_noise_sweep,
                            "Corrected localization errors under additive measurement noise")
    reg.register_experiment("mode-table", run_mode_table,
                            "Corrected localization with the first N modes, per N")
    reg.register_experiment("forward", run_forward,
                            "Far-field data of the configured scene (CSV + JSON sidecar)")
    reg.register_experiment("image", run_image,
                            "Back-propagation image of far-field data (CSV planes)")
    reg.register_experiment("localize", run_localize,
                            "Localize from far-field data, with and without mode correction")
    return reg
