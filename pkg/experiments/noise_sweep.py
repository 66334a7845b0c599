"""Corrected localization under additive measurement noise.

For every noise level sigma0 the clean far field is perturbed by seeded
realizations of complex Gaussian noise and refitted with the mode-corrected
model. Per-level statistics are boxplot-ready (median, quartiles, 1.5 IQR
whiskers, outliers).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np
from scipy import stats

from experiments.common import (
    build_scene,
    forward_data,
    output_dir,
    problem_for,
    timed,
    write_csv,
    write_report,
)
from imaging.functional import backpropagate
from imaging.localize import add_noise, error_metrics, fit_corrected


METRICS = ("position_error_nm", "angle_error_deg")


def realization_seed(seed: int, level: int, realization: int) -> int:
    """Independent, reproducible seed per (run seed, level, realization)."""
    return int(np.random.SeedSequence([seed, level, realization]).generate_state(1)[0])


def boxplot_stats(values) -> dict:
    v = np.sort(np.asarray(values, dtype=float))
    q1, median, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    return {
        "median": float(median),
        "q1": float(q1),
        "q3": float(q3),
        "whisker_low": float(inside.min()) if inside.size else float(median),
        "whisker_high": float(inside.max()) if inside.size else float(median),
        "outliers": [float(x) for x in v[(v < lo_fence) | (v > hi_fence)]],
        "count": int(v.size),
    }


def median_trend(levels, medians) -> float | None:
    """Spearman rank correlation of medians against sigma0 (None when undefined)."""
    if len(levels) < 2 or np.ptp(medians) == 0:
        return None
    rho = stats.spearmanr(levels, medians)[0]
    return None if np.isnan(rho) else float(rho)


def run_noise_sweep(config: dict, log) -> dict:
    scene = build_scene(config, log)
    _, clean = forward_data(scene, log=log)
    base = problem_for(scene, clean, scene.mode_images, scene.coupler)
    levels = [float(s) for s in config["sweeps"]["sigma0"]]
    count = config["sweeps"]["realizations"]
    seed = config["run"]["seed"]
    jobs = [(i, sigma0, r, realization_seed(seed, i, r))
            for i, sigma0 in enumerate(levels) for r in range(count)]

    def one(job):
        _, sigma0, _, job_seed = job
        noisy = add_noise(clean, sigma0, job_seed)
        problem = replace(base, image=backpropagate(noisy, scene.grid, scene.projector))
        return error_metrics(fit_corrected(problem), scene.source)

    with timed(log, "noise_sweep", levels=len(levels), realizations=count,
               threads=config["run"]["threads"]):
        with ThreadPoolExecutor(max_workers=config["run"]["threads"]) as pool:
            errors = list(pool.map(one, jobs))

    rows = [[sigma0, r, job_seed, pos, ang] for (_, sigma0, r, job_seed), (pos, ang) in zip(jobs, errors)]
    summary = []
    for i, sigma0 in enumerate(levels):
        level = [e for (j, *_), e in zip(jobs, errors) if j == i]
        entry = {"sigma0": sigma0}
        for m, name in enumerate(METRICS):
            entry[name] = boxplot_stats([e[m] for e in level])
        summary.append(entry)

    box_rows = []
    for entry in summary:
        for name in METRICS:
            s = entry[name]
            box_rows.append([entry["sigma0"], name, s["median"], s["q1"], s["q3"],
                             s["whisker_low"], s["whisker_high"], len(s["outliers"])])

    out = output_dir(config)
    files = [
        write_csv(out / "noise_realizations.csv",
                  ["sigma0", "realization", "seed", "position_error_nm", "angle_error_deg"], rows),
        write_csv(out / "noise_boxplot.csv",
                  ["sigma0", "metric", "median", "q1", "q3", "whisker_low", "whisker_high", "n_outliers"],
                  box_rows),
    ]
    medians = [entry["position_error_nm"]["median"] for entry in summary]
    return write_report(config, "sweep-noise", {
        "source": scene.source.to_dict(),
        "modes": list(scene.modes),
        "realizations": count,
        "levels": summary,
        "median_spearman_rho": median_trend(levels, medians),
    }, files)
