"""Corrected localization error against the size of the mode basis."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

from experiments.common import (
    basis_images,
    build_scene,
    coupler_for,
    forward_data,
    output_dir,
    problem_for,
    summarize,
    timed,
    write_csv,
    write_report,
)
from imaging.localize import fit_corrected


def run_mode_table(config: dict, log) -> dict:
    scene = build_scene(config, log, with_modes=False)
    _, data = forward_data(scene, log=log)
    sizes = [int(n) for n in config["sweeps"]["n_modes_list"]]
    images = basis_images(config, scene.particle, scene.k_m, scene.radius, scene.projector,
                          scene.source.omega, max(sizes, default=0), log)
    base = problem_for(scene, data)

    def one(n):
        subset = tuple(images[:n])
        coupler = coupler_for(config, scene.particle, scene.source.omega, subset)
        return summarize(fit_corrected(replace(base, mode_images=subset, coupler=coupler)), scene.source)

    with timed(log, "mode_table", sizes=sizes, threads=config["run"]["threads"]):
        with ThreadPoolExecutor(max_workers=config["run"]["threads"]) as pool:
            results = list(pool.map(one, sizes))

    rows = [[n, r["angle_error_deg"], r["position_error_nm"]] for n, r in zip(sizes, results)]
    out = output_dir(config)
    files = [write_csv(out / "mode_table.csv", ["n_modes", "angle_error_deg", "position_error_nm"], rows)]
    return write_report(config, "mode-table", {
        "source": scene.source.to_dict(),
        "table": [{"n_modes": n, **r} for n, r in zip(sizes, results)],
    }, files)
