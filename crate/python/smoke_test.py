#!/usr/bin/env python3
"""Smoke test for the perclap Python bindings.

Builds nothing itself: run `cargo build -p perclap-python` (or --release)
first, then `python3 python/smoke_test.py`.  The script copies the cdylib
next to a temp dir under the importable name and exercises one instance of
every exposed operation with tight deterministic checks.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_perclap():
    candidates = [
        REPO / "target" / profile / "libperclap.so"
        for profile in ("release", "debug")
    ]
    built = [c for c in candidates if c.exists()]
    if not built:
        sys.exit("build the extension first: cargo build -p perclap-python")
    newest = max(built, key=lambda c: c.stat().st_mtime)
    stage = Path(tempfile.mkdtemp(prefix="perclap-"))
    shutil.copy2(newest, stage / "perclap.so")
    sys.path.insert(0, str(stage))
    import perclap

    return perclap


def check(name, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))
    if not ok:
        sys.exit(1)


def main():
    pc = import_perclap()

    geometry = pc.BoxGeometry(2, 8, topology="periodic")
    check(
        "geometry",
        geometry.vertices == 64 and geometry.coordination == 4,
        repr(geometry),
    )

    config = pc.sample_configuration(geometry, 0.5, seed=7)
    check(
        "configuration",
        config.open_count() + config.closed_count() == 128 and config.p == 0.5,
        repr(config),
    )

    dec = pc.ClusterDecomposition(config)
    label, size = dec.largest_cluster()
    members = dec.members(label)
    check(
        "clusters",
        len(members) == size and all(dec.label(v) == label for v in members),
        f"{dec.cluster_count()} clusters, largest {size}",
    )

    op = pc.assemble_laplacian(config)
    kernel = pc.count_below(op, 0.0)
    check(
        "kernel equals components",
        kernel == dec.cluster_count(),
        f"kernel {kernel}",
    )

    spectrum = pc.full_spectrum(op)
    check(
        "spectral range",
        len(spectrum) == 64 and spectrum[0] > -1e-9 and spectrum[-1] < 8 + 1e-9,
        f"[{spectrum[0]:.2e}, {spectrum[-1]:.6f}]",
    )

    dirichlet = pc.assemble_laplacian(config, bc="dirichlet")
    residual = pc.involution_dual_residual(geometry, dirichlet, op)
    check("involution duality", residual < 1e-9, f"residual {residual:.2e}")

    constant = [1.0] * 64
    check(
        "quadratic forms",
        abs(op.quadratic_form(constant)) < 1e-9
        and dirichlet.quadratic_form(constant) > 0,
        "Neumann annihilates constants, Dirichlet does not",
    )

    free = pc.BoxGeometry(2, 8, topology="free")
    gap = pc.spectral_gap(free)
    exact = 2 - 2 * math.cos(math.pi / 8)
    check("full-cube gap", abs(gap - exact) < 1e-9, f"gap {gap:.6f}")

    small_config = pc.sample_configuration(pc.BoxGeometry(2, 5, "free"), 0.55, seed=3)
    small_dec = pc.ClusterDecomposition(small_config)
    lab, _ = small_dec.largest_cluster()
    x = small_dec.members(lab)[0]
    small_op = pc.assemble_laplacian(small_config)
    truth = pc.heat_kernel_diag(small_op, x, 2.0)
    prob, half_width = pc.return_probability(small_config, x, 2.0, 20000, seed=11)
    z = abs(prob - truth) / (half_width / 1.96)
    check("walk vs heat kernel", z < 4, f"{z:.2f} sigma")

    grid = [0.05 * k for k in range(1, 40)]
    curve = pc.estimate_ids(geometry, 0.5, grid, samples=10, seed=21)
    monotone = all(a <= b + 1e-12 for a, b in zip(curve.values, curve.values[1:]))
    check(
        "ids curve",
        monotone and curve.samples == 10 and curve.to_csv().startswith("# perclap-csv"),
        repr(curve),
    )

    zm = pc.zero_mode_density(geometry, 0.5, samples=10, seed=21)
    check(
        "zero modes",
        abs(zm.nn_at_zero - zm.component_density) < 1e-12,
        f"density {zm.nn_at_zero:.4f}",
    )

    lap = pc.laplace_transform(curve, [1.0, 2.0, 4.0])
    decreasing = lap.values[0] > lap.values[1] > lap.values[2] > 0
    check("laplace transform", decreasing, repr(lap))

    big = pc.BoxGeometry(2, 64, "periodic")
    ann = pc.annealed_return(big, 0.7, [4.0, 8.0, 16.0, 32.0], 8, 5000, seed=5)
    fit = pc.fit_heat_decay(ann, (4.0, 32.0))
    check(
        "annealed walk decay",
        -1.6 < fit.slope < -0.5,
        f"slope {fit.slope:+.3f}, r^2 {fit.r_squared:.3f}",
    )

    cube = pc.dirichlet_cube_scaling(2, [4, 8, 16, 32])
    check("cube scaling", abs(cube.slope + 2) < 0.1, f"slope {cube.slope:+.4f}")

    taub = pc.tauberian_check(1.0, 0.5)
    env = pc.heaviside_envelope_check(20000, seed=9)
    check(
        "tauberian sandwich",
        taub.passed and env.passed and taub.parameters["cap_l"] > 0,
        f"cap_l {taub.parameters['cap_l']:.3f}",
    )

    tail = pc.finite_cluster_tail_check(geometry, 0.5, [0.05, 0.1], 10, seed=13)
    check("finite-cluster tail", tail.passed, f"violation {tail.violation:.2e}")

    again = pc.estimate_ids(geometry, 0.5, grid, samples=10, seed=21)
    check("determinism", again.values == curve.values, "same seed, same curve")

    check(
        "seed derivation",
        pc.derive_seed(1, 2) == pc.derive_seed(1, 2) != pc.derive_seed(2, 1),
    )

    print("all smoke checks passed")


if __name__ == "__main__":
    main()
