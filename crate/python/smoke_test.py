"""Build the extension module and exercise the Python API end to end.

Run from the repository root:

    python3 python/smoke_test.py
"""

import importlib.util
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def build_module(dest: pathlib.Path) -> pathlib.Path:
    subprocess.run(
        ["cargo", "build", "--release", "-p", "crosssim-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib_dir = ROOT / "target" / "release"
    candidates = [lib_dir / "libcrosssim_py.so", lib_dir / "libcrosssim_py.dylib", lib_dir / "crosssim_py.dll"]
    built = next(p for p in candidates if p.exists())
    target = dest / ("crosssim_py.pyd" if built.suffix == ".dll" else "crosssim_py.so")
    shutil.copy(built, target)
    return target


def load(path: pathlib.Path):
    spec = importlib.util.spec_from_file_location("crosssim_py", path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main() -> int:
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        cs = load(build_module(tmp))

        lattice = cs.Lattice.square(2, 2)
        assert lattice.n_sites == 4 and lattice.n_edges == 4
        assert lattice.loop_census(4) == [0, 0, 0, 0, 1]
        assert cs.Lattice.cubic_dimer(3).loop_census(3)[3] > 0

        inst = cs.Instance.sample(lattice, "uniform", 7)
        assert cs.Instance.from_text(inst.to_text()).content_hash() == inst.content_hash()

        quench = cs.Quench(1.0)
        exact = cs.exact_quench(inst, quench)
        approx = cs.bptns_quench(inst, quench, chi=4, l_max=4)
        err = cs.epsilon_c(approx, exact)
        assert 0.0 <= err < 1e-2, err

        noisy = cs.emulate_noisy_reference(exact, 3, m=5000)
        eps_cross = cs.epsilon_c(approx, noisy)
        eps_ref = cs.epsilon_c(noisy, exact)
        estimate = cs.triangulate_error(eps_cross, eps_ref)
        assert estimate is None or estimate >= 0.0

        assert cs.triangulate_error(5.0, 3.0) == 4.0
        assert cs.calibrate_timescale([(5.0, 0.2), (10.0, 0.4)], 0.3, 5.0, 5.0) == [7.5]

        try:
            cs.Instance.sample(lattice, "gaussian", 1)
        except ValueError:
            pass
        else:
            raise AssertionError("unknown distribution accepted")

        plan = tmp / "plan.toml"
        plan.write_text(
            "version = 1\n"
            "seed = 3\n"
            "[[cells]]\n"
            'name = "smoke"\n'
            'geometry = "square"\n'
            "sizes = [2]\n"
            'distribution = "bimodal"\n'
            "t_a = [1.0]\n"
            "n_instances = 2\n"
            'engines = [{ kind = "exact" }, { kind = "bptns", chi = 2 }]\n'
        )
        computed, skipped, failed = cs.run_plan(str(plan), "score", 1, str(tmp / "out"))
        assert computed > 0 and failed == 0, (computed, skipped, failed)
        assert (tmp / "out" / "summary" / "scores.csv").exists()
        again = cs.run_plan(str(plan), "score", 1, str(tmp / "out"))
        assert again[0] == 0, again

    print("python smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
