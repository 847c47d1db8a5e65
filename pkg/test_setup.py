#!/usr/bin/env python3
"""
Setup check for kasolve
Verifies that the dependencies, the config file and a tiny experiment work.
Runs under pytest or directly as a script.
"""

import importlib
import sys

import numpy as np

REQUIRED_PACKAGES = ["numpy", "scipy", "pydantic", "tqdm", "matplotlib"]


def test_dependencies():
    """Test if all required packages are installed"""
    for name in REQUIRED_PACKAGES:
        importlib.import_module(name)


def test_config_file():
    """Config file loads and names the four presets"""
    from kasolve.settings import defaults, presets

    assert set(presets()) == {"fig2a", "fig2b", "fig4a", "fig4b"}
    assert defaults()["trials"] >= 1


def test_tiny_experiment():
    """A few trials of a small Kaczmarz experiment produce finite errors"""
    from kasolve.harness import ExperimentConfig, ExperimentKind, run_experiment

    config = ExperimentConfig(kind=ExperimentKind.KACZMARZ_ITERATIONS, m=10, p=3, n_iters=30, trials=3)
    table = run_experiment(config)
    for values in table.columns.values():
        assert values.shape == (31,)
        assert np.all(np.isfinite(values))


def main():
    """Run all checks"""
    print("kasolve - Setup Check")
    print("=" * 50)

    checks = [
        ("Dependencies", test_dependencies),
        ("Config File", test_config_file),
        ("Tiny Experiment", test_tiny_experiment),
    ]

    all_passed = True
    for check_name, check in checks:
        try:
            check()
            status = "PASS"
        except Exception as e:
            status = f"FAIL ({e})"
            all_passed = False
        print(f"   {check_name}: {status}")

    print("=" * 50)
    if all_passed:
        print("All checks passed. Try: python -m kasolve preset --name fig2a --trials 100 --out fig2a.csv")
    else:
        print("Some checks failed. Run: pip install -r requirements.txt")
    return 0 if all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
