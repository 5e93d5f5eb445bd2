"""Smoke test for the firstpass extension module.

Build and install with `maturin develop` (or `pip install .`) from crates/py,
then run `python python/smoke.py`.
"""

import json
import math

import firstpass


def main():
    cfg = firstpass.RunConfig.preset("fig1_toy")
    assert json.loads(cfg.to_json())["model"]["type"] == "linear_components"
    cfg.method = "isee"
    report = firstpass.run(cfg, workers=1)
    p = report.value("probability")
    assert report.converged and 0.0 < p < 1e-3, p
    print(f"toy ISEE          P = {p:.4e}")

    problem = firstpass.Problem(cfg)
    assert problem.observers == 4 and problem.dim == 2
    assert problem.parameter_names() == ["amplitude"]
    sens = problem.sdm(n_max=5000, seed=1)["amplitude"]
    fd = problem.fdmis("amplitude", tol=0.05, n_max=400_000, seed=1)
    print(f"toy SDM   dP/dtheta = {sens['value']:.4e} (cov {sens['cov']:.3f})")
    print(f"toy FDM   dP/dtheta = {fd['value']:.4e} (cov {fd['cov']:.3f})")
    assert sens["value"] > 0.0 and fd["value"] > 0.0
    assert abs(sens["value"] / fd["value"] - 1.0) < 0.25

    ex1 = firstpass.RunConfig.preset("example1", 1)
    ex1.method = "sdm"
    report = firstpass.run(ex1)
    rows = {e["parameter"]: e for e in report.estimates}
    print(f"example1 SDM d/domega = {rows['omega_n']['value']:.3e}, d/dzeta = {rows['zeta_n']['value']:.3e}")
    assert rows["omega_n"]["value"] < 0.0 and rows["zeta_n"]["value"] < 0.0
    assert report.counters == (1, 2)

    norms = firstpass.Problem(ex1).norms()[0]
    stationary = math.sqrt(math.pi * 5.5e-4 / (2 * 0.05 * (4 * math.pi) ** 3))
    assert abs(norms[-1] / stationary - 1.0) < 0.03

    try:
        firstpass.RunConfig.from_json('{"model": {"type": "sdof"}}')
    except ValueError as e:
        print(f"config error ok: {e}")
    else:
        raise AssertionError("expected ValueError")
    print("smoke test passed")


if __name__ == "__main__":
    main()
