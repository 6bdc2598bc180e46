"""Smoke test for the pyblockchol extension.

Build and install the wheel first:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/pyblockchol-*.whl
    python python/smoke_test.py
"""

import math
import random

import pyblockchol as bc


def sample_covariance_inverse(rows):
    import numpy as np

    x = np.asarray(rows)
    x = x - x.mean(axis=0)
    return np.linalg.inv(x.T @ x / x.shape[0])


def main():
    rng = random.Random(3)
    data = []
    for _ in range(200):
        a, b, c, d, e = (rng.gauss(0, 1) for _ in range(5))
        data.append([a, 0.5 * a + b, b - c, c + 0.5 * d, a + 0.3 * c + e])

    # Unpenalized fit recovers the inverse sample covariance.
    est = bc.fit(data, [2, 1, 2], 0.0, 0.0)
    gap = abs(sample_covariance_inverse(data) - est.omega).max()
    assert gap < 1e-8, gap
    assert est.converged
    print("fit:", est, "max gap to S^-1", f"{gap:.2e}")

    # BIC selection and the glasso reduction.
    best, table = bc.select(data, [2, 1, 2], grid_size=4)
    assert len(table) == 16 and all(math.isfinite(r[2]) for r in table)
    g = bc.fit(data, [2, 1, 2], 0.1, 0.1, method="glasso")
    assert g.groups == [5]
    print("select: best lambdas", best.lambda1, best.lambda2, "edges", len(best.edges()))

    # Prediction of the last group from the first two.
    mean = [sum(col) / len(col) for col in zip(*data)]
    pred = best.predict(mean, 3, [mean[:3]])
    assert all(abs(p - m) < 1e-12 for p, m in zip(pred[0], mean[3:]))

    # Scenario truth, sampling and losses.
    omega, _ = bc.scenario_truth(2, [4, 4], 1)
    rows = bc.scenario_sample(2, [4, 4], 100, 1)
    fitted = bc.fit(rows, [4, 4], 0.05, 0.05)
    loss = dict(bc.losses(omega, fitted.omega))
    assert set(loss) == {"L1", "L2", "Fnorm", "KL", "QL", "FSL"}
    print("losses:", {k: round(v, 4) for k, v in loss.items()})

    raw, summary = bc.simulate(2, 40, [4, 4], reps=2, seed=7, grid_size=3)
    assert raw.splitlines()[0].startswith("rep,method,lambda1,lambda2")
    assert len(summary.splitlines()) == 3
    print("simulate:", len(raw.splitlines()) - 1, "raw rows")

    # Errors map onto Python exceptions.
    try:
        bc.fit(data, [2, 2], 0.1, 0.1)
    except ValueError as e:
        print("bad partition rejected:", e)
    else:
        raise AssertionError("expected ValueError")
    try:
        bc.fit(data[:3], [5], 0.0, 0.0)
    except bc.NotPositiveDefiniteError as e:
        print("singular fit rejected:", e)
    else:
        raise AssertionError("expected NotPositiveDefiniteError")

    print("smoke test passed")


if __name__ == "__main__":
    main()
