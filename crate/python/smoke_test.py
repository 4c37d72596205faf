"""Smoke test for the pymmnpp extension module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`,
then run `python python/smoke_test.py`.
"""

import math

import pymmnpp as mm


def main():
    q = [[-0.8, 0.5, 0.3], [0.6, -1.0, 0.4], [0.3, 0.5, -0.8]]
    model = mm.Model(q, [5.0, 10.0, 20.0], [1 / 3, 1 / 3, 1 / 3])
    assert model.order == 3
    assert mm.Model.from_json(model.to_json()).lam == model.lam

    e = mm.expm([[0.0, 1.0], [0.0, 0.0]])
    assert abs(e[0][1] - 1.0) < 1e-14 and abs(e[0][0] - 1.0) < 1e-14

    exposure = mm.Exposure.cycling([1.0, 2.0, 3.0], 10.0, 100.0)
    assert exposure.at(15.0) == 2.0
    assert abs(exposure.operational_time(30.0) - 60.0) < 1e-12

    claims, jumps, states = mm.simulate(model, exposure, seed=7)
    again, _, _ = mm.simulate(model, exposure, seed=7)
    assert claims == again and len(claims) > 500
    assert len(jumps) == len(states)

    result = mm.fit(claims, exposure, 3, tol=1e-4, max_iter=300)
    assert all(b >= a - 1e-8 for a, b in zip(result.loglik, result.loglik[1:]))
    ll = mm.log_likelihood(result.model, claims, exposure)
    assert abs(ll - result.loglik[-1]) < 1e-8

    times, probs, labels = result.decode()
    assert len(times) == len(claims) == len(labels)
    assert all(abs(sum(p) - 1.0) < 1e-10 for p in probs)

    starts, observed, expected = mm.expected_counts(result.model, claims, exposure, window=1.0)
    assert len(starts) == len(observed) == len(expected) == 100
    resid = [o - x for o, x in zip(observed, expected)]
    # the smoothed compensator matches the claim total at the optimum
    _, _, smoothed = mm.expected_counts(result.model, claims, exposure, basis="smoothed")
    assert abs(sum(smoothed) - len(claims)) < 1e-3 * len(claims)

    for report in (mm.ljung_box(resid, 10), mm.bartlett_b(resid), mm.runs_test(resid)):
        assert 0.0 <= report["p_value"] <= 1.0
    aic, bic = mm.information_criteria(result.loglik[-1], 3, len(claims))
    assert math.isclose(aic, 2 * 9 - 2 * result.loglik[-1])

    try:
        mm.fit([1.0], exposure, 3)
    except mm.MmnppError as exc:
        assert "NonIdentifiable" in str(exc) or "order" in str(exc)
    else:
        raise AssertionError("expected an error")

    print(f"ok: {len(claims)} claims, loglik {result.loglik[-1]:.3f}, {result.iterations} iterations")


if __name__ == "__main__":
    main()
