"""Quick checks of the compiled module. Run after `pip install -e crates/python`."""

import math

import fracbubble as fb


def close(a, b, tol):
    return abs(a - b) <= tol * max(abs(b), 1e-300)


def main():
    p = fb.ProblemParams(5, 0.9)
    assert close(p.a, 3.2, 1e-14)
    assert close(p.two_star, 10.0 / 3.2, 1e-14)

    origin = [0.0] * 5
    peak = fb.bubble_value(p, origin, 1.0, origin)
    assert close(peak, p.bubble_constant, 1e-14)

    tower = fb.TowerConfig(4, 1.0, [0.0, 0.0, 0.0], 50.0)
    assert len(tower.centers()) == 4
    z = fb.tower_value(p, tower, tower.center(1))
    assert z > fb.bubble_value(p, tower.center(1), 50.0, tower.center(1))

    y = [0.3, -0.2, 0.1, 0.0, 0.4]
    exact = fb.frac_lap_exact_bubble(p, origin, 1.0, y)
    quad = fb.frac_lap_quadrature(lambda x: fb.bubble_value(p, origin, 1.0, x), 5, 0.9, y)
    assert close(quad, exact, 1e-3), (quad, exact)

    k = fb.WeightField.default_saddle()
    assert k.eval([1.0, 0.0, 0.0, 0.0, 0.0]) == 1.0
    assert all(abs(g) < 1e-12 for g in k.grad([1.0, 0.0, 0.0, 0.0, 0.0]))
    assert close(k.laplacian_at_critical(), -2.0, 1e-12)

    m, lam = fb.bookkeeping(p, 1e-8, 1.0)
    assert m >= 1 and lam > 0

    rows = fb.residual_sweep(p, k, [1e-4, 1e-5, 1e-6, 1e-7, 1e-8])
    assert rows[0]["slope"] is None
    assert rows[-1]["slope"] > 1.0 / p.a - 0.05

    sol = fb.solve_reduced(p, k)
    assert sol["faces_ok"]
    assert close(sol["t"], sol["t_closed_form"], 1e-8)

    try:
        fb.ProblemParams(5, 0.1)
    except ValueError:
        pass
    else:
        raise AssertionError("inadmissible s accepted")

    try:
        fb.frac_lap_quadrature(lambda x: 1 / 0, 5, 0.9, y)
    except ZeroDivisionError:
        pass
    else:
        raise AssertionError("callback error swallowed")

    print(f"fracbubble {fb.__version__}: ok (peak {peak:.6e}, t* {sol['t']:.6e}, slope {rows[-1]['slope']:.4f})")
    assert not math.isnan(peak)


if __name__ == "__main__":
    main()
