"""Smoke test for the compiled extension.

Build with `cargo build -p gridplan-py --features extension-module`, copy
target/debug/libpygridplan.so next to this file as pygridplan.so (or put it
on PYTHONPATH) and run `python3 smoke_test.py`.
"""
import os
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, HERE)

import pygridplan  # noqa: E402

FIXTURES = os.path.join(HERE, "..", "..", "core", "fixtures")


def main():
    problem = pygridplan.Problem(
        os.path.join(FIXTURES, "desk14.grid.json"),
        os.path.join(FIXTURES, "desk14.cases.json"),
    )
    m = problem.n_measures
    assert m == len(problem.measures()) == 12, m
    assert set(pygridplan.ALGORITHMS) == {"hc", "ils", "ga", "pso", "gwo", "fwa"}

    zero = problem.evaluate([0] * m)
    assert 0 <= zero["level"] <= 4
    assert zero["level"] <= zero["normalized"] < zero["level"] + 1

    bits, best = problem.oracle()
    assert best["level"] == 0, best

    record = problem.run("ils", seed=1, eval_limit=2000)
    assert record["total_evals"] <= 2000
    found = record["best"]
    assert found["level"] == 0 and found["investment"] <= best["investment"] * 2, found

    try:
        problem.evaluate([0])
    except ValueError:
        pass
    else:
        raise AssertionError("wrong length accepted")
    print("smoke test ok: oracle investment %.0f, ils %.0f" % (best["investment"], found["investment"]))


if __name__ == "__main__":
    main()
