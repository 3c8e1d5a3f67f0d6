"""Acceptance criteria. Each test records one PASS/FAIL line, printed at the end of the run."""

import json
import math
from itertools import combinations
from pathlib import Path

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES, random_ket, random_povm

from exchangeq import (
    DensityMatrix,
    Dither,
    DitherMatrix,
    Effect,
    ExperimentRecord,
    Mix,
    Povm,
    PriorSpec,
    PureState,
    born_probability,
    classical_system,
    compose,
    distinguishing_measurement,
    dither_measurement,
    embed_povm,
    embed_state,
    ensemble_statistics,
    exchangeable_predictive,
    measurement_distribution,
    named_matrix,
    outcome_distribution,
    partial_exch_predictive,
    perfectly_distinguishable,
    posterior_update,
    predictive,
    sample_prior,
    standard_basis,
    trace_probability,
    vector_probability,
)
from exchangeq.cli import main
from exchangeq.scenario import strip_timing

pytestmark = pytest.mark.acceptance

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

QUBIT = {
    "z": Povm([named_matrix("qubit:+z"), named_matrix("qubit:-z")], "z"),
    "x": Povm([named_matrix("qubit:+x"), named_matrix("qubit:-x")], "x"),
}


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def lgamma_dm(alpha, counts):
    a0, n = sum(alpha), sum(counts)
    out = math.lgamma(a0) - math.lgamma(a0 + n)
    for a, c in zip(alpha, counts):
        out += math.lgamma(a + c) - math.lgamma(a)
    return out


def random_stochastic(rng, rows, cols):
    q = rng.random((rows, cols)) * (rng.random((rows, cols)) < 0.7)
    q[rng.integers(rows), :] += 1e-3
    return q / q.sum(axis=0)


def test_01_formula_equivalence():
    rng = np.random.default_rng(101)
    worst_gap = worst_norm = 0.0
    worst_neg = 0.0
    for i in range(1000):
        n = (2, 3, 4)[i % 3]
        rho_arr = sample_prior(PriorSpec("hilbert_schmidt", seed=1000 + i, n=n), 1).points[0]
        rho = DensityMatrix(rho_arr)
        povm = Povm(random_povm(n, int(rng.integers(2, 6)), rng))
        basis = standard_basis(n)
        s = embed_state(rho, basis)
        m = embed_povm(povm, basis)
        for e, o in zip(povm.effects, m.effects):
            tp = trace_probability(e, rho)
            vp = vector_probability(type(s)(o, s.system), s)
            worst_gap = max(worst_gap, abs(tp - vp))
        raw = np.einsum("kab,ba->k", povm.matrices(), rho.matrix).real
        worst_neg = max(worst_neg, float(-raw.min()))
        for dist in (outcome_distribution(povm, rho), measurement_distribution(m, s)):
            worst_norm = max(worst_norm, abs(dist.sum() - 1.0))
    ok = worst_gap <= 1e-12 and worst_norm <= 1e-10 and worst_neg <= 1e-12
    record(1, "formula equivalence", ok,
           f"max |tr - dot| = {worst_gap:.2e}, max |sum - 1| = {worst_norm:.2e}, max negativity {worst_neg:.2e}")


def test_02_born_rule():
    rng = np.random.default_rng(202)
    worst = 0.0
    for i in range(1000):
        n = (2, 3, 4)[i % 3]
        a, b = random_ket(n, rng), random_ket(n, rng)
        p = trace_probability(Effect(np.outer(a, a.conj())), DensityMatrix(np.outer(b, b.conj())))
        direct = abs(np.sum(a.conj() * b)) ** 2
        worst = max(worst, abs(p - direct), abs(born_probability(PureState(a), PureState(b)) - direct))
    record(2, "Born-rule recovery", worst <= 1e-12, f"max deviation {worst:.2e} over 1000 pairs")


def test_03_mixture_dither_closure():
    rng = np.random.default_rng(303)
    pool = [embed_povm(Povm(random_povm(3, k, rng), f"m{k}")) for k in (2, 3, 4)]
    states = [embed_state(DensityMatrix(r)) for r in sample_prior(PriorSpec("hilbert_schmidt", seed=3, n=3), 20).points]
    worst_norm = worst_comp = 0.0
    for trial in range(500):
        m = pool[trial % 3]
        steps = []
        size = len(m)
        for _ in range(int(rng.integers(1, 5))):
            if rng.random() < 0.5:
                other = pool[int(rng.integers(3))]
                q = rng.random()
                steps.append(Mix(other, (q, 1 - q)))
                size += len(other)
            else:
                rows = int(rng.integers(1, 5))
                steps.append(Dither(random_stochastic(rng, rows, size)))
                size = rows
        out = compose(m, steps)
        for s in states[:5]:
            worst_norm = max(worst_norm, abs(measurement_distribution(out, s).sum() - 1.0))
        q1 = random_stochastic(rng, int(rng.integers(1, 5)), len(out))
        q2 = random_stochastic(rng, int(rng.integers(1, 5)), q1.shape[0])
        twice = dither_measurement(dither_measurement(out, q1), q2)
        once = dither_measurement(out, DitherMatrix(q2) @ DitherMatrix(q1))
        worst_comp = max(worst_comp, float(np.max(np.abs(twice.effects - once.effects))))
    ok = worst_norm <= 1e-10 and worst_comp <= 1e-12
    record(3, "mixture/dither closure", ok, f"max |sum - 1| = {worst_norm:.2e}, max composition gap = {worst_comp:.2e}")


def test_04_distinguishability_dichotomy():
    vertex_pairs = vertex_ok = 0
    for k in range(2, 7):
        system = classical_system(k)
        for a, b in combinations(system.extremal_states, 2):
            vertex_pairs += 1
            vertex_ok += distinguishing_measurement(system, a, b) is not None
    rng = np.random.default_rng(404)
    false_count = 0
    pairs = 0
    while pairs < 200:
        a, b = random_ket(2, rng), random_ket(2, rng)
        if abs(np.vdot(a, b)) ** 2 < 1e-6:
            continue
        pairs += 1
        false_count += not perfectly_distinguishable(DensityMatrix(np.outer(a, a.conj())), DensityMatrix(np.outer(b, b.conj())))
    ok = vertex_ok == vertex_pairs and false_count == 200
    record(4, "distinguishability dichotomy", ok,
           f"{vertex_ok}/{vertex_pairs} vertex pairs distinguishable, {false_count}/200 qubit pairs not")


def test_05_classical_conjugacy():
    ens = {k: sample_prior(PriorSpec("simplex_dirichlet", seed=100 + k, alpha=(1.0,) * k), 100_000) for k in (2, 3)}
    rng = np.random.default_rng(5)
    fails = 0
    worst_z = worst_se = 0.0
    for _ in range(100):
        k = int(rng.integers(2, 4))
        outcomes = rng.integers(0, k, int(rng.integers(0, 21)))
        res = predictive(ens[k], ExperimentRecord(tuple(("m", int(o)) for o in outcomes)), {"m": k})
        exact = math.exp(lgamma_dm((1.0,) * k, np.bincount(outcomes, minlength=k)))
        gap = abs(res.probability - exact)
        fails += gap > 3 * res.mc_std_error
        worst_se = max(worst_se, res.mc_std_error)
        if res.mc_std_error > 0:
            worst_z = max(worst_z, gap / res.mc_std_error)
    ok = fails == 0 and worst_se <= 0.02
    record(5, "classical conjugacy oracle", ok,
           f"{100 - fails}/100 within 3 SE (worst {worst_z:.2f} SE), max SE {worst_se:.2e}")


def test_06_quantum_grid_oracle():
    # For a qubit the Hilbert-Schmidt measure is the uniform measure on the Bloch ball.
    mc = sample_prior(PriorSpec("hilbert_schmidt", seed=6, n=2), 100_000)
    fine = sample_prior(PriorSpec("grid", n=2, resolution=60), 1)
    coarse = sample_prior(PriorSpec("grid", n=2, resolution=50), 1)
    rng = np.random.default_rng(66)
    fails = 0
    worst_z = 0.0
    for _ in range(100):
        steps = tuple((str(rng.choice(["z", "x"])), int(rng.integers(0, 2))) for _ in range(int(rng.integers(0, 7))))
        r = ExperimentRecord(steps)
        a, g, g2 = (predictive(e, r, QUBIT) for e in (mc, fine, coarse))
        grid_err = abs(g.probability - g2.probability)
        gap = abs(a.probability - g.probability)
        fails += gap > 3 * a.mc_std_error + grid_err
        if a.mc_std_error > 0:
            worst_z = max(worst_z, gap / a.mc_std_error)
    record(6, "quantum grid oracle", fails == 0, f"{100 - fails}/100 records agree (worst {worst_z:.2f} MC SE)")


def test_07_exchangeability():
    ens = sample_prior(PriorSpec("hilbert_schmidt", seed=7, n=2), 20_000)
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(100):
        steps = tuple((str(rng.choice(["z", "x"])), int(rng.integers(0, 2))) for _ in range(int(rng.integers(1, 21))))
        r = ExperimentRecord(steps)
        base = predictive(ens, r, QUBIT).probability
        for _ in range(10):
            perm = np.arange(len(steps))
            for kind in ("z", "x"):
                idx = [i for i, s in enumerate(steps) if s[0] == kind]
                perm[idx] = rng.permutation(idx)
            worst = max(worst, abs(predictive(ens, r.permuted(perm), QUBIT).probability - base))
    record(7, "partial exchangeability", worst <= 1e-12, f"max difference {worst:.2e} over 1000 permutations")


def test_08_special_case_reduction():
    spec = PriorSpec("simplex_dirichlet", seed=8, alpha=(1.0, 1.0, 1.0))
    ens = sample_prior(spec, 100_000)
    rng = np.random.default_rng(88)
    identical = 0
    for _ in range(20):
        outcomes = [int(o) for o in rng.integers(0, 3, int(rng.integers(0, 15)))]
        pe = partial_exch_predictive(spec, ExperimentRecord(tuple(("m", o) for o in outcomes)), {"m": 3}, ensemble=ens)
        ex = exchangeable_predictive(ens, outcomes)
        identical += pe.mc.log_probability == ex.log_probability and pe.mc.mc_std_error == ex.mc_std_error
    record(8, "special-case reduction", identical == 20, f"{identical}/20 records bit-identical")


def test_09_reproducibility(tmp_path):
    reports = []
    for threads in (1, 8):
        out = tmp_path / f"threads{threads}.json"
        assert main(["--threads", str(threads), "run", str(SCENARIOS / "qubit_tomography.json"), "-o", str(out)]) == 0
        reports.append(json.dumps(strip_timing(json.loads(out.read_text())), sort_keys=True))
    record(9, "reproducibility", reports[0] == reports[1], f"--threads 1 and 8 reports identical: {reports[0] == reports[1]}")


def test_10_posterior_sanity():
    r = ExperimentRecord((("z", 0),) * 50)
    mc = posterior_update(sample_prior(PriorSpec("hilbert_schmidt", seed=10, n=2), 100_000), r, QUBIT)
    grid = posterior_update(sample_prior(PriorSpec("grid", n=2, resolution=60), 1), r, QUBIT)
    fid_mc = ensemble_statistics(mc).mean_state.matrix[0, 0].real
    fid_grid = ensemble_statistics(grid).mean_state.matrix[0, 0].real
    ok = fid_mc > 0.95 and fid_grid > 0.95 and abs(fid_mc - fid_grid) < 0.01
    record(10, "posterior sanity", ok, f"fidelity {fid_mc:.4f} (MC), {fid_grid:.4f} (grid)")
