import numpy as np
import pytest

from treelstm.data import MaskedSequence, inject_missingness, make_next_value_targets, synth_sine


FIG2_MISSING = (3, 6, 7)


def fig2_sequence(m: int = 1) -> MaskedSequence:
    """Eleven grid slots 0..10 with slots 3, 6 and 7 empty."""
    rng = np.random.default_rng(5)
    present = np.ones(11, dtype=bool)
    present[list(FIG2_MISSING)] = False
    return make_next_value_targets(MaskedSequence(rng.normal(size=(11, m)), present))


def small_task(n=12, m=2, ratio=0.3, seed=0) -> MaskedSequence:
    rng = np.random.default_rng(seed)
    seq = MaskedSequence(rng.normal(size=(n, m)), np.ones(n, dtype=bool))
    return make_next_value_targets(inject_missingness(seq, ratio, seed))


def scalar_lstm_step(W, R, x, c_prev, h_prev):
    """Loop-by-loop LSTM step kept independent of the vectorized cell."""
    q = len(R[0])
    m = len(x)
    # numpy's own exp/tanh; libm can differ from numpy's SIMD kernels by an ulp
    sig = lambda v: 1.0 / (1.0 + np.exp(np.array([-v]))[0])
    th = lambda v: np.tanh(np.array([v]))[0]
    gates = []
    for j in range(4 * q):
        a = 0.0
        for k in range(m):
            a += W[j][k] * x[k]
        a += W[j][m]
        for k in range(q):
            a += R[j][k] * h_prev[k]
        gates.append(a)
    c, h = [], []
    for j in range(q):
        z = th(gates[j])
        i = sig(gates[q + j])
        f = sig(gates[2 * q + j])
        o = sig(gates[3 * q + j])
        c.append(i * z + f * c_prev[j])
        h.append(o * th(c[-1]))
    return c, h


def numeric_grads(loss, params: dict, rel_step=1e-6) -> dict:
    out = {}
    for name, th in params.items():
        g = np.zeros_like(th)
        for idx in np.ndindex(th.shape):
            old = th[idx]
            h = rel_step * max(1.0, abs(old))
            th[idx] = old + h
            a = loss()
            th[idx] = old - h
            b = loss()
            th[idx] = old
            g[idx] = (a - b) / (2 * h)
        out[name] = g
    return out


def rel_err(a, b) -> float:
    denom = max(np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / denom)


@pytest.fixture
def fig2():
    return fig2_sequence()


@pytest.fixture(scope="session")
def sine_small():
    return make_next_value_targets(inject_missingness(synth_sine(120, 0.05, 3), 0.3, 4))


_ACCEPTANCE: dict = {}


@pytest.fixture
def verdict():
    """Record one line of the acceptance summary: ``verdict(n, ok, detail)``."""

    def record(n, ok, detail=""):
        _ACCEPTANCE[n] = (bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE, key=lambda k: (int(str(k).rstrip("abc")), str(k))):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
