import numpy as np
import pandas as pd
import pytest

from allelix.analysis.fit import EstimateTable, ParameterVector, WindowEstimate
from allelix.models.distributions import ModelKind
from allelix.models.window import Orientation


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def truncated_nb(rng, r, p, l, size=None):
    """NB draws (mean r p / (1 - p)) rejected below l"""
    r = np.broadcast_to(np.asarray(r, dtype=float), (size,) if size else np.shape(r))
    out = rng.negative_binomial(r, 1.0 - p)
    bad = out < l
    while bad.any():
        out[bad] = rng.negative_binomial(r[bad], 1.0 - p)
        bad = out < l
    return out


def make_estimates(kind='NB', l=5, b=1.0, a=0.0, w=1.0, kappa=None, bads=(1.0,), fixed=range(0, 400)):
    """Estimate table with identical parameters at every fixed count"""
    table = EstimateTable(ModelKind.parse(kind), l)
    for orientation in Orientation:
        for bad in bads:
            p = bad / (bad + 1.0)
            for value in fixed:
                table.add(WindowEstimate(
                    orientation=orientation, bad=float(bad), fixed_value=value, lo=value, hi=value,
                    n_obs=100, theta=ParameterVector(b, a, p, kappa, w if p != 0.5 else 1.0),
                    loglik=-1.0, converged=True,
                ))
    return table


@pytest.fixture
def nb_estimates():
    return make_estimates()


def simulate_observations(rng, n, p, l=5, fixed_lo=10, fixed_hi=30, bad=1.0):
    """ref ~ truncated NB(r = alt, p) with alt uniform on [fixed_lo, fixed_hi]"""
    alt = rng.integers(fixed_lo, fixed_hi + 1, size=n)
    ref = truncated_nb(rng, alt, p, l)
    return pd.DataFrame({'ref': ref, 'alt': alt, 'bad': bad})


def write_tsv(path, rows, bad=None):
    header = ['chr', 'pos', 'id', 'ref', 'alt', 'ref_count', 'alt_count'] + (['bad'] if bad is not None else [])
    lines = ['\t'.join(header)]
    for i, row in enumerate(rows):
        fields = [str(v) for v in row]
        if bad is not None:
            fields.append(str(bad[i]))
        lines.append('\t'.join(fields))
    path.write_text('\n'.join(lines) + '\n')
    return path
