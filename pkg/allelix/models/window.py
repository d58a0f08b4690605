"""Count tables and sliding windows over the conditioning (fixed) allele."""
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
import pandas as pd

from allelix.errors import DomainError, EmptyDataset, EmptyWindow

logger = logging.getLogger(__name__)

COUNT_COLUMNS = ['ref', 'alt', 'bad', 'n']


class Orientation(str, Enum):
    """``ref``: reference count given the alternative count; ``alt``: the converse"""
    REF = 'ref'
    ALT = 'alt'

    @property
    def fixed_column(self):
        return 'alt' if self is Orientation.REF else 'ref'

    @property
    def variable_column(self):
        return self.value


class CountTable:
    """Deduplicated (ref, alt, bad) -> multiplicity table.

    Rows are kept sorted so everything derived from the table is
    independent of input order.
    """

    def __init__(self, frame):
        missing = [c for c in COUNT_COLUMNS if c not in frame.columns]
        if missing:
            raise DomainError(f"count table lacks columns {missing}")
        grouped = (frame[COUNT_COLUMNS]
                   .groupby(['bad', 'ref', 'alt'], as_index=False, sort=True)['n'].sum())
        grouped = grouped[grouped['n'] > 0]
        self.frame = grouped[COUNT_COLUMNS].astype({'ref': 'int64', 'alt': 'int64', 'bad': 'float64', 'n': 'int64'})
        self.frame = self.frame.reset_index(drop=True)

    @classmethod
    def from_pairs(cls, ref, alt, bad=1.0, n=None):
        ref = np.asarray(ref, dtype=np.int64)
        alt = np.asarray(alt, dtype=np.int64)
        frame = pd.DataFrame({
            'ref': ref,
            'alt': alt,
            'bad': np.broadcast_to(np.asarray(bad, dtype=float), ref.shape),
            'n': np.ones_like(ref) if n is None else np.asarray(n, dtype=np.int64),
        })
        return cls(frame)

    def __len__(self):
        return len(self.frame)

    @property
    def bads(self):
        return sorted(self.frame['bad'].unique().tolist())

    @property
    def n_obs(self):
        return int(self.frame['n'].sum())

    def for_bad(self, bad):
        return CountTable(self.frame[self.frame['bad'] == bad])

    def filtered(self, l):
        """Drop rows where either count is below l"""
        keep = (self.frame['ref'] >= l) & (self.frame['alt'] >= l)
        dropped = int(self.frame.loc[~keep, 'n'].sum())
        if dropped:
            logger.info(f"Dropped {dropped} observations with a count below {l}")
        return CountTable(self.frame[keep])

    def fixed_range(self, orientation):
        col = Orientation(orientation).fixed_column
        if self.frame.empty:
            raise EmptyDataset("count table is empty")
        return int(self.frame[col].min()), int(self.frame[col].max())


@dataclass(frozen=True)
class WindowSlice:
    """Observations whose fixed count lies in [lo, hi].

    Each observation is a (fixed, variable, weight) triple since the bias
    r = b*fixed + a is evaluated per observation.
    """
    orientation: Orientation
    bad: float
    fixed_value: int
    lo: int
    hi: int
    fixed: np.ndarray
    variable: np.ndarray
    weight: np.ndarray

    @property
    def n_obs(self):
        return int(self.weight.sum())

    @property
    def n_unique(self):
        return int(np.unique(self.variable).size)

    def signature(self):
        """Hashable identity of the observation set"""
        return (self.lo, self.hi, self.fixed.tobytes(), self.variable.tobytes(), self.weight.tobytes())


def build_window(table, orientation, fixed_value, m, l=0):
    """Grow a window around ``fixed_value`` until it holds at least m observations.

    Both bounds move one count per step; the lower bound stops at l (or the
    smallest fixed count present) and the upper bound at the largest one.

    Args:
        table: CountTable for a single BAD
        orientation: which allele is modelled
        fixed_value: centre of the window
        m: target number of observations
        l: truncation threshold

    Returns:
        WindowSlice
    """
    orientation = Orientation(orientation)
    if m < 1:
        raise DomainError(f"window size must be positive, got {m}")
    frame = table.frame
    if frame.empty:
        raise EmptyWindow("no observations to build a window from")
    fixed_col = frame[orientation.fixed_column].to_numpy()
    per_value = frame.groupby(orientation.fixed_column)['n'].sum()
    lower_limit = min(fixed_value, max(l, int(per_value.index.min())))
    upper_limit = max(fixed_value, int(per_value.index.max()))

    def count(lo, hi):
        return int(per_value.loc[(per_value.index >= lo) & (per_value.index <= hi)].sum())

    lo = hi = fixed_value
    n = count(lo, hi)
    while n < m:
        grow_lo, grow_hi = lo > lower_limit, hi < upper_limit
        if not (grow_lo or grow_hi):
            break
        lo -= int(grow_lo)
        hi += int(grow_hi)
        n = count(lo, hi)
    if n == 0:
        raise EmptyWindow(f"no observations around fixed count {fixed_value}")

    mask = (fixed_col >= lo) & (fixed_col <= hi)
    rows = frame[mask]
    return WindowSlice(
        orientation=orientation,
        bad=float(rows['bad'].iloc[0]),
        fixed_value=int(fixed_value),
        lo=int(lo),
        hi=int(hi),
        fixed=rows[orientation.fixed_column].to_numpy(dtype=float),
        variable=rows[orientation.variable_column].to_numpy(dtype=float),
        weight=rows['n'].to_numpy(dtype=float),
    )
