"""Histogram-based L1 test of independence, competing statistics, and a Bahadur-efficiency lab."""

__version__ = "0.1.0"

from .calibration import NullTable, TestReport, mc_null_table, permutation_pvalue, permutation_test, pvalue_from_table
from .errors import InvalidInput, NullTableFormatError, UnsupportedStatistic
from .partition import CellCounts, CubicPartition, PairedSample, bin_point, build_counts, default_width
from .statistics import (ScoreFunction, WeightFunction, b_k_n, compute, gamma_n, kendall_tau, l_n, m_n, ranks,
                         t_n, v_n)
from .synthgen import AlternativeSpec, GeneratorSpec, density, sample
