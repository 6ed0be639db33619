"""Permutation and Monte Carlo null-table calibration for every statistic."""

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as streams
from .errors import InvalidInput, NullTableFormatError
from .partition import CubicPartition
from .statistics import STATISTICS, Prepared, batch_values
from .synthgen import GeneratorSpec, as_generator, draw

NULL_TABLE_MAGIC = b"L1INDNT\x00"
NULL_TABLE_VERSION = 1

# replicates per seed substream; fixed so results never depend on --threads
CHUNK = 1000

# statistics evaluated along different float paths may differ in the last bits
REL_TOL = 1e-12


def _threshold(obs):
    return obs - REL_TOL * np.maximum(1.0, np.abs(obs))


def map_ordered(fn, items, threads=1):
    """``[fn(i) for i in items]``, optionally on a thread pool; order preserved."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass
class TestReport:
    statistic_id: str
    observed: float
    p_value: float
    method: str
    replicates: int
    seed: int
    n: int
    partition: dict = None
    warnings: list = field(default_factory=list)

    __test__ = False  # not a pytest class

    def to_dict(self):
        return {
            "statistic_id": self.statistic_id,
            "observed": self.observed,
            "p_value": self.p_value,
            "method": self.method,
            "replicates": self.replicates,
            "seed": self.seed,
            "n": self.n,
            "partition": self.partition,
            "warnings": list(self.warnings),
        }


def permutations(n, B, seed, threads=1):
    """``(B, n)`` array whose row b is drawn from the stream ``(seed, b)``."""
    def chunk(c):
        lo, hi = c * CHUNK, min(B, (c + 1) * CHUNK)
        return np.stack([streams.stream(seed, streams.PERMUTATION, b).permutation(n) for b in range(lo, hi)])

    nchunks = -(-B // CHUNK)
    return np.concatenate(map_ordered(chunk, range(nchunks), threads))


def permutation_test(sample, statistic_ids, B=999, seed=0, partition=None, threads=1):
    """Permutation p-values for several statistics sharing one set of Y permutations.

    ``p = (1 + #{b : T(X, Y_perm_b) >= T_obs}) / (B + 1)``. Histogram
    statistics keep the observed sample's partition for every permutation.
    """
    if B < 99:
        raise InvalidInput("B must be at least 99")
    warnings = []
    if partition is None and any(STATISTICS[s].histogram for s in statistic_ids):
        partition, warnings = CubicPartition.from_sample(sample)
    prep = Prepared(statistic_ids, sample, partition)
    perms = permutations(sample.n, B, seed, threads)
    permuted = prep.permuted(perms)
    reports = []
    for sid in prep.ids:
        observed = prep.observed[sid]
        exceed = int(np.count_nonzero(permuted[sid] >= _threshold(observed)))
        hist = STATISTICS[sid].histogram
        reports.append(TestReport(
            statistic_id=sid,
            observed=observed,
            p_value=(1 + exceed) / (B + 1),
            method="permutation",
            replicates=B,
            seed=seed,
            n=sample.n,
            partition=partition.to_dict() if hist else None,
            warnings=list(warnings) if hist else [],
        ))
    return reports


def permutation_pvalue(sample, statistic_id, B=999, seed=0, partition=None, threads=1):
    return permutation_test(sample, [statistic_id], B, seed, partition, threads)[0]


@dataclass
class NullTable:
    """Sorted Monte Carlo draws of a statistic under an independent generator."""

    statistic_id: str
    n: int
    draws: np.ndarray
    generator_id: str
    seed: int
    generator: dict = None
    partition: dict = None

    def __post_init__(self):
        self.draws = np.sort(np.asarray(self.draws, dtype=np.float64))

    @property
    def N(self):
        return len(self.draws)

    def header(self):
        return {
            "format_version": NULL_TABLE_VERSION,
            "statistic_id": self.statistic_id,
            "n": self.n,
            "N": self.N,
            "generator_id": self.generator_id,
            "generator": self.generator,
            "seed": self.seed,
            "partition": self.partition,
        }

    def to_bytes(self):
        head = json.dumps(self.header(), sort_keys=True).encode("utf-8")
        return (NULL_TABLE_MAGIC + struct.pack("<HI", NULL_TABLE_VERSION, len(head)) + head
                + self.draws.astype("<f8").tobytes())

    def write(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, blob):
        fixed = len(NULL_TABLE_MAGIC) + 6
        if len(blob) < fixed or blob[:len(NULL_TABLE_MAGIC)] != NULL_TABLE_MAGIC:
            raise NullTableFormatError("not a null table file (bad magic bytes)")
        version, head_len = struct.unpack("<HI", blob[len(NULL_TABLE_MAGIC):fixed])
        if version != NULL_TABLE_VERSION:
            raise NullTableFormatError(f"unsupported null table format version {version} "
                                       f"(expected {NULL_TABLE_VERSION})")
        try:
            head = json.loads(blob[fixed:fixed + head_len].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise NullTableFormatError(f"corrupted null table header (format version {version}): {exc}") from None
        if head.get("format_version") != version:
            raise NullTableFormatError(f"null table header declares format version "
                                       f"{head.get('format_version')!r}, container says {version}")
        payload = blob[fixed + head_len:]
        if len(payload) != 8 * head["N"]:
            raise NullTableFormatError(f"null table declares N={head['N']} draws but holds {len(payload) / 8:g}")
        draws = np.frombuffer(payload, dtype="<f8").astype(np.float64)
        if np.any(np.diff(draws) < 0):
            raise NullTableFormatError("null table draws are not sorted")
        return cls(head["statistic_id"], head["n"], draws, head["generator_id"], head["seed"],
                   head.get("generator"), head.get("partition"))

    @classmethod
    def read(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("rank,value\n")
            for i, v in enumerate(self.draws, 1):
                fh.write(f"{i},{float(v)!r}\n")


def default_null_partition(stat_id, generator):
    """Fixed 4x4 unit grid for histogram statistics under uniform margins."""
    generator = as_generator(generator)
    if not STATISTICS[stat_id].histogram:
        return None
    alt = generator.alternative
    if generator.marginal != "uniform" or alt.family == "functional":
        raise InvalidInput("histogram null tables need an explicit partition for non-uniform margins")
    return CubicPartition.unit_grid(4, alt.d, alt.d_prime)


def simulate_statistic(stat_id, n, N, generator, seed, stream_id, partition=None, threads=1, index=()):
    """N draws of the statistic on samples from ``generator``; chunk c uses stream ``(seed, stream_id, *index, c)``."""
    generator = as_generator(generator)

    def chunk(c):
        m = min(CHUNK, N - c * CHUNK)
        x, y = draw(generator, (m, n), streams.stream(seed, stream_id, *index, c))
        return batch_values(stat_id, x, y, partition)

    return np.concatenate(map_ordered(chunk, range(-(-N // CHUNK)), threads))


def mc_null_table(statistic_id, n, N=10_000, generator=None, seed=0, partition=None, threads=1):
    """Monte Carlo null table: N draws under an independent generator, sorted.

    Histogram statistics use a fixed partition (default: 4x4 unit grid).
    """
    if statistic_id not in STATISTICS:
        raise InvalidInput(f"unknown statistic {statistic_id!r}")
    if N < 100:
        raise InvalidInput("N must be at least 100")
    generator = as_generator(generator or GeneratorSpec())
    if not generator.alternative.independent:
        raise InvalidInput("null tables need an independent generator")
    if partition is None:
        partition = default_null_partition(statistic_id, generator)
    draws = simulate_statistic(statistic_id, n, N, generator, seed, streams.NULL_TABLE, partition, threads)
    return NullTable(statistic_id, n, draws, generator.id, seed, generator.to_dict(),
                     partition.to_dict() if partition is not None else None)


def pvalue_from_table(observed, table):
    """Empirical survival p-value ``(1 + #{draws >= observed}) / (N + 1)``."""
    draws = table.draws if isinstance(table, NullTable) else np.sort(np.asarray(table, dtype=float))
    if len(draws) == 0:
        raise InvalidInput("empty null table")
    obs = np.asarray(observed, dtype=float)
    exceed = len(draws) - np.searchsorted(draws, _threshold(obs), side="left")
    p = (1 + exceed) / (len(draws) + 1)
    return float(p) if np.ndim(p) == 0 else p
