"""Benchmark harness: sweeps over (collective, algorithm, ranks, size),
per-trial records, summaries, speedup tables, and selector calibration.

Measurement protocol: every cell runs a fixed number of independent trials
(default ten); wall-clock backends time barrier-bracketed collective calls
with a monotonic clock, the simulated backend needs a single deterministic
trial per cell. With verification enabled, each cell's outputs are checked
against the brute-force oracle before any trial is timed.
"""
from __future__ import annotations

import dataclasses
import hashlib
import math
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .. import collectives, simnet
from ..costmodel import CalibrationEntry, CalibrationTable, CostParams
from ..errors import (
    EmptyCell,
    GridMismatch,
    NotDivisible,
    Unsupported,
    VerificationFailed,
)
from ..hierarchy import HierPlan, hier_all_gather, hier_reduce_scatter
from ..topology import Topology
from ..transport.base import Communicator
from ..transport.inprocess import run_ranks
from . import oracles

BACKENDS = ("inprocess", "socket", "sim")
DEFAULT_SIZES = tuple(2**i * 2**20 for i in range(4, 11))  # 16 MiB .. 1 GiB
DEFAULT_GRID = ((1, 2), (1, 4), (1, 8), (2, 2), (2, 4), (2, 8), (4, 2), (4, 4), (4, 8))


@dataclass(frozen=True)
class RunRecord:
    backend: str
    collective: str
    algorithm: str
    inter: str
    p: int
    n_nodes: int
    m_gpus: int
    m_bytes: int
    trial: int
    seconds: float
    verified: bool

    CSV_FIELDS = (
        "backend",
        "collective",
        "algorithm",
        "inter",
        "p",
        "N",
        "M",
        "m_bytes",
        "trial",
        "seconds",
        "verified",
    )

    def cell_key(self) -> tuple:
        return (
            self.backend,
            self.collective,
            self.algorithm,
            self.inter,
            self.n_nodes,
            self.m_gpus,
            self.m_bytes,
        )


@dataclass(frozen=True)
class SweepConfig:
    collective: str = "all_gather"
    algorithm: str = "ring"
    inter: str = "ring"
    sizes: tuple[int, ...] = DEFAULT_SIZES
    grid: tuple[tuple[int, int], ...] = DEFAULT_GRID
    trials: int = 10
    seed: int = 0
    verify: bool = False
    warmup: bool = False
    nics_per_node: int | None = None
    params: CostParams = field(default_factory=CostParams)
    nic_policy: str = "balanced"
    phys_topology: str = "fully_connected"
    reduce_profile: str = "fast"

    def validate(self) -> None:
        if self.collective not in ("all_gather", "reduce_scatter"):
            raise Unsupported(f"unknown collective {self.collective!r}")
        if self.algorithm not in ("ring", "recursive", "hierarchical"):
            raise Unsupported(f"unknown algorithm {self.algorithm!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for n_nodes, m_gpus in self.grid:
            p = n_nodes * m_gpus
            for m in self.sizes:
                # Whole 32-bit elements per rank are required throughout.
                if m % (4 * p) != 0:
                    raise NotDivisible(
                        f"size {m} not divisible into whole elements over p={p}"
                    )

    def topo_for(self, n_nodes: int, m_gpus: int) -> Topology:
        nics = self.nics_per_node or default_nics(m_gpus)
        return Topology(n_nodes, m_gpus, nics)


def default_nics(m_gpus: int) -> int:
    """One NIC per pair of local ranks, at least one."""
    return max(1, m_gpus // 2) if m_gpus % 2 == 0 else 1


def cell_seed(global_seed: int, cell_id: str) -> int:
    digest = hashlib.sha256(f"{global_seed}:{cell_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def make_inputs(config: SweepConfig, cell_id: str, p: int, m_bytes: int, collective: str):
    """Per-rank integer-valued float32 buffers; values in [-1024, 1024] so
    float sums stay exact."""
    rng = np.random.default_rng(cell_seed(config.seed, cell_id))
    per_rank = m_bytes // 4 if collective == "reduce_scatter" else m_bytes // (4 * p)
    return [
        rng.integers(-1024, 1025, size=per_rank).astype(np.float32) for _ in range(p)
    ]


def _collective_fn(config: SweepConfig, topo: Topology, inputs):
    collective, algorithm = config.collective, config.algorithm
    if algorithm == "hierarchical":
        plan = HierPlan(topo=topo, inter_alg=config.inter, params=config.params)
        op = hier_all_gather if collective == "all_gather" else hier_reduce_scatter

        def fn(comm):
            return op(plan, comm, inputs[comm.rank])

        return fn
    flat = {
        ("all_gather", "ring"): collectives.ring_all_gather,
        ("reduce_scatter", "ring"): collectives.ring_reduce_scatter,
        ("all_gather", "recursive"): collectives.recdbl_all_gather,
        ("reduce_scatter", "recursive"): collectives.rechalf_reduce_scatter,
    }.get((collective, algorithm))
    if flat is None:
        raise Unsupported(f"no implementation for {collective}/{algorithm}")

    def fn(comm):
        return flat(comm, inputs[comm.rank])

    return fn


def _verify_outputs(collective: str, inputs, outputs) -> None:
    if collective == "all_gather":
        want = oracles.expected_all_gather(inputs)
        for rank, out in enumerate(outputs):
            if not np.array_equal(out, want):
                raise VerificationFailed(f"all_gather output wrong at rank {rank}")
    else:
        want = oracles.expected_reduce_scatter(inputs)
        for rank, out in enumerate(outputs):
            if not np.array_equal(out, want[rank]):
                raise VerificationFailed(f"reduce_scatter output wrong at rank {rank}")


def _timed_trial_inprocess(config: SweepConfig, topo: Topology, inputs) -> float:
    fn = _collective_fn(config, topo, inputs)
    p = topo.world_size
    durations = [0.0] * p

    def timed(comm):
        comm.barrier()
        start = time.perf_counter()
        out = fn(comm)
        comm.barrier()
        durations[comm.rank] = time.perf_counter() - start
        return out

    run_ranks(p, timed)
    return durations[0]


def _verify_own_output(collective: str, inputs, rank: int, out) -> None:
    if collective == "all_gather":
        want = oracles.expected_all_gather(inputs)
    else:
        want = oracles.expected_reduce_scatter(inputs)[rank]
    if not np.array_equal(out, want):
        raise VerificationFailed(f"{collective} output wrong at rank {rank}")


def run_sweep(config: SweepConfig, backend: str, *, endpoint=None) -> list[RunRecord]:
    """Execute every (grid cell x size) the configured number of times.

    The simulated backend is deterministic and emits exactly one record per
    cell; wall-clock backends emit one record per trial (plus a leading
    warm-up trial, also recorded, when ``warmup`` is set). Verification is
    a data check and therefore only applies to data-moving backends.

    For the socket backend this process is one rank of an already meshed
    world: pass its connected ``endpoint``; the grid must be a single cell
    whose rank count matches the mesh, and every process must run the same
    sweep. Timings in the returned records are this rank's; rank 0's are
    the canonical ones to publish.
    """
    config.validate()
    if backend not in BACKENDS:
        raise Unsupported(f"unknown backend {backend!r}")
    if backend == "sim" and config.verify:
        raise Unsupported("--verify checks real payloads; use a data-moving backend")
    if backend == "socket":
        if endpoint is None:
            raise Unsupported("socket sweeps need a connected endpoint (host file)")
        if len(config.grid) != 1 or config.grid[0][0] * config.grid[0][1] != endpoint.size:
            raise Unsupported(
                f"socket sweeps need a single grid cell matching the host "
                f"file world of {endpoint.size} ranks"
            )
        world = Communicator(endpoint, range(endpoint.size))
    records: list[RunRecord] = []
    for n_nodes, m_gpus in config.grid:
        topo = config.topo_for(n_nodes, m_gpus)
        p = topo.world_size
        if config.algorithm == "recursive" and not collectives.is_power_of_two(p):
            raise Unsupported(f"recursive algorithm needs power-of-two p, got {p}")
        for m_bytes in config.sizes:
            cell_id = (
                f"{config.collective}:{config.algorithm}:{config.inter}:"
                f"{n_nodes}x{m_gpus}:{m_bytes}"
            )

            def emit(trial: int, seconds: float, verified: bool) -> None:
                records.append(
                    RunRecord(
                        backend=backend,
                        collective=config.collective,
                        algorithm=config.algorithm,
                        inter=config.inter,
                        p=p,
                        n_nodes=n_nodes,
                        m_gpus=m_gpus,
                        m_bytes=m_bytes,
                        trial=trial,
                        seconds=seconds,
                        verified=verified,
                    )
                )

            if backend == "sim":
                sim_config = simnet.SimConfig(
                    topo=topo,
                    params=config.params,
                    nic_policy=config.nic_policy,
                    phys_topology=config.phys_topology,
                    reduce_profile=config.reduce_profile,
                )
                result = simnet.simulate(
                    sim_config,
                    config.collective,
                    config.algorithm,
                    m_bytes,
                    inter_alg=config.inter,
                )
                emit(0, result.seconds, False)
                continue

            inputs = make_inputs(config, cell_id, p, m_bytes, config.collective)
            fn = _collective_fn(config, topo, inputs)
            verified = False
            trials = config.trials + (1 if config.warmup else 0)
            if backend == "inprocess":
                if config.verify:
                    outputs = run_ranks(p, fn)
                    _verify_outputs(config.collective, inputs, outputs)
                    verified = True
                for trial in range(trials):
                    emit(trial, _timed_trial_inprocess(config, topo, inputs), verified)
            else:  # socket: this process is one rank
                if config.verify:
                    _verify_own_output(
                        config.collective, inputs, world.rank, fn(world)
                    )
                    verified = True
                for trial in range(trials):
                    world.barrier()
                    start = time.perf_counter()
                    fn(world)
                    world.barrier()
                    emit(trial, time.perf_counter() - start, verified)
    return records


@dataclass(frozen=True)
class CellSummary:
    cell: tuple
    count: int
    mean: float
    std: float
    min: float


def summarize(records, *, drop_first_trial: bool = False) -> list[CellSummary]:
    """Per-cell sample mean, (n-1)-denominator standard deviation, and
    minimum. ``drop_first_trial`` excludes trial 0 of each cell (warm-up)."""
    cells: dict[tuple, list[RunRecord]] = {}
    for rec in records:
        cells.setdefault(rec.cell_key(), []).append(rec)
    if not cells:
        raise EmptyCell("no records to summarize")
    out = []
    for key in sorted(cells):
        rows = cells[key]
        if drop_first_trial and len(rows) > 1:
            rows = [r for r in rows if r.trial != 0]
        if not rows:
            raise EmptyCell(f"cell {key} has no records")
        values = [r.seconds for r in rows]
        out.append(
            CellSummary(
                cell=key,
                count=len(values),
                mean=statistics.fmean(values),
                std=statistics.stdev(values) if len(values) > 1 else 0.0,
                min=min(values),
            )
        )
    return out


def emit_heatmap_data(records_a, records_b) -> list[tuple[int, int, float]]:
    """Speedup of record set A over baseline B per (p, m_bytes) cell:
    speedup = mean_b / mean_a. Both sets must cover the same grid."""

    def cell_means(records):
        groups: dict[tuple[int, int], list[float]] = {}
        for rec in records:
            groups.setdefault((rec.p, rec.m_bytes), []).append(rec.seconds)
        return {k: statistics.fmean(v) for k, v in groups.items()}

    means_a, means_b = cell_means(records_a), cell_means(records_b)
    if set(means_a) != set(means_b):
        raise GridMismatch(
            f"grids differ: {sorted(set(means_a) ^ set(means_b))}"
        )
    if not means_a:
        raise GridMismatch("empty record sets")
    return [
        (p, m, means_b[(p, m)] / means_a[(p, m)]) for p, m in sorted(means_a)
    ]


def write_heatmap_csv(rows, path) -> None:
    with open(path, "w") as fh:
        fh.write("p,m_bytes,speedup\n")
        for p, m, speedup in rows:
            fh.write(f"{p},{m},{speedup!r}\n")


def calibrate_selector(
    n_nodes_list,
    sizes,
    params: CostParams | None = None,
    *,
    phys_topology: str = "ring_of_nodes",
    collective: str = "all_gather",
) -> CalibrationTable:
    """Simulate ring vs recursive inter-node collectives over single-GPU
    nodes and record the winner per (node count, size). Ring wins ties and
    is the only candidate for non-power-of-two node counts."""
    params = params or CostParams()
    table = CalibrationTable()
    for n in n_nodes_list:
        topo = Topology(n, 1, 1)
        config = simnet.SimConfig(
            topo=topo, params=params, phys_topology=phys_topology
        )
        for m in sizes:
            t_ring = simnet.simulate(config, collective, "ring", m).seconds
            if collectives.is_power_of_two(n):
                t_rec = simnet.simulate(config, collective, "recursive", m).seconds
            else:
                t_rec = math.inf
            winner = "ring" if t_ring <= t_rec else "recursive"
            table.add(
                CalibrationEntry(
                    n_nodes=n,
                    m_bytes=m,
                    ring_seconds=t_ring,
                    recursive_seconds=t_rec,
                    winner=winner,
                )
            )
    return table


def write_records_csv(records, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(RunRecord.CSV_FIELDS) + "\n")
        for r in records:
            fh.write(
                f"{r.backend},{r.collective},{r.algorithm},{r.inter},{r.p},"
                f"{r.n_nodes},{r.m_gpus},{r.m_bytes},{r.trial},{r.seconds!r},"
                f"{int(r.verified)}\n"
            )


def read_records_csv(path) -> list[RunRecord]:
    import csv

    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                RunRecord(
                    backend=row["backend"],
                    collective=row["collective"],
                    algorithm=row["algorithm"],
                    inter=row["inter"],
                    p=int(row["p"]),
                    n_nodes=int(row["N"]),
                    m_gpus=int(row["M"]),
                    m_bytes=int(row["m_bytes"]),
                    trial=int(row["trial"]),
                    seconds=float(row["seconds"]),
                    verified=bool(int(row["verified"])),
                )
            )
    return records
