"""Binary checkpoints for interrupting and resuming a solver run.

Layout (all little-endian): magic ``SDGA``, format version u16, iteration
counter u64, sub-problem count u32, then per sub-problem (ascending id):
id i64, frozen u8, disagreement f64, wall-time f64, and four length-prefixed
(u64) arrays of 8-byte floats: values, constraint-row duals, lower-bound
duals, upper-bound duals. Storing the duals alongside the values makes a
resumed run warm-start its projections exactly like the uninterrupted one,
so traces continue bit for bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"SDGA"
VERSION = 1


@dataclass
class SubProblemCheckpoint:
    id: int
    frozen: bool
    disagreement: float
    wall_ms: float
    values: np.ndarray
    row_dual: np.ndarray
    lower_dual: np.ndarray
    upper_dual: np.ndarray


@dataclass
class CheckpointState:
    """Neutral image of an iteration, independent of live solver objects."""

    k: int
    subproblems: dict[int, SubProblemCheckpoint]


def state_to_checkpoint(state) -> CheckpointState:
    """Snapshot a solver :class:`~sodta.dga.IterationState`."""
    if not state.values:
        raise CheckpointError("cannot checkpoint a state with no sub-problems")
    subs = {}
    for sid in sorted(state.values):
        ws = state.workspaces[sid]
        subs[sid] = SubProblemCheckpoint(
            id=sid,
            frozen=bool(state.frozen[sid]),
            disagreement=float(state.disagreements[sid]),
            wall_ms=float(state.wall_ms[sid]),
            values=state.values[sid].copy(),
            row_dual=ws.row_dual.copy(),
            lower_dual=ws.lower_dual.copy(),
            upper_dual=ws.upper_dual.copy())
    return CheckpointState(k=state.k, subproblems=subs)


def write_checkpoint(state, path: str | Path) -> None:
    """Serialize an iteration state (live or neutral) to ``path``."""
    snap = state if isinstance(state, CheckpointState) \
        else state_to_checkpoint(state)
    if not snap.subproblems:
        raise CheckpointError("cannot checkpoint a state with no sub-problems")
    chunks = [MAGIC, struct.pack("<HQI", VERSION, snap.k,
                                 len(snap.subproblems))]
    for sid in sorted(snap.subproblems):
        sub = snap.subproblems[sid]
        chunks.append(struct.pack("<qBdd", sub.id, int(sub.frozen),
                                  sub.disagreement, sub.wall_ms))
        for arr in (sub.values, sub.row_dual, sub.lower_dual, sub.upper_dual):
            data = np.ascontiguousarray(arr, dtype="<f8")
            chunks.append(struct.pack("<Q", data.size))
            chunks.append(data.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_checkpoint(path: str | Path) -> CheckpointState:
    """Read a checkpoint; raises :class:`CheckpointError` on anything that
    does not parse back exactly."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") \
            from exc
    view = memoryview(raw)
    offset = 0

    def take(n: int) -> memoryview:
        nonlocal offset
        if offset + n > len(view):
            raise CheckpointError(
                f"truncated checkpoint: wanted {n} bytes at offset {offset}, "
                f"file has {len(view)}")
        chunk = view[offset:offset + n]
        offset += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise CheckpointError(
            "bad magic bytes: not a checkpoint file or wrong format")
    version, k, n_subs = struct.unpack("<HQI", take(14))
    if version != VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} not supported "
            f"(expected {VERSION})")
    if n_subs == 0:
        raise CheckpointError("checkpoint contains no sub-problems")

    subs: dict[int, SubProblemCheckpoint] = {}
    for _ in range(n_subs):
        sid, frozen, disagree, wall = struct.unpack("<qBdd", take(25))
        arrays = []
        for _ in range(4):
            (size,) = struct.unpack("<Q", take(8))
            arrays.append(np.frombuffer(take(8 * size), dtype="<f8").copy())
        if sid in subs:
            raise CheckpointError(f"duplicate sub-problem id {sid}")
        subs[sid] = SubProblemCheckpoint(
            id=sid, frozen=bool(frozen), disagreement=disagree, wall_ms=wall,
            values=arrays[0], row_dual=arrays[1], lower_dual=arrays[2],
            upper_dual=arrays[3])
    if offset != len(view):
        raise CheckpointError(
            f"{len(view) - offset} trailing bytes after checkpoint payload")
    return CheckpointState(k=int(k), subproblems=subs)
