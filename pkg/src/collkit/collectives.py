"""Flat all-gather and reduce-scatter algorithms over one communicator.

All buffers are contiguous float32 arrays; payload sizes on the wire are
element counts times four bytes. Ring variants run in p-1 steps and work
for any group size; the recursive variants run in log2(p) steps and
require a power-of-two group.
"""
from __future__ import annotations

import enum

import numpy as np

from .errors import LengthMismatch, NonPowerOfTwo, NotDivisible
from .transport.base import Communicator


class ReduceOp(enum.Enum):
    SUM = "sum"


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def as_elements(buf) -> np.ndarray:
    """View/convert input as a contiguous 1-D float32 array."""
    arr = np.ascontiguousarray(buf, dtype=np.float32)
    return arr.reshape(-1)


def to_payload(arr: np.ndarray) -> bytes:
    return arr.tobytes()


def from_payload(data: bytes, expected_elems: int | None = None) -> np.ndarray:
    arr = np.frombuffer(data, dtype=np.float32)
    if expected_elems is not None and arr.size != expected_elems:
        raise LengthMismatch(
            f"received {arr.size} elements, expected {expected_elems}"
        )
    return arr


def reduce_inplace(acc: np.ndarray, other: np.ndarray, op: ReduceOp = ReduceOp.SUM) -> np.ndarray:
    """Element-wise ``acc[i] <- acc[i] + other[i]``; returns ``acc``."""
    if acc.shape != other.shape:
        raise LengthMismatch(f"length mismatch: {acc.shape} vs {other.shape}")
    if op is not ReduceOp.SUM:
        raise ValueError(f"unsupported reduce op {op}")
    np.add(acc, other, out=acc)
    return acc


def ring_all_gather(comm: Communicator, buf) -> np.ndarray:
    """All-gather where each rank forwards one block per step around the
    ring. Rank r sends to r+1 and receives from r-1 (mod p); at step s it
    forwards the block originated by rank (r - s) mod p. Returns the
    rank-ordered concatenation of all contributions.
    """
    src = as_elements(buf)
    p, r = comm.size, comm.rank
    n = src.size
    out = np.empty(p * n, dtype=np.float32)
    out[r * n : (r + 1) * n] = src
    if p == 1:
        return out
    base = comm.next_base_tag()
    nxt, prv = (r + 1) % p, (r - 1) % p
    for s in range(p - 1):
        send_block = (r - s) % p
        recv_block = (r - s - 1) % p
        comm.send(nxt, base + s, to_payload(out[send_block * n : (send_block + 1) * n]))
        data = from_payload(comm.recv(prv, base + s), n)
        out[recv_block * n : (recv_block + 1) * n] = data
    return out


def ring_reduce_scatter(comm: Communicator, buf) -> np.ndarray:
    """Reduce-scatter where the partial sum of each chunk travels once
    around the ring, gaining one local contribution per hop. Rank r ends
    with chunk r of the element-wise sum over all ranks' inputs."""
    src = as_elements(buf)
    p, r = comm.size, comm.rank
    if src.size % p != 0:
        raise NotDivisible(f"input of {src.size} elements not divisible by p={p}")
    n = src.size // p
    if p == 1:
        return src.copy()

    def chunk(j: int) -> np.ndarray:
        return src[j * n : (j + 1) * n]

    base = comm.next_base_tag()
    nxt, prv = (r + 1) % p, (r - 1) % p
    # Partial for chunk (r-1) starts here; after p-1 hops the partial for
    # chunk r arrives fully accumulated.
    carry = chunk((r - 1) % p).copy()
    for s in range(1, p):
        comm.send(nxt, base + s - 1, to_payload(carry))
        received = from_payload(comm.recv(prv, base + s - 1), n)
        carry = chunk((r - s - 1) % p).copy()
        reduce_inplace(carry, received)
    return carry


def recdbl_all_gather(comm: Communicator, buf) -> np.ndarray:
    """Recursive-doubling all-gather: at step k, rank r swaps its current
    2^k blocks with partner r XOR 2^k, doubling the gathered range. Same
    output contract as :func:`ring_all_gather`, log2(p) steps."""
    src = as_elements(buf)
    p, r = comm.size, comm.rank
    if not is_power_of_two(p):
        raise NonPowerOfTwo(f"recursive doubling requires power-of-two ranks, got {p}")
    n = src.size
    out = np.empty(p * n, dtype=np.float32)
    out[r * n : (r + 1) * n] = src
    if p == 1:
        return out
    base = comm.next_base_tag()
    for k in range(p.bit_length() - 1):
        width = 1 << k
        partner = r ^ width
        my_start = (r >> k) << k
        peer_start = (partner >> k) << k
        payload = to_payload(out[my_start * n : (my_start + width) * n])
        data = from_payload(comm.sendrecv(partner, base + k, payload), width * n)
        out[peer_start * n : (peer_start + width) * n] = data
    return out


def rechalf_reduce_scatter(comm: Communicator, buf) -> np.ndarray:
    """Recursive-halving reduce-scatter: at step k, rank r exchanges the
    half of its active region owned by partner r XOR 2^(log2(p)-1-k),
    folds the received partials into its own half, and halves the active
    region. Same output contract as :func:`ring_reduce_scatter`."""
    src = as_elements(buf)
    p, r = comm.size, comm.rank
    if not is_power_of_two(p):
        raise NonPowerOfTwo(f"recursive halving requires power-of-two ranks, got {p}")
    if src.size % p != 0:
        raise NotDivisible(f"input of {src.size} elements not divisible by p={p}")
    n = src.size // p
    if p == 1:
        return src.copy()
    work = src.copy()
    base = comm.next_base_tag()
    lo, hi = 0, p
    k = 0
    while hi - lo > 1:
        half = (hi - lo) // 2
        mid = lo + half
        partner = r ^ half
        if r < mid:
            mine = (lo, mid)
            theirs = (mid, hi)
        else:
            mine = (mid, hi)
            theirs = (lo, mid)
        payload = to_payload(work[theirs[0] * n : theirs[1] * n])
        data = from_payload(comm.sendrecv(partner, base + k, payload), half * n)
        reduce_inplace(work[mine[0] * n : mine[1] * n], data.reshape(-1))
        lo, hi = mine
        k += 1
    return work[r * n : (r + 1) * n].copy()
