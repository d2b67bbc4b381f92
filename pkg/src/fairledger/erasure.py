"""Systematic Reed-Solomon erasure coding over GF(2^8), polynomial 0x11D.

The generator is the (k+m) x k Vandermonde matrix V[i][j] = i**j multiplied by
the inverse of its top k x k block, so the first k rows are the identity and
data stripes are stored verbatim.
"""

from __future__ import annotations

import numpy as np

from .errors import BadParams, InsufficientShards

POLY = 0x11D

EXP = np.zeros(512, dtype=np.uint8)
LOG = np.zeros(256, dtype=np.int32)
_x = 1
for _i in range(255):
    EXP[_i] = _x
    LOG[_x] = _i
    _x <<= 1
    if _x & 0x100:
        _x ^= POLY
EXP[255:510] = EXP[0:255]
del _x, _i

# MUL[a, b] = a*b in GF(256); row a doubles as a lookup table for scaling by a
_a = np.arange(256)
MUL = np.where(
    (_a[:, None] == 0) | (_a[None, :] == 0),
    0,
    EXP[(LOG[_a][:, None] + LOG[_a][None, :]) % 255],
).astype(np.uint8)
del _a


def gf_mul(a: int, b: int) -> int:
    return int(MUL[a, b])


def gf_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no inverse in GF(256)")
    return int(EXP[255 - LOG[a]])


def gf_pow(a: int, n: int) -> int:
    if n == 0:
        return 1
    if a == 0:
        return 0
    return int(EXP[(LOG[a] * n) % 255])


def mat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.uint8)
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            c = a[i, j]
            if c:
                out[i] ^= MUL[c][b[j]]
    return out


def mat_inv(m: np.ndarray) -> np.ndarray:
    n = m.shape[0]
    aug = np.concatenate([m.astype(np.uint8), np.eye(n, dtype=np.uint8)], axis=1)
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r, col]), None)
        if pivot is None:
            raise ValueError("singular matrix")
        aug[[col, pivot]] = aug[[pivot, col]]
        aug[col] = MUL[gf_inv(int(aug[col, col]))][aug[col]]
        for r in range(n):
            if r != col and aug[r, col]:
                aug[r] ^= MUL[aug[r, col]][aug[col]]
    return aug[:, n:]


def vandermonde(rows: int, cols: int) -> np.ndarray:
    return np.array([[gf_pow(r, c) for c in range(cols)] for r in range(rows)], dtype=np.uint8)


_GEN_CACHE: dict[tuple[int, int], np.ndarray] = {}


def generator_matrix(k: int, m: int) -> np.ndarray:
    key = (k, m)
    if key not in _GEN_CACHE:
        v = vandermonde(k + m, k)
        _GEN_CACHE[key] = mat_mul(v, mat_inv(v[:k]))
    return _GEN_CACHE[key]


def _check(k: int, m: int):
    if k < 1 or m < 0 or k + m > 256:
        raise BadParams(f"invalid erasure parameters k={k}, m={m}")


def stripe_length(n: int, k: int) -> int:
    return max(1, -(-n // k))


def encode_shards(data: bytes, k: int, m: int) -> list[bytes]:
    _check(k, m)
    if not data:
        raise BadParams("cannot encode empty data")
    size = stripe_length(len(data), k)
    buf = np.zeros(size * k, dtype=np.uint8)
    buf[: len(data)] = np.frombuffer(data, dtype=np.uint8)
    stripes = buf.reshape(k, size)
    parity = mat_mul(generator_matrix(k, m)[k:], stripes) if m else np.zeros((0, size), dtype=np.uint8)
    return [stripes[i].tobytes() for i in range(k)] + [parity[i].tobytes() for i in range(m)]


def decode_shards(shards: dict[int, bytes], k: int, m: int, original_length: int) -> bytes:
    """Rebuild the original bytes from any ``k`` distinct shard indices."""
    _check(k, m)
    usable = sorted(i for i in shards if 0 <= i < k + m)
    if len(usable) < k:
        raise InsufficientShards(f"{len(usable)} usable shards, need {k}")
    chosen = usable[:k]
    if chosen == list(range(k)):
        data = b"".join(shards[i] for i in chosen)
        return data[:original_length]
    sub = generator_matrix(k, m)[chosen]
    rows = np.stack([np.frombuffer(shards[i], dtype=np.uint8) for i in chosen])
    stripes = mat_mul(mat_inv(sub), rows)
    return stripes.tobytes()[:original_length]
