"""Independent reference computations.  Nothing here imports the code under test."""

from __future__ import annotations

POLY = 0x11D


def gf_mul(a: int, b: int) -> int:
    """Shift-and-add multiplication in GF(2^8) modulo x^8+x^4+x^3+x^2+1."""
    out = 0
    while b:
        if b & 1:
            out ^= a
        a <<= 1
        if a & 0x100:
            a ^= POLY
        b >>= 1
    return out


def gf_inv(a: int) -> int:
    for b in range(1, 256):
        if gf_mul(a, b) == 1:
            return b
    raise ZeroDivisionError(a)


def gf_pow(a: int, n: int) -> int:
    out = 1
    for _ in range(n):
        out = gf_mul(out, a)
    return out


def mat_mul(a: list[list[int]], b: list[list[int]]) -> list[list[int]]:
    rows, inner, cols = len(a), len(b), len(b[0])
    out = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        for j in range(cols):
            acc = 0
            for t in range(inner):
                acc ^= gf_mul(a[i][t], b[t][j])
            out[i][j] = acc
    return out


def mat_inv(m: list[list[int]]) -> list[list[int]]:
    n = len(m)
    aug = [list(row) + [int(i == j) for j in range(n)] for i, row in enumerate(m)]
    for col in range(n):
        pivot = next(r for r in range(col, n) if aug[r][col])
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = gf_inv(aug[col][col])
        aug[col] = [gf_mul(inv, x) for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col]:
                f = aug[r][col]
                aug[r] = [x ^ gf_mul(f, y) for x, y in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def generator(k: int, m: int) -> list[list[int]]:
    v = [[gf_pow(r, c) for c in range(k)] for r in range(k + m)]
    return mat_mul(v, mat_inv(v[:k]))


def encode(data: bytes, k: int, m: int) -> list[bytes]:
    size = max(1, -(-len(data) // k))
    padded = data + bytes(size * k - len(data))
    stripes = [list(padded[i * size:(i + 1) * size]) for i in range(k)]
    coded = mat_mul(generator(k, m), stripes)
    return [bytes(row) for row in coded]


def is_leap(y: int) -> bool:
    return y % 4 == 0 and (y % 100 != 0 or y % 400 == 0)


def valid_dates(year: int) -> set[str]:
    days = [31, 29 if is_leap(year) else 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31]
    return {f"{year:04d}-{mo:02d}-{d:02d}" for mo in range(1, 13) for d in range(1, days[mo - 1] + 1)}


def scan_query(blocks, clauses, requester_org, member_orgs):
    """Linear scan: VALID, non-genesis, predicate-matching records visible to a member."""
    if requester_org not in member_orgs:
        return []
    hits = []
    for block in blocks:
        if block.height == 0:
            continue
        for tx in block.transactions:
            if tx.validity.value != "VALID":
                continue
            ok = True
            for name, op, value in clauses:
                actual = tx.record.elements.get(name)
                if actual is None or (op == "=" and actual != value) or \
                        (op == "~" and value.lower() not in actual.lower()):
                    ok = False
            if ok:
                hits.append((tx.record.experiment_id, block.mid, tx.tx_id))
    return hits
