"""Equality-link matrices: Hermitian forms that vanish on the monomial manifold.

The components of X = (V (x) V*^T; V; 1) are algebraically dependent; five
families of sparse Hermitian matrices encode those dependencies, so that
X* Qt X = 0 identically in V. They enter the feasibility LMI with sign-free
multipliers. Raw enumeration yields N^4 + N^3 + N^2 + 2N matrices (families
of size N^4, N^3, N^2, N, N); pruning drops the identically-zero and
duplicate/negated ones while provably preserving the linear span.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np

from .errors import CatalogError
from .quadratics import const_pos, kron_pos, lin_pos, monomial_dim, monomial_vector


def link_count(n: int) -> int:
    """Raw catalog size before pruning."""
    return n**4 + n**3 + n**2 + 2 * n


@dataclass(frozen=True)
class LinkMatrix:
    """Sparse Hermitian link, stored as 0-based (row, col, value) triplets.

    ``entries`` already contains both halves of each Hermitian pair; an
    empty tuple marks an identically-zero link (kept in the raw catalog so
    the enumeration count matches the closed-form formula).
    """

    family: int
    indices: tuple[int, ...]
    dim: int
    entries: tuple[tuple[int, int, complex], ...]

    def to_dense(self) -> np.ndarray:
        m = np.zeros((self.dim, self.dim), dtype=complex)
        for i, j, val in self.entries:
            m[i, j] = val
        return m

    def quad_form(self, x: np.ndarray) -> complex:
        return sum(np.conj(x[i]) * val * x[j] for i, j, val in self.entries)

    @property
    def label(self) -> str:
        return f"link:L{self.family}{self.indices}"


@dataclass(frozen=True)
class LinkCatalog:
    n: int
    links: tuple[LinkMatrix, ...]
    pruned: bool = False

    def __len__(self) -> int:
        return len(self.links)

    def family_counts(self) -> dict[int, int]:
        counts = {f: 0 for f in range(1, 6)}
        for link in self.links:
            counts[link.family] += 1
        return counts


def _collect(placements: list[tuple[int, int, complex]]) -> tuple[tuple[int, int, complex], ...]:
    # Coincident placements cancel or accumulate exactly (values are +-1, +-j).
    acc: dict[tuple[int, int], complex] = {}
    for i, j, val in placements:
        acc[(i, j)] = acc.get((i, j), 0.0 + 0.0j) + val
    return tuple((i, j, v) for (i, j), v in sorted(acc.items()) if v != 0)


def enumerate_links(n: int) -> LinkCatalog:
    """All five link families for an N-bus network, in deterministic order."""
    if n < 1:
        raise CatalogError(f"enumerate_links: n must be >= 1, got {n}")
    dim = monomial_dim(n)
    cp = const_pos(n)
    buses = range(1, n + 1)
    links: list[LinkMatrix] = []

    # L1: conj(v_a v_b*) (v_c v_d*) = conj(v_d v_b*) (v_c v_a*)
    for a, b, c, d in product(buses, repeat=4):
        p, q = kron_pos(n, a, b), kron_pos(n, c, d)
        r, s = kron_pos(n, d, b), kron_pos(n, c, a)
        entries = _collect([(p, q, 1), (q, p, 1), (r, s, -1), (s, r, -1)])
        links.append(LinkMatrix(1, (a, b, c, d), dim, entries))

    # L2: conj(v_a) (v_b v_c*) = conj(v_c) (v_b v_a*)
    for a, b, c in product(buses, repeat=3):
        p, q = lin_pos(n, a), kron_pos(n, b, c)
        r, s = lin_pos(n, c), kron_pos(n, b, a)
        entries = _collect([(p, q, 1), (q, p, 1), (r, s, -1), (s, r, -1)])
        links.append(LinkMatrix(2, (a, b, c), dim, entries))

    # L3: v_a v_b* = conj(v_b v_a*)
    for a, b in product(buses, repeat=2):
        p, q = kron_pos(n, a, b), kron_pos(n, b, a)
        entries = _collect([(cp, p, 1), (p, cp, 1), (q, cp, -1), (cp, q, -1)])
        links.append(LinkMatrix(3, (a, b), dim, entries))

    # L4: 2 |v_a|^2 (linear block) = (v_a v_a*) + conj(v_a v_a*)
    for a in buses:
        p = kron_pos(n, a, a)
        entries = _collect([(cp, p, -1), (p, cp, -1), (lin_pos(n, a), lin_pos(n, a), 2)])
        links.append(LinkMatrix(4, (a,), dim, entries))

    # L5: v_a v_a* is real
    for a in buses:
        p = kron_pos(n, a, a)
        entries = _collect([(cp, p, 1j), (p, cp, -1j)])
        links.append(LinkMatrix(5, (a,), dim, entries))

    assert len(links) == link_count(n)
    return LinkCatalog(n=n, links=tuple(links), pruned=False)


def _vectorized_rank(links: list[LinkMatrix], dim: int) -> int:
    if not links:
        return 0
    stack = np.zeros((len(links), 2 * dim * dim))
    for r, link in enumerate(links):
        for i, j, val in link.entries:
            stack[r, i * dim + j] = val.real
            stack[r, dim * dim + i * dim + j] = val.imag
    return int(np.linalg.matrix_rank(stack))


def _signature(entries: tuple[tuple[int, int, complex], ...]):
    # Sign-normalize so a link and its negation share one signature.
    _, _, first = entries[0]
    flip = first.real < 0 or (first.real == 0 and first.imag < 0)
    sign = -1 if flip else 1
    return tuple((i, j, (sign * v).real, (sign * v).imag) for i, j, v in entries)


def prune(catalog: LinkCatalog) -> LinkCatalog:
    """Drop zero links and exact duplicates/negations; span is preserved.

    The retained set spans the same subspace as the raw set (verified by
    the rank of the vectorized stacks); only the multiplier count shrinks.
    """
    kept: list[LinkMatrix] = []
    seen = set()
    for link in catalog.links:
        if not link.entries:
            continue
        sig = _signature(link.entries)
        if sig in seen:
            continue
        seen.add(sig)
        kept.append(link)

    dim = monomial_dim(catalog.n)
    raw_rank = _vectorized_rank([l for l in catalog.links if l.entries], dim)
    kept_rank = _vectorized_rank(kept, dim)
    if kept_rank != raw_rank:
        raise CatalogError(
            f"prune: span not preserved (rank {kept_rank} after, {raw_rank} before)"
        )
    return LinkCatalog(n=catalog.n, links=tuple(kept), pruned=True)


@dataclass(frozen=True)
class AnnihilationReport:
    trials: int
    worst_by_family: dict[int, float]

    @property
    def worst(self) -> float:
        return max(self.worst_by_family.values(), default=0.0)


def verify_annihilation(catalog: LinkCatalog, trials: int, seed: int = 0) -> AnnihilationReport:
    """Check X* Qt X = 0 on random voltages for every link in the catalog.

    Residuals are compared against 1e-9 * (1 + ||X||^2); the first violation
    raises CatalogError naming the family and index tuple.
    """
    if trials < 1:
        raise CatalogError("verify_annihilation: trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = {f: 0.0 for f in range(1, 6)}
    for _ in range(trials):
        v = rng.standard_normal(catalog.n) + 1j * rng.standard_normal(catalog.n)
        x = monomial_vector(v)
        tol = 1e-9 * (1.0 + float(np.vdot(x, x).real))
        for link in catalog.links:
            residual = abs(link.quad_form(x))
            if residual > tol:
                raise CatalogError(
                    f"family {link.family} {link.indices}: residual {residual:.3e} "
                    f"exceeds {tol:.3e}"
                )
            worst[link.family] = max(worst[link.family], residual)
    return AnnihilationReport(trials=trials, worst_by_family=worst)


# ---------------------------------------------------------------------------
# Catalog dump (same triplet format as the quadratics debug dump)
# ---------------------------------------------------------------------------


def catalog_to_dict(catalog: LinkCatalog) -> dict:
    return {
        "n": catalog.n,
        "pruned": catalog.pruned,
        "count": len(catalog.links),
        "family_counts": {str(k): v for k, v in catalog.family_counts().items()},
        "links": [
            {
                "family": link.family,
                "indices": list(link.indices),
                "entries": [
                    {"i": i, "j": j, "re": float(v.real), "im": float(v.imag)}
                    for i, j, v in link.entries
                ],
            }
            for link in catalog.links
        ],
    }


def dump_catalog(catalog: LinkCatalog, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(catalog_to_dict(catalog), fh, indent=1, sort_keys=True)
        fh.write("\n")
