"""Compact quotient Gamma \\ PSL(2, R) for the Bolza octagon group."""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from loguru import logger

from src.domain.errors import RejectionFailure, ReductionStall
from src.domain.hyperbolic import (
    GroupElement,
    base_cosh_distance,
    canonicalize,
    rotation_matrix,
)

DOMAIN_SLACK = 1e-9
DESCENT_TOL = 1e-12
MAX_DESCENT_STEPS = 10_000

# regular octagon with interior angles pi/4 centred at i
HALF_SIDE_DISTANCE = float(np.arccosh(1.0 + np.sqrt(2.0)))
OCTAGON_RADIUS = float(np.arccosh(3.0 + 2.0 * np.sqrt(2.0)))

# letters 0..3 are the generators, 4..7 their inverses
# genus-two relation [A1, B1][A2, B2] = 1 with the pairs written as words in the letters
BOLZA_COMMUTATORS = (((4,), (7, 2, 5)), ((7, 2), (5, 3)))


def inverse_letter(letter: int) -> int:
    return (letter + 4) % 8


def inverse_word(word: tuple[int, ...]) -> tuple[int, ...]:
    return tuple(inverse_letter(letter) for letter in reversed(word))


def free_reduce(word: tuple[int, ...]) -> tuple[int, ...]:
    reduced: list[int] = []
    for letter in word:
        if reduced and reduced[-1] == inverse_letter(letter):
            reduced.pop()
        else:
            reduced.append(letter)
    return tuple(reduced)


def commutator_product(pairs: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]) -> tuple[int, ...]:
    word: tuple[int, ...] = ()
    for a, b in pairs:
        word += a + b + inverse_word(a) + inverse_word(b)
    return free_reduce(word)


# reduces to the cyclic octagon word (4, 7, 2, 5, 0, 3, 6, 1)
BOLZA_RELATION = commutator_product(BOLZA_COMMUTATORS)


@dataclass(frozen=True, eq=False)
class ReducedPoint:
    g: GroupElement
    word: tuple[int, ...] = ()
    transport: GroupElement = field(default_factory=GroupElement.identity)


@dataclass(frozen=True, eq=False)
class LiouvilleSample:
    matrices: np.ndarray
    attempts: int
    accepted: int
    box_area: float

    @property
    def acceptance(self) -> float:
        return self.accepted / self.attempts

    @property
    def area_estimate(self) -> float:
        return self.box_area * self.acceptance


@dataclass(frozen=True, eq=False)
class FuchsianGroup:
    generators: tuple[GroupElement, ...]
    relation: tuple[int, ...]
    domain_radius: float
    word_length: int
    side_pairings: np.ndarray
    word_cache: np.ndarray
    words: tuple[tuple[int, ...], ...]

    @classmethod
    def build(
        cls,
        generators: list[GroupElement],
        relation: tuple[int, ...],
        domain_radius: float,
        word_length: int = 4,
    ) -> "FuchsianGroup":
        for k, gen in enumerate(generators):
            if abs(np.trace(gen.m)) <= 2.0:
                raise ValueError(f"generator {k} is not hyperbolic: trace {np.trace(gen.m):.6g}")

        letters = np.stack([g.m for g in generators] + [g.inverse().m for g in generators])
        cache, words = [], []
        frontier = [((letter,), letters[letter]) for letter in range(len(letters))]
        for _ in range(word_length):
            cache.extend(m for _, m in frontier)
            words.extend(w for w, _ in frontier)
            frontier = [
                (w + (letter,), canonicalize(m @ letters[letter]))
                for w, m in frontier
                for letter in range(len(letters))
                if letter != inverse_letter(w[-1])
            ]
        logger.debug(f"Word cache built: {len(cache)} elements up to length {word_length}")

        return cls(
            generators=tuple(generators),
            relation=tuple(relation),
            domain_radius=domain_radius,
            word_length=word_length,
            side_pairings=letters,
            word_cache=np.stack(cache),
            words=tuple(words),
        )

    def letter(self, letter: int) -> GroupElement:
        return GroupElement(self.side_pairings[letter])

    def word_element(self, word: tuple[int, ...]) -> GroupElement:
        m = np.eye(2)
        for letter in word:
            m = m @ self.side_pairings[letter]
        return GroupElement(m)

    def relation_residual(self) -> float:
        m = self.word_element(self.relation).m
        return float(np.max(np.abs(m - np.eye(2))))

    def contains(self, m: np.ndarray) -> np.ndarray:
        """Dirichlet test: d(g.i, i) <= d(g.i, sigma.i) for every side pairing sigma."""
        m = np.asarray(m, dtype=float)
        own = np.arccosh(np.maximum(base_cosh_distance(m), 1.0))
        moved = np.einsum("kij,...jl->k...il", self.side_pairings, m)
        other = np.arccosh(np.maximum(base_cosh_distance(moved), 1.0))
        return np.all(own <= other + DOMAIN_SLACK, axis=0)

    def reduce(self, g: GroupElement) -> ReducedPoint:
        """Greedy Dirichlet descent through the word cache."""
        m = g.m
        transport = np.eye(2)
        word: list[int] = []
        current = float(base_cosh_distance(m))
        for _ in range(MAX_DESCENT_STEPS):
            candidates = base_cosh_distance(self.word_cache @ m)
            best = int(np.argmin(candidates))
            if candidates[best] >= current - DESCENT_TOL:
                break
            m = canonicalize(self.word_cache[best] @ m)
            transport = self.word_cache[best] @ transport
            word.extend(self.words[best])
            current = float(candidates[best])

        distance = float(np.arccosh(max(current, 1.0)))
        if distance > self.domain_radius + DOMAIN_SLACK:
            raise ReductionStall(distance, self.domain_radius)
        return ReducedPoint(GroupElement(m), tuple(word), GroupElement(transport))

    def reduce_matrices(self, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized descent through the side pairings; returns (reduced, transport)."""
        m = canonicalize(m)
        single = m.ndim == 2
        if single:
            m = m[None]
        transport = np.broadcast_to(np.eye(2), m.shape).copy()
        current = base_cosh_distance(m)
        for _ in range(MAX_DESCENT_STEPS):
            moved = np.einsum("kij,njl->knil", self.side_pairings, m)
            cosh = base_cosh_distance(moved)
            best = np.argmin(cosh, axis=0)
            best_cosh = cosh[best, np.arange(len(m))]
            improve = best_cosh < current - DESCENT_TOL
            if not np.any(improve):
                break
            idx = np.nonzero(improve)[0]
            m[idx] = canonicalize(moved[best[idx], idx])
            transport[idx] = self.side_pairings[best[idx]] @ transport[idx]
            current[idx] = best_cosh[idx]

        worst = float(np.arccosh(max(float(np.max(current)), 1.0)))
        if worst > self.domain_radius + DOMAIN_SLACK:
            raise ReductionStall(worst, self.domain_radius)
        if single:
            return m[0], transport[0]
        return m, transport

    def orbit_ball(self, radius: float) -> np.ndarray:
        """All gamma with d(gamma.i, i) <= radius.

        Breadth-first over tiles: a tile met by the segment [i, gamma.i] has its
        centre within radius + domain_radius of i, so pruning there is complete.
        """
        bound = np.cosh(radius + self.domain_radius)
        seen = {self._key(np.eye(2))}
        found = [np.eye(2)]
        frontier = np.eye(2)[None]
        while len(frontier):
            nxt = canonicalize(np.einsum("nij,kjl->nkil", frontier, self.side_pairings).reshape(-1, 2, 2))
            nxt = nxt[base_cosh_distance(nxt) <= bound]
            fresh = []
            for m in nxt:
                key = self._key(m)
                if key not in seen:
                    seen.add(key)
                    fresh.append(m)
            found.extend(fresh)
            frontier = np.array(fresh).reshape(-1, 2, 2)

        elements = np.stack(found)
        return elements[base_cosh_distance(elements) <= np.cosh(radius)]

    @staticmethod
    def _key(m: np.ndarray) -> tuple[float, ...]:
        return tuple(np.round(m, 8).ravel() + 0.0)

    def sample_liouville_array(self, n: int, seed: int) -> LiouvilleSample:
        if n < 1:
            raise ValueError(f"sample size must be >= 1, got {n}")
        rng = np.random.default_rng(seed)
        half_width = float(np.sinh(self.domain_radius))
        w_low, w_high = float(np.exp(-self.domain_radius)), float(np.exp(self.domain_radius))
        box_area = 4.0 * half_width**2

        batch = min(max(1024, 16 * n), 250_000)
        chunks, accepted, attempts = [], 0, 0
        while accepted < n:
            u = rng.uniform(-half_width, half_width, batch)
            v = 1.0 / rng.uniform(w_low, w_high, batch)
            root = np.sqrt(v)
            zero = np.zeros_like(root)
            base = np.stack([np.stack([root, u / root], -1), np.stack([zero, 1.0 / root], -1)], -2)
            inside = self.contains(base)
            attempts += batch
            accepted += int(inside.sum())
            chunks.append(base[inside])
            if attempts >= 100 * batch and accepted / attempts < 0.01:
                break

        rate = accepted / attempts
        if rate < 0.01:
            raise RejectionFailure(rate)

        base = np.concatenate(chunks)[:n]
        angle = rng.uniform(0.0, 2.0 * np.pi, n)
        matrices = canonicalize(base @ rotation_matrix(angle / 2.0))
        return LiouvilleSample(matrices, attempts, accepted, box_area)

    def sample_liouville(self, n: int, seed: int) -> list[GroupElement]:
        return [GroupElement(m) for m in self.sample_liouville_array(n, seed).matrices]


def octagon_rotation(k: int) -> np.ndarray:
    """Rotation about i by k pi/4."""
    return rotation_matrix(k * np.pi / 8.0)


def side_midpoint(k: int) -> complex:
    return GroupElement(octagon_rotation(k)).apply(np.exp(HALF_SIDE_DISTANCE) * 1j)


@lru_cache(maxsize=4)
def bolza_group(word_length: int = 4) -> FuchsianGroup:
    """Side pairings of the regular octagon; generator k carries side k onto side k + 4."""
    shift = np.diag([np.exp(-HALF_SIDE_DISTANCE), np.exp(HALF_SIDE_DISTANCE)])
    generators = []
    for k in range(4):
        rho = octagon_rotation(k)
        generators.append(GroupElement(rho @ shift @ rho.T))
    group = FuchsianGroup.build(generators, BOLZA_RELATION, OCTAGON_RADIUS, word_length)
    logger.info(f"Bolza group ready (relation residual {group.relation_residual():.2e})")
    return group
