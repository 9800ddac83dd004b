"""Random modulation patterns and their admissibility checks.

A mask entry is a bounded, discrete complex random variable d. The recovery
theory wants d symmetric with E d = 0, E d^2 = 0 and a fourth moment equal to
twice the squared second moment; distributions satisfying all three are
"strictly" admissible, while dropping the E d^2 = 0 requirement gives the
"relaxed" class. The fourth-moment condition is tested in scale-invariant
form E|d|^4 = 2 (E|d|^2)^2 so that it is meaningful for unnormalized atoms.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

MOMENT_TOL = 1e-12

OCTANARY = "octanary"
TERNARY = "ternary"
BINARY = "binary"
UNIFORM = "uniform"
CUSTOM = "custom"


@dataclass(frozen=True)
class MaskDistribution:
    """Discrete law of a single mask entry: weighted complex atoms."""

    kind: str
    atoms: tuple[tuple[complex, float], ...]
    bound: float
    normalized: bool = False

    def __post_init__(self):
        if len(self.atoms) == 0:
            raise ValueError("mask distribution needs at least one atom")
        probs = np.array([p for _, p in self.atoms])
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > MOMENT_TOL:
            raise ValueError("atom probabilities must be nonnegative and sum to 1")
        if any(abs(v) > self.bound + MOMENT_TOL for v, _ in self.atoms):
            raise ValueError("atom magnitude exceeds the stated bound")

    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.atoms], dtype=np.complex128)

    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.atoms])

    def moment(self, fn) -> complex:
        """Exact atom-weighted expectation of ``fn`` over the distribution."""
        return complex(sum(p * fn(complex(v)) for v, p in self.atoms))

    def second_abs_moment(self) -> float:
        return self.moment(lambda v: abs(v) ** 2).real


@dataclass(frozen=True)
class AdmissibilityReport:
    mean: complex
    square_mean: complex
    second_abs_moment: float
    fourth_abs_moment: float
    symmetric: bool
    strict: bool
    relaxed: bool


@dataclass(frozen=True)
class MaskEnsemble:
    """L modulation patterns of length n drawn from a shared distribution.

    When ``include_plain`` is set, pattern 0 is the all-ones (unmodulated)
    pattern and only the remaining L-1 rows are random.
    """

    patterns: np.ndarray
    distribution: MaskDistribution
    include_plain: bool = False
    seed: int | None = None

    def __post_init__(self):
        patterns = np.asarray(self.patterns, dtype=np.complex128)
        if patterns.ndim != 2 or patterns.shape[0] < 1:
            raise ValueError("patterns must be a (L, n) array with L >= 1")
        object.__setattr__(self, "patterns", patterns)

    @property
    def L(self) -> int:
        return self.patterns.shape[0]

    @property
    def n(self) -> int:
        return self.patterns.shape[1]

    @property
    def bound(self) -> float:
        """Magnitude bound valid for every entry, plain pattern included."""
        if self.include_plain:
            return max(self.distribution.bound, 1.0)
        return self.distribution.bound

    def to_json_dict(self, explicit_patterns: bool = False) -> dict:
        out = {
            "distribution": self.distribution.kind,
            "normalized": self.distribution.normalized,
            "n": self.n,
            "L": self.L,
            "include_plain": self.include_plain,
            "seed": self.seed,
        }
        if explicit_patterns:
            out["patterns"] = [
                [[float(v.real), float(v.imag)] for v in row] for row in self.patterns
            ]
        return out


def octanary(normalized: bool = False) -> MaskDistribution:
    """Eight-point law b1*b2 with b1 uniform on {1,-1,i,-i} and b2 in {1, sqrt(6)}.

    b2 equals 1 with probability 4/5 and sqrt(6) with probability 1/5, so the
    raw law has E|d|^2 = 2; pass ``normalized=True`` to rescale to E|d|^2 = 1.
    """
    b1 = [1.0, -1.0, 1j, -1j]
    atoms = tuple(
        [(v * 1.0, 0.25 * 0.8) for v in b1] + [(v * np.sqrt(6.0), 0.25 * 0.2) for v in b1]
    )
    dist = MaskDistribution(OCTANARY, atoms, bound=float(np.sqrt(6.0)))
    return normalize_distribution(dist) if normalized else dist


def ternary() -> MaskDistribution:
    """Real three-point law: +1, -1 with probability 1/4 each, 0 otherwise."""
    atoms = ((1.0 + 0j, 0.25), (0.0 + 0j, 0.5), (-1.0 + 0j, 0.25))
    return MaskDistribution(TERNARY, atoms, bound=1.0)


def binary() -> MaskDistribution:
    """On/off law: 1 or 0 with probability 1/2 each (not admissible)."""
    atoms = ((1.0 + 0j, 0.5), (0.0 + 0j, 0.5))
    return MaskDistribution(BINARY, atoms, bound=1.0)


def uniform() -> MaskDistribution:
    """Degenerate law d = 1: plain, unmodulated diffraction."""
    return MaskDistribution(UNIFORM, ((1.0 + 0j, 1.0),), bound=1.0, normalized=True)


BUILTIN_DISTRIBUTIONS = {
    OCTANARY: octanary,
    TERNARY: ternary,
    BINARY: binary,
    UNIFORM: uniform,
}


def _atom_set_symmetric(dist: MaskDistribution, tol: float) -> bool:
    # d symmetric <=> the atom measure is invariant under v -> -v; compare
    # aggregated probabilities of each value against its negative.
    values = dist.values()
    probs = dist.probabilities()

    def mass_at(target: complex) -> float:
        return float(probs[np.abs(values - target) <= tol].sum())

    return all(abs(mass_at(v) - mass_at(-v)) <= tol for v in values)


def check_admissibility(dist: MaskDistribution, tol: float = 1e-12) -> AdmissibilityReport:
    """Exact moments of the atom law plus strict/relaxed admissibility flags."""
    mean = dist.moment(lambda v: v)
    square_mean = dist.moment(lambda v: v * v)
    m2 = dist.moment(lambda v: abs(v) ** 2).real
    m4 = dist.moment(lambda v: abs(v) ** 4).real
    symmetric = _atom_set_symmetric(dist, tol)
    scale = max(m2 * m2, 1.0)
    fourth_ok = abs(m4 - 2.0 * m2 * m2) <= tol * scale
    relaxed = abs(mean) <= tol and fourth_ok and symmetric
    strict = relaxed and abs(square_mean) <= tol
    return AdmissibilityReport(
        mean=mean,
        square_mean=square_mean,
        second_abs_moment=m2,
        fourth_abs_moment=m4,
        symmetric=symmetric,
        strict=strict,
        relaxed=relaxed,
    )


def normalize_distribution(dist: MaskDistribution) -> MaskDistribution:
    """Rescale atoms so E|d|^2 = 1; admissibility class is unchanged."""
    m2 = dist.second_abs_moment()
    if m2 <= 0.0:
        raise ValueError("cannot normalize a distribution with E|d|^2 = 0")
    if abs(m2 - 1.0) <= MOMENT_TOL:
        return replace(dist, normalized=True)
    scale = 1.0 / np.sqrt(m2)
    atoms = tuple((v * scale, p) for v, p in dist.atoms)
    return MaskDistribution(dist.kind, atoms, bound=dist.bound * scale, normalized=True)


def ensemble_from_json_dict(data: dict) -> MaskEnsemble:
    """Rebuild an ensemble from its JSON form (explicit patterns or by seed)."""
    kind = data["distribution"]
    if kind not in BUILTIN_DISTRIBUTIONS:
        raise ValueError(f"unknown distribution {kind!r}")
    dist = BUILTIN_DISTRIBUTIONS[kind]()
    if data.get("normalized") and not dist.normalized:
        dist = normalize_distribution(dist)
    if "patterns" in data:
        patterns = np.array(
            [[complex(re, im) for re, im in row] for row in data["patterns"]]
        )
        return MaskEnsemble(
            patterns, dist, include_plain=data.get("include_plain", False), seed=data.get("seed")
        )
    return sample_ensemble(
        dist,
        data["n"],
        data["L"],
        include_plain=data.get("include_plain", False),
        seed=data["seed"],
    )


def sample_ensemble(
    dist: MaskDistribution,
    n: int,
    L: int,
    include_plain: bool = False,
    seed: int | None = 0,
) -> MaskEnsemble:
    """Draw L length-n patterns i.i.d. from ``dist``.

    With ``include_plain`` the first pattern is all-ones and only L-1 random
    patterns are drawn. Reproducible from ``seed``.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    n_random = L - 1 if include_plain else L
    values = dist.values()
    probs = dist.probabilities()
    idx = rng.choice(len(values), size=(n_random, n), p=probs)
    random_rows = values[idx]
    if include_plain:
        patterns = np.vstack([np.ones((1, n), dtype=np.complex128), random_rows])
    else:
        patterns = random_rows.reshape(n_random, n)
    return MaskEnsemble(patterns, dist, include_plain=include_plain, seed=seed)
