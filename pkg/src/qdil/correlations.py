"""Systems of measurement correlations.

A system is stored as a representation triplet: a space ``C^dimL``, one
operator-valued map per letter (the input letter ``"in"`` plus one per
outcome atom), and an isometry ``v: C^dimH → C^dimL``. Correlation
values are compressions ``W_T(M⃗) = v* Π_{t1}(M_1)···Π_{tk}(M_k) v``;
event letters evaluate through the sums of their atoms' maps.

Two constructions are provided: `from_instrument` builds the block
system of a CP instrument (through its minimal instrument
representation), and `from_kernel_table` rebuilds a system from a
bounded-depth table of correlation values by a Kolmogorov factorization
of the word Gram kernel plus shift operators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    FiniteVonNeumannAlgebra,
    algebra_from_json,
    algebra_to_json,
    conditional_expectation,
    contains,
    full_algebra,
)
from .instrument import (
    CPInstrument,
    OutcomeSpace,
    kraus_from_dual_choi,
)
from .operator_core import (
    DEFAULT_TOL,
    Tolerance,
    dagger,
    is_pvm,
    matrix_from_json,
    matrix_to_json,
    random_ginibre,
    spectral_norm,
)

__all__ = [
    "IN",
    "TimeWord",
    "PiMap",
    "CorrelationSystem",
    "eval_W",
    "verify_axioms",
    "AxiomReport",
    "AxiomEntry",
    "induced_instrument",
    "from_instrument",
    "from_kernel_table",
    "CorrelationTable",
    "table_from_system",
    "system_to_json",
    "system_from_json",
]

IN = "in"


@dataclass(frozen=True)
class TimeWord:
    """A nonempty word over ``{"in"} ∪ atoms ∪ events``.

    Letters are the string ``"in"``, a single atom label, or an event
    given as a tuple/frozenset of atom labels (evaluated additively over
    its atoms). ``reverse`` realizes the ``T ↦ T#`` involution on the
    letters; adjoining the operator slots is the caller's job.
    """

    letters: tuple

    def __post_init__(self) -> None:
        letters = tuple(
            letter if isinstance(letter, str) else tuple(letter)
            for letter in self.letters)
        if not letters:
            raise ValueError("a time word has at least one letter")
        object.__setattr__(self, "letters", letters)

    def __len__(self) -> int:
        return len(self.letters)

    def reverse(self) -> "TimeWord":
        return TimeWord(self.letters[::-1])

    def concat(self, other: "TimeWord") -> "TimeWord":
        return TimeWord(self.letters + other.letters)


def _reverse_slots(ms) -> list[np.ndarray]:
    return [dagger(m) for m in reversed(list(ms))]


@dataclass(frozen=True)
class PiMap:
    """A linear operator-valued map ``M ↦ Π(M)`` stored as a 4-tensor.

    ``tensor[a, b, i, j]`` is ``Π(e_ij)[a, b]``, so application is a
    single contraction and linearity is structural.
    """

    tensor: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        t = np.asarray(self.tensor, dtype=complex)
        if t.ndim != 4 or t.shape[0] != t.shape[1] or t.shape[2] != t.shape[3]:
            raise ValueError(f"bad PiMap tensor shape {t.shape}")
        object.__setattr__(self, "tensor", t)

    @property
    def dim_out(self) -> int:
        return self.tensor.shape[0]

    @property
    def dim_in(self) -> int:
        return self.tensor.shape[2]

    def apply(self, m) -> np.ndarray:
        return np.einsum("abij,ij->ab", self.tensor,
                         np.asarray(m, dtype=complex))

    @classmethod
    def from_function(cls, fn, dim_in: int, dim_out: int) -> "PiMap":
        t = np.zeros((dim_out, dim_out, dim_in, dim_in), dtype=complex)
        for i in range(dim_in):
            for j in range(dim_in):
                e = np.zeros((dim_in, dim_in), dtype=complex)
                e[i, j] = 1.0
                t[:, :, i, j] = fn(e)
        return cls(t)


@dataclass(frozen=True)
class CorrelationSystem:
    """Representation triplet ``(C^dimL, {Π_t}, v)`` of a correlation system."""

    dim_h: int
    algebra: FiniteVonNeumannAlgebra
    outcomes: OutcomeSpace
    dim_l: int
    pi_in: PiMap = field(repr=False)
    pi_atom: dict[str, PiMap] = field(repr=False)
    v: np.ndarray = field(repr=False)
    validate: bool = True
    certified_depth: int | None = None

    def __post_init__(self) -> None:
        vv = np.asarray(self.v, dtype=complex)
        if vv.shape != (self.dim_l, self.dim_h):
            raise ValueError(f"v has shape {vv.shape}, "
                             f"expected {(self.dim_l, self.dim_h)}")
        object.__setattr__(self, "v", vv)
        if set(self.pi_atom) != set(self.outcomes.labels):
            raise ValueError("pi_atom labels do not match the outcome space")
        if self.validate:
            self.require_valid()

    def letter_map(self, letter) -> PiMap:
        if letter == IN:
            return self.pi_in
        if isinstance(letter, str):
            if letter not in self.pi_atom:
                raise ValueError(f"unknown letter {letter!r}")
            return self.pi_atom[letter]
        atoms = self.outcomes.event(letter)
        return PiMap(sum(self.pi_atom[s].tensor for s in atoms))

    def atom_units(self) -> dict[str, np.ndarray]:
        eye = np.eye(self.dim_h)
        return {s: self.pi_atom[s].apply(eye) for s in self.outcomes.labels}

    def require_valid(self, tol: Tolerance = DEFAULT_TOL) -> None:
        """Exact structural invariants; cheap enough to run at construction.

        Checks each letter map is *-preserving and multiplicative on a
        basis of the algebra, that ``Π_in`` is unital with the atoms'
        units forming a PVM, and that ``v`` is an intertwining isometry.
        """
        eye_l = np.eye(self.dim_l)
        tol_scale = tol.abs * (1 + self.dim_l)
        basis = self.algebra.basis()
        for name, pm in [(IN, self.pi_in)] + sorted(self.pi_atom.items()):
            images = [pm.apply(b) for b in basis]
            for b, img in zip(basis, images):
                if spectral_norm(pm.apply(dagger(b)) - dagger(img)) > tol_scale:
                    raise ValueError(f"Π_{name} is not *-preserving")
            for i, a in enumerate(basis):
                for j, b in enumerate(basis):
                    prod = pm.apply(a @ b)
                    if spectral_norm(images[i] @ images[j] - prod) > tol_scale:
                        raise ValueError(f"Π_{name} is not multiplicative "
                                         "on the algebra")
        if spectral_norm(self.pi_in.apply(np.eye(self.dim_h)) - eye_l) > tol_scale:
            raise ValueError("Π_in is not unital")
        pvm = is_pvm(self.atom_units(), tol)
        if pvm.residual > tol_scale:
            raise ValueError(f"atom units are not a PVM "
                             f"(residual {pvm.residual:.3e})")
        if spectral_norm(dagger(self.v) @ self.v - np.eye(self.dim_h)) > tol_scale:
            raise ValueError("v is not an isometry")
        worst = 0.0
        for b in basis:
            worst = max(worst, spectral_norm(
                self.pi_in.apply(b) @ self.v - self.v @ b))
        if worst > tol_scale:
            raise ValueError(f"v does not intertwine Π_in "
                             f"(residual {worst:.3e})")


def _check_members(sys: CorrelationSystem, ms, tol: Tolerance) -> list[np.ndarray]:
    out = []
    for m in ms:
        mm = np.asarray(m, dtype=complex)
        rep = contains(sys.algebra, mm, tol)
        if not rep.ok:
            raise ValueError("operator slot outside the algebra "
                             f"(residual {rep.residual:.3e})")
        out.append(mm)
    return out


def eval_W(sys: CorrelationSystem, t: TimeWord, ms,
           tol: Tolerance = DEFAULT_TOL, check_membership: bool = True
           ) -> np.ndarray:
    """Evaluate ``W_T(M⃗) = v* Π_{t1}(M_1)···Π_{tk}(M_k) v``."""
    letters = t.letters if isinstance(t, TimeWord) else TimeWord(t).letters
    ms = list(ms)
    if len(ms) != len(letters):
        raise ValueError(f"{len(letters)} letters but {len(ms)} operators")
    if check_membership:
        ms = _check_members(sys, ms, tol)
    acc = sys.v
    for letter, m in zip(reversed(letters), reversed(ms)):
        acc = sys.letter_map(letter).apply(m) @ acc
    return dagger(sys.v) @ acc


@dataclass(frozen=True)
class AxiomEntry:
    passed: bool
    residual: float
    note: str = ""


@dataclass(frozen=True)
class AxiomReport:
    entries: dict[str, AxiomEntry]

    @property
    def all_pass(self) -> bool:
        return all(e.passed for e in self.entries.values())

    def to_json(self) -> dict:
        return {name: {"passed": e.passed, "residual": e.residual,
                       "note": e.note}
                for name, e in self.entries.items()}


def _random_member(rng: np.random.Generator, alg: FiniteVonNeumannAlgebra
                   ) -> np.ndarray:
    m = conditional_expectation(alg, random_ginibre(rng, alg.dim_h))
    norm = spectral_norm(m)
    return m / norm if norm > 1e-12 else np.eye(alg.dim_h)


def _random_word(rng: np.random.Generator, sys: CorrelationSystem,
                 depth: int) -> tuple[list, list[np.ndarray]]:
    length = int(rng.integers(1, depth + 1))
    alphabet = [IN] + list(sys.outcomes.labels)
    letters = [alphabet[int(rng.integers(len(alphabet)))] for _ in range(length)]
    ms = [_random_member(rng, sys.algebra) for _ in range(length)]
    return letters, ms


def _word_matrix(sys: CorrelationSystem, letters, ms) -> np.ndarray:
    """The bare product ``Π_{t1}(M_1)···Π_{tk}(M_k)`` without compression."""
    acc = np.eye(sys.dim_l, dtype=complex)
    for letter, m in zip(letters, ms):
        acc = acc @ sys.letter_map(letter).apply(m)
    return acc


def verify_axioms(sys: CorrelationSystem, depth: int, samples: int, seed: int,
                  tol: Tolerance = DEFAULT_TOL) -> AxiomReport:
    """Numerically verify the six correlation axioms plus adjoint symmetry.

    MC2 assembles a scalar Gram matrix over ``samples`` random
    (word, operators, vector) triples of length up to ``depth`` and
    certifies positive semidefiniteness; the remaining axioms are direct
    identity checks on random words. MC6 is structural for
    representation-stored systems (events evaluate as sums over their
    atoms by construction), so its entry reports the PVM property of the
    atom units, which is what a corrupted system breaks.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    rng = np.random.default_rng(seed)
    entries: dict[str, AxiomEntry] = {}
    n_checks = max(8, samples // 8)

    # MC1: separate linearity in each slot.
    worst = 0.0
    for _ in range(n_checks):
        letters, ms = _random_word(rng, sys, depth)
        slot = int(rng.integers(len(ms)))
        a = _random_member(rng, sys.algebra)
        b = _random_member(rng, sys.algebra)
        alpha = complex(rng.standard_normal(), rng.standard_normal())
        ms_ab = list(ms)
        ms_ab[slot] = alpha * a + b
        ms_a, ms_b = list(ms), list(ms)
        ms_a[slot], ms_b[slot] = a, b
        lhs = eval_W(sys, TimeWord(tuple(letters)), ms_ab, tol,
                     check_membership=False)
        rhs = (alpha * eval_W(sys, TimeWord(tuple(letters)), ms_a, tol,
                              check_membership=False)
               + eval_W(sys, TimeWord(tuple(letters)), ms_b, tol,
                        check_membership=False))
        worst = max(worst, spectral_norm(lhs - rhs))
    entries["MC1"] = AxiomEntry(worst <= tol.abs * 100, float(worst),
                                "linearity probes; ultraweak continuity is "
                                "vacuous in finite dimension")

    # MC2: positive definiteness of the sampled word Gram matrix.
    rows = np.zeros((samples, sys.dim_l), dtype=complex)
    cols = np.zeros((sys.dim_l, samples), dtype=complex)
    for i in range(samples):
        letters, ms = _random_word(rng, sys, depth)
        xi = random_ginibre(rng, sys.dim_h, 1).reshape(-1)
        xi = xi / np.linalg.norm(xi)
        base = sys.v @ xi
        rev_letters = list(reversed(letters))
        rev_ms = _reverse_slots(ms)
        rows[i] = dagger(base) @ _word_matrix(sys, rev_letters, rev_ms)
        cols[:, i] = _word_matrix(sys, letters, ms) @ base
    gram = rows @ cols
    herm_res = spectral_norm(gram - dagger(gram))
    vals = np.linalg.eigvalsh((gram + dagger(gram)) / 2)
    scale = float(np.abs(vals).max()) if vals.size else 0.0
    min_eig = float(vals.min()) if vals.size else 0.0
    mc2_res = max(0.0, -min_eig, herm_res)
    entries["MC2"] = AxiomEntry(
        min_eig >= -tol.psd_slack * (1 + scale) and herm_res <= tol.abs * 100,
        mc2_res, f"Gram of {samples} sampled words, min eigenvalue {min_eig:.3e}")

    # MC3: left module property over the input letter.
    worst = 0.0
    for _ in range(n_checks):
        letters, ms = _random_word(rng, sys, depth)
        m = _random_member(rng, sys.algebra)
        lhs = m @ eval_W(sys, TimeWord(tuple(letters)), ms, tol,
                         check_membership=False)
        rhs = eval_W(sys, TimeWord((IN,) + tuple(letters)), [m] + ms, tol,
                     check_membership=False)
        worst = max(worst, spectral_norm(lhs - rhs))
    entries["MC3"] = AxiomEntry(worst <= tol.abs * 100, float(worst), "")

    # MC4: merging adjacent equal letters with the operator product.
    worst = 0.0
    for _ in range(n_checks):
        letters, ms = _random_word(rng, sys, depth)
        pos = int(rng.integers(len(letters)))
        letter = letters[pos]
        extra = _random_member(rng, sys.algebra)
        doubled_letters = letters[:pos + 1] + [letter] + letters[pos + 1:]
        doubled_ms = ms[:pos + 1] + [extra] + ms[pos + 1:]
        merged_ms = list(ms)
        merged_ms[pos] = ms[pos] @ extra
        lhs = eval_W(sys, TimeWord(tuple(doubled_letters)), doubled_ms, tol,
                     check_membership=False)
        rhs = eval_W(sys, TimeWord(tuple(letters)), merged_ms, tol,
                     check_membership=False)
        worst = max(worst, spectral_norm(lhs - rhs))
    entries["MC4"] = AxiomEntry(worst <= tol.abs * 100, float(worst), "")

    # MC5: unit normalization and unit-slot absorption.
    eye = np.eye(sys.dim_h)
    res_in = spectral_norm(eval_W(sys, TimeWord((IN,)), [eye], tol,
                                  check_membership=False) - eye)
    res_s = spectral_norm(
        eval_W(sys, TimeWord((tuple(sys.outcomes.labels),)), [eye], tol,
               check_membership=False) - eye)
    worst = max(res_in, res_s)
    for _ in range(n_checks):
        letters, ms = _random_word(rng, sys, depth)
        lhs = eval_W(sys, TimeWord(tuple(letters) + (IN,)), ms + [eye], tol,
                     check_membership=False)
        rhs = eval_W(sys, TimeWord(tuple(letters)), ms, tol,
                     check_membership=False)
        worst = max(worst, spectral_norm(lhs - rhs))
    entries["MC5"] = AxiomEntry(worst <= tol.abs * 100, float(worst),
                                f"W_in(1) residual {res_in:.3e}, "
                                f"W_S(1) residual {res_s:.3e}")

    # MC6: additivity over atoms is structural here; what can break in a
    # stored system is the PVM property of the atom units, so that is
    # what this entry measures.
    pvm = is_pvm(sys.atom_units(), tol)
    entries["MC6"] = AxiomEntry(
        pvm.residual <= tol.abs * 100, float(pvm.residual),
        "structural: events evaluate as sums over their atoms; residual is "
        "the atom-unit PVM defect")

    # Adjoint symmetry of the correlation family.
    worst = 0.0
    for _ in range(n_checks):
        letters, ms = _random_word(rng, sys, depth)
        lhs = dagger(eval_W(sys, TimeWord(tuple(letters)), ms, tol,
                            check_membership=False))
        rhs = eval_W(sys, TimeWord(tuple(reversed(letters))),
                     _reverse_slots(ms), tol, check_membership=False)
        worst = max(worst, spectral_norm(lhs - rhs))
    entries["adjoint_symmetry"] = AxiomEntry(worst <= tol.abs * 100,
                                             float(worst), "")

    # Closure: compressions land in the algebra.
    worst = 0.0
    for _ in range(n_checks):
        letters, ms = _random_word(rng, sys, depth)
        w = eval_W(sys, TimeWord(tuple(letters)), ms, tol,
                   check_membership=False)
        worst = max(worst, contains(sys.algebra, w, tol).residual)
    entries["closure"] = AxiomEntry(worst <= tol.abs * 100, float(worst),
                                    "sampled W values projected onto the "
                                    "algebra")
    return AxiomReport(entries)


def induced_instrument(sys: CorrelationSystem, tol: Tolerance = DEFAULT_TOL
                       ) -> CPInstrument:
    """The instrument ``I(M, {s}) = W_{(s)}(M)`` with extracted Kraus data."""
    v = sys.v
    kraus = {}
    for s in sys.outcomes.labels:
        dual = np.einsum("xa,xyij,yb->abij", v.conj(), sys.pi_atom[s].tensor,
                         v, optimize=True)
        for b in sys.algebra.basis():
            img = np.einsum("abij,ij->ab", dual, b)
            rep = contains(sys.algebra, img, tol)
            if rep.residual > tol.abs * 100:
                raise ValueError(
                    f"closure violation at atom '{s}': W value outside the "
                    f"algebra (residual {rep.residual:.3e})")
        # Choi of the predual: J[(i,a),(j,b)] = D(e_ba)[j,i]
        choi = np.einsum("jiba->iajb", dual).reshape(
            sys.dim_h ** 2, sys.dim_h ** 2)
        kraus[s] = kraus_from_dual_choi(choi, sys.dim_h, tol)
    return CPInstrument(sys.dim_h, sys.algebra, sys.outcomes, kraus)


def from_instrument(inst: CPInstrument, anchor: str | None = None,
                    tol: Tolerance = DEFAULT_TOL) -> CorrelationSystem:
    """Block construction of a correlation system from a CP instrument.

    The minimal instrument representation ``(K, π₀, E₀, V₀)`` gives the
    space ``L = H ⊕ K`` with ``Π_in(M) = diag(M, π₀(M))``, the pointer
    projections ``E({s}) = diag(δ_{s,anchor}·1, E₀({s}))``, the block
    unitary ``U = [[0, -V₀*], [V₀, 1-V₀V₀*]]``, letter maps
    ``Π_s(M) = U* Π_in(M) E({s}) U``, and the inclusion of ``H`` as the
    first summand for ``v``. Its induced instrument is the input again.
    """
    from .dilation import instrument_representation

    inst.require_valid(tol)
    anchor = inst.outcomes.labels[0] if anchor is None else str(anchor)
    if anchor not in inst.outcomes.labels:
        raise ValueError(f"unknown anchor label {anchor!r}")
    rep = instrument_representation(inst, tol)
    dim_h, dim_k = inst.dim_h, rep.dim_k
    dim_l = dim_h + dim_k

    v0 = rep.v
    q = np.eye(dim_k) - v0 @ dagger(v0)
    u = np.zeros((dim_l, dim_l), dtype=complex)
    u[:dim_h, dim_h:] = -dagger(v0)
    u[dim_h:, :dim_h] = v0
    u[dim_h:, dim_h:] = q

    pi_in_t = np.zeros((dim_l, dim_l, dim_h, dim_h), dtype=complex)
    for i in range(dim_h):
        for j in range(dim_h):
            pi_in_t[i, j, i, j] = 1.0
    pi_in_t[dim_h:, dim_h:, :, :] = rep.pi0.tensor

    events = {}
    for s in inst.outcomes.labels:
        e = np.zeros((dim_l, dim_l), dtype=complex)
        if s == anchor:
            e[:dim_h, :dim_h] = np.eye(dim_h)
        e[dim_h:, dim_h:] = rep.e0[s]
        events[s] = e

    pi_atom = {}
    for s in inst.outcomes.labels:
        t = np.einsum("xa,xyij,yk,kb->abij", u.conj(), pi_in_t, events[s], u,
                      optimize=True)
        pi_atom[s] = PiMap(t)

    v = np.zeros((dim_l, dim_h), dtype=complex)
    v[:dim_h, :] = np.eye(dim_h)
    return CorrelationSystem(dim_h, inst.algebra, inst.outcomes, dim_l,
                             PiMap(pi_in_t), pi_atom, v)


class CorrelationTable:
    """Bounded-depth oracle for correlation values.

    Subclasses (or duck-typed equivalents) expose ``dim_h``,
    ``outcomes``, ``algebra``, ``max_len``, and
    ``w(letters, ms) -> matrix`` for words up to ``max_len``.
    """

    dim_h: int
    outcomes: OutcomeSpace
    algebra: FiniteVonNeumannAlgebra
    max_len: int

    def w(self, letters, ms) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


class _SystemTable(CorrelationTable):
    def __init__(self, sys: CorrelationSystem, max_len: int):
        self.dim_h = sys.dim_h
        self.outcomes = sys.outcomes
        self.algebra = sys.algebra
        self.max_len = max_len
        self._sys = sys

    def w(self, letters, ms) -> np.ndarray:
        if len(letters) > self.max_len:
            raise ValueError(f"table depth exceeded: {len(letters)} letters")
        return eval_W(self._sys, TimeWord(tuple(letters)), list(ms),
                      check_membership=False)


def table_from_system(sys: CorrelationSystem, max_len: int) -> CorrelationTable:
    return _SystemTable(sys, max_len)


def _normalize_index(letters: tuple, ops: tuple[int, ...]) -> tuple:
    while len(letters) > 1 and letters[-1] == IN and ops[-1] == 0:
        letters = letters[:-1]
        ops = ops[:-1]
    return letters, ops


def from_kernel_table(table: CorrelationTable, depth: int, generators,
                      tol: Tolerance = DEFAULT_TOL) -> CorrelationSystem:
    """Rebuild a correlation system from a bounded-depth value table.

    Index vectors are (word, operator-tuple) pairs over the generators
    plus the identity, with trailing identity-input pairs stripped (they
    index the same vector). The Gram kernel of these indices is
    factorized minimally; letter maps act by the index shift on the
    depth-(d-1) span and vanish on its orthocomplement; ``v`` is the
    factor of the base index.

    The output certifies reproduction of the table for words of length
    at most ``depth`` over the generators only (``certified_depth``); it
    carries ``validate=False`` because the zero-extension can break the
    unitality invariants outside the certified span.
    """
    from .kolmogorov import OperatorKernel, minimal_decomposition

    if depth < 1:
        raise ValueError("depth must be at least 1")
    needed = 2 * depth
    if getattr(table, "max_len", needed) < needed:
        raise ValueError(
            f"table too shallow: depth {depth} needs words of length "
            f"{needed}, table supplies {table.max_len}")
    dim_h = table.dim_h
    glist = [np.eye(dim_h, dtype=complex)]
    for g in generators:
        gm = np.asarray(g, dtype=complex)
        if gm.shape != (dim_h, dim_h):
            raise ValueError("generator dimensions do not match the table")
        glist.append(gm)
    alphabet = [IN] + list(table.outcomes.labels)

    indices: list[tuple] = []
    seen = set()

    def add(letters: tuple, ops: tuple[int, ...]) -> None:
        key = _normalize_index(letters, ops)
        if key not in seen:
            seen.add(key)
            indices.append(key)

    add((IN,), (0,))
    # Breadth-first enumeration keeps label order deterministic.
    words: list[tuple] = [((), ())]
    for _ in range(depth):
        new_words = []
        for letters, ops in words:
            if len(letters) >= depth:
                continue
            for t in alphabet:
                for gi in range(len(glist)):
                    nw = (letters + (t,), ops + (gi,))
                    new_words.append(nw)
        for nw in new_words:
            add(*nw)
        words = new_words

    labels = [str(i) for i in range(len(indices))]
    label_of = {idx: lab for idx, lab in zip(indices, labels)}

    def slots(ops: tuple[int, ...]) -> list[np.ndarray]:
        return [glist[gi] for gi in ops]

    def kernel_entry(a: tuple, b: tuple) -> np.ndarray:
        la, oa = a
        lb, ob = b
        letters = tuple(reversed(la)) + lb
        ms = _reverse_slots(slots(oa)) + slots(ob)
        return table.w(letters, ms)

    entries = {}
    for i, a in enumerate(indices):
        for j, b in enumerate(indices):
            if i <= j:
                entries[(labels[i], labels[j])] = kernel_entry(a, b)
    try:
        kernel = OperatorKernel(tuple(labels), dim_h, entries, tol)
        decomp = minimal_decomposition(kernel, tol)
    except ValueError as exc:
        raise ValueError(f"table fails positive definiteness (MC2): {exc}"
                         ) from exc
    dim_l = decomp.dim_l
    lam = {idx: decomp.factors[label_of[idx]] for idx in indices}

    domain = [idx for idx in indices if len(idx[0]) <= depth - 1]
    x = np.hstack([lam[idx] for idx in domain])
    x_pinv = np.linalg.pinv(x, rcond=max(tol.abs, 1e-12))

    shift: dict[tuple[str, int], np.ndarray] = {}
    for t in alphabet:
        for gi in range(len(glist)):
            targets = []
            for letters, ops in domain:
                tgt = _normalize_index((t,) + letters, (gi,) + ops)
                targets.append(lam[tgt])
            y = np.hstack(targets)
            shift[(t, gi)] = y @ x_pinv

    # Linear extension of each letter map from the generator span to all
    # of B(H), through the conditional expectation onto the algebra.
    span = np.stack([g.reshape(-1) for g in glist], axis=1)
    span_pinv = np.linalg.pinv(span, rcond=max(tol.abs, 1e-12))

    def letter_tensor(t: str) -> PiMap:
        tens = np.zeros((dim_l, dim_l, dim_h, dim_h), dtype=complex)
        for i in range(dim_h):
            for j in range(dim_h):
                e = np.zeros((dim_h, dim_h), dtype=complex)
                e[i, j] = 1.0
                coeff = span_pinv @ conditional_expectation(
                    table.algebra, e).reshape(-1)
                tens[:, :, i, j] = sum(
                    c * shift[(t, gi)] for gi, c in enumerate(coeff))
        return PiMap(tens)

    pi_in = letter_tensor(IN)
    pi_atom = {s: letter_tensor(s) for s in table.outcomes.labels}
    v = lam[((IN,), (0,))]
    return CorrelationSystem(dim_h, table.algebra, table.outcomes, dim_l,
                             pi_in, pi_atom, v, validate=False,
                             certified_depth=depth)


def system_to_json(sys: CorrelationSystem) -> dict:
    def map_json(pm: PiMap) -> list:
        return [[matrix_to_json(pm.tensor[:, :, i, j])
                 for j in range(sys.dim_h)] for i in range(sys.dim_h)]

    return {
        "dimH": sys.dim_h,
        "dimL": sys.dim_l,
        "outcomes": list(sys.outcomes.labels),
        "pi_in": map_json(sys.pi_in),
        "pi_atoms": {s: map_json(sys.pi_atom[s])
                     for s in sys.outcomes.labels},
        "v": matrix_to_json(sys.v),
        "algebra": algebra_to_json(sys.algebra),
        "certified_depth": sys.certified_depth,
    }


def system_from_json(data, validate: bool = True) -> CorrelationSystem:
    if not isinstance(data, dict):
        raise ValueError("correlation-system JSON must be an object")
    for key in ("dimH", "dimL", "outcomes", "pi_in", "pi_atoms", "v"):
        if key not in data:
            raise ValueError(f"correlation-system JSON is missing '{key}'")
    dim_h = int(data["dimH"])
    dim_l = int(data["dimL"])

    def map_from(js) -> PiMap:
        t = np.zeros((dim_l, dim_l, dim_h, dim_h), dtype=complex)
        for i in range(dim_h):
            for j in range(dim_h):
                t[:, :, i, j] = matrix_from_json(js[i][j])
        return PiMap(t)

    outcomes = OutcomeSpace(tuple(data["outcomes"]))
    algebra = (algebra_from_json(data["algebra"]) if data.get("algebra")
               else full_algebra(dim_h))
    return CorrelationSystem(
        dim_h, algebra, outcomes, dim_l,
        map_from(data["pi_in"]),
        {s: map_from(js) for s, js in data["pi_atoms"].items()},
        matrix_from_json(data["v"]),
        validate=validate,
        certified_depth=data.get("certified_depth"),
    )
