"""Unitary dilations of CP instruments and measuring processes.

A measuring process is a quadruple (meter space, meter state, pointer
PVM, coupling unitary) whose compressed Heisenberg maps form a CP
instrument. This module builds them three ways: from a correlation
system (multiplicity splitting plus a block unitary), from Kraus
operators inside the algebra (an inner process on a small meter), and
through the conditional expectation when the Kraus operators live
outside the algebra (a faithful process). It also provides the reverse
direction (induced instruments, correlation values) and n-equivalence
checking.
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
    tensor_with_full,
)
from .correlations import (
    IN,
    CorrelationSystem,
    PiMap,
    TimeWord,
    eval_W,
)
from .instrument import (
    CPInstrument,
    OutcomeSpace,
    apply_dual,
    choi_of_dual,
    kraus_from_dual_choi,
)
from .operator_core import (
    DEFAULT_TOL,
    Tolerance,
    basis_vector,
    compress_by_state,
    dagger,
    is_pvm,
    is_unitary,
    matrix_from_json,
    matrix_to_json,
    matrix_units,
    proj,
    random_unitary,
    require_state,
    spectral_norm,
    sqrt_psd,
)

__all__ = [
    "MeasuringProcess",
    "InstrumentRepresentation",
    "MinimalStinespring",
    "minimal_stinespring",
    "instrument_representation",
    "multiplicity_split",
    "commutant_pvm_lift",
    "intertwiner_vector",
    "mp_from_correlations",
    "induced_instrument_mp",
    "correlations_of_mp",
    "system_of_mp",
    "EquivalenceReport",
    "n_equivalent",
    "halmos_unitary",
    "inner_mp_from_kraus",
    "inner_membership",
    "faithful_mp",
    "faithfulness_table",
    "mp_to_json",
    "mp_from_json",
]


# ---------------------------------------------------------------------------
# Measuring processes


@dataclass(frozen=True)
class MeasuringProcess:
    """Meter quadruple (sigma, e, u) over ``H ⊗ K`` with outcome atoms.

    ``u`` acts on ``H ⊗ K`` in kron order (system leg first), ``e`` maps
    each atom label to a projection on ``K``, and ``sigma`` is the meter
    state. Construction checks the unitary/PVM/state invariants; the
    algebra-closure invariant is checked where the induced instrument is
    actually built (`induced_instrument_mp`), since that is the same
    computation.
    """

    dim_h: int
    algebra: FiniteVonNeumannAlgebra
    outcomes: OutcomeSpace
    dim_k: int
    sigma: np.ndarray = field(repr=False)
    e: dict[str, np.ndarray] = field(repr=False)
    u: np.ndarray = field(repr=False)
    validate: bool = True

    def __post_init__(self) -> None:
        sigma = np.asarray(self.sigma, dtype=complex)
        u = np.asarray(self.u, dtype=complex)
        e = {s: np.asarray(p, dtype=complex) for s, p in self.e.items()}
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "e", e)
        if set(e) != set(self.outcomes.labels):
            raise ValueError("pointer PVM labels do not match the outcomes")
        n = self.dim_h * self.dim_k
        if u.shape != (n, n):
            raise ValueError(f"u has shape {u.shape}, expected {(n, n)}")
        if sigma.shape != (self.dim_k, self.dim_k):
            raise ValueError("sigma is not an operator on the meter space")
        if self.validate:
            self.require_valid()

    def require_valid(self, tol: Tolerance = DEFAULT_TOL) -> None:
        rep = is_unitary(self.u, tol)
        if rep.residual > tol.abs * 100:
            raise ValueError(f"u is not unitary (residual {rep.residual:.3e})")
        rep = is_pvm(self.e, tol)
        if rep.residual > tol.abs * 100:
            raise ValueError(f"e is not a PVM (residual {rep.residual:.3e})")
        require_state(self.sigma, tol, what="sigma")

    def pointer(self, event) -> np.ndarray:
        atoms = self.outcomes.event(event)
        p = np.zeros((self.dim_k, self.dim_k), dtype=complex)
        for s in atoms:
            p = p + self.e[s]
        return p

    def heisenberg(self, m, event) -> np.ndarray:
        """The compressed map ``(id ⊗ sigma)[u*(m ⊗ E(event))u]``."""
        m = np.asarray(m, dtype=complex)
        x = dagger(self.u) @ np.kron(m, self.pointer(event)) @ self.u
        return compress_by_state(x, self.sigma, self.dim_h, self.dim_k)

    def purified(self, tol: Tolerance = DEFAULT_TOL) -> "MeasuringProcess":
        """An equivalent process whose meter state is a vector state.

        The meter is enlarged to ``K ⊗ C^r`` (r = rank of sigma), the
        pointer projections and the coupling extend by the identity, and
        the state becomes the standard purification. Returns ``self``
        when sigma is already pure.
        """
        vals, vecs = np.linalg.eigh((self.sigma + dagger(self.sigma)) / 2)
        keep = vals > max(tol.abs, 1e-12)
        r = int(np.count_nonzero(keep))
        if r <= 1:
            return self
        p = vals[keep]
        phi = vecs[:, keep] * np.sqrt(p)[None, :]
        eta = phi.reshape(-1)  # index (k, i) row-major = K ⊗ C^r
        eye_r = np.eye(r)
        return MeasuringProcess(
            self.dim_h, self.algebra, self.outcomes, self.dim_k * r,
            proj(eta), {s: np.kron(self.e[s], eye_r) for s in self.e},
            np.kron(self.u, eye_r), validate=False)

    def state_vector(self, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
        """The meter state as a vector; requires sigma pure within tol."""
        vals, vecs = np.linalg.eigh((self.sigma + dagger(self.sigma)) / 2)
        if np.count_nonzero(vals > max(tol.abs, 1e-12)) != 1:
            raise ValueError("sigma is not a vector state")
        return vecs[:, -1] * np.sqrt(vals[-1])


def mp_to_json(mp: MeasuringProcess) -> dict:
    return {
        "dimH": mp.dim_h,
        "dimK": mp.dim_k,
        "sigma": matrix_to_json(mp.sigma),
        "pvm": {s: matrix_to_json(mp.e[s]) for s in mp.outcomes.labels},
        "u": matrix_to_json(mp.u),
        "outcomes": list(mp.outcomes.labels),
        "algebra": algebra_to_json(mp.algebra),
    }


def mp_from_json(data, validate: bool = True) -> MeasuringProcess:
    if not isinstance(data, dict):
        raise ValueError("measuring-process JSON must be an object")
    for key in ("dimH", "dimK", "sigma", "pvm", "u", "outcomes"):
        if key not in data:
            raise ValueError(f"measuring-process JSON is missing '{key}'")
    dim_h = int(data["dimH"])
    algebra = (algebra_from_json(data["algebra"]) if data.get("algebra")
               else full_algebra(dim_h))
    return MeasuringProcess(
        dim_h, algebra, OutcomeSpace(tuple(data["outcomes"])),
        int(data["dimK"]), matrix_from_json(data["sigma"]),
        {s: matrix_from_json(p) for s, p in data["pvm"].items()},
        matrix_from_json(data["u"]), validate=validate)


# ---------------------------------------------------------------------------
# Stinespring data


@dataclass(frozen=True)
class MinimalStinespring:
    """Minimal dilation ``Ψ(M) = v* (M ⊗ 1_rank) v`` of one CP map."""

    dim_h: int
    rank: int
    dim_k: int
    kraus: list[np.ndarray] = field(repr=False)
    v: np.ndarray = field(repr=False)

    def pi(self, m) -> np.ndarray:
        return np.kron(np.asarray(m, dtype=complex), np.eye(self.rank))


def minimal_stinespring(cp_map, dim_h: int, tol: Tolerance = DEFAULT_TOL
                        ) -> MinimalStinespring:
    """Minimal Stinespring data of a CP map in Heisenberg form.

    ``cp_map`` is either a list of Kraus operators (the map being
    ``M ↦ Σ K*MK``) or the map's dual Choi matrix. The rank of the Choi
    matrix fixes the multiplicity, ``dimK' = dimH · rank``, and
    ``v = Σ_k kron(K_k, e_k)`` stacks the minimal Kraus family.
    """
    arr = np.asarray(cp_map, dtype=complex) if not isinstance(cp_map, np.ndarray) else cp_map
    if arr.ndim == 2 and arr.shape == (dim_h ** 2, dim_h ** 2):
        choi = arr
    else:
        kraus_in = [np.asarray(k, dtype=complex) for k in cp_map]
        choi = np.zeros((dim_h ** 2, dim_h ** 2), dtype=complex)
        for k in kraus_in:
            if k.shape != (dim_h, dim_h):
                raise ValueError("Kraus operator has wrong shape")
            w = k.T.reshape(-1)
            choi += np.outer(w, w.conj())
    kraus = kraus_from_dual_choi(choi, dim_h, tol)
    rank = len(kraus)
    v = np.zeros((dim_h * rank, dim_h), dtype=complex)
    for idx, k in enumerate(kraus):
        v += np.kron(k, basis_vector(rank, idx).reshape(-1, 1))
    return MinimalStinespring(dim_h, rank, dim_h * rank, kraus, v)


@dataclass(frozen=True)
class InstrumentRepresentation:
    """Minimal triple ``(K, π₀, E₀, V)`` with ``I(M,Δ) = V*π₀(M)E₀(Δ)V``."""

    dim_h: int
    dim_k: int
    pi0: PiMap = field(repr=False)
    e0: dict[str, np.ndarray] = field(repr=False)
    v: np.ndarray = field(repr=False)
    ranks: dict[str, int] = field(repr=False, default_factory=dict)

    def require_valid(self, inst: CPInstrument, tol: Tolerance = DEFAULT_TOL
                      ) -> None:
        scale = tol.abs * (1 + self.dim_k)
        units = list(matrix_units(self.dim_h))
        for _, _, x in units:
            px = self.pi0.apply(x)
            for s, e in self.e0.items():
                if spectral_norm(px @ e - e @ px) > scale:
                    raise ValueError(f"π₀ does not commute with E₀({s!r})")
        cols = []
        worst = 0.0
        for i, j, x in units:
            px = self.pi0.apply(x)
            for s in inst.outcomes.labels:
                block = px @ self.e0[s] @ self.v
                cols.append(block)
                got = dagger(self.v) @ block
                worst = max(worst, spectral_norm(
                    got - apply_dual(inst, x, (s,))))
        if worst > scale:
            raise ValueError(f"representation does not reconstruct the "
                             f"instrument (residual {worst:.3e})")
        stacked = np.hstack(cols) if cols else np.zeros((self.dim_k, 0))
        sv = np.linalg.svd(stacked, compute_uv=False)
        rank = int(np.count_nonzero(sv > tol.abs * (1 + (sv[0] if sv.size else 0))))
        if rank != self.dim_k:
            raise ValueError(f"representation is not minimal: span rank "
                             f"{rank} < dimK {self.dim_k}")


def instrument_representation(inst: CPInstrument,
                              tol: Tolerance = DEFAULT_TOL
                              ) -> InstrumentRepresentation:
    """Direct sum of per-atom minimal Stinespring dilations.

    Zero-probability atoms contribute empty blocks. The reconstruction
    and minimality invariants are verified before returning.
    """
    inst.require_valid(tol)
    dim_h = inst.dim_h
    parts = {s: minimal_stinespring(
        choi_of_dual(lambda m, s=s: apply_dual(inst, m, (s,)), dim_h),
        dim_h, tol) for s in inst.outcomes.labels}
    ranks = {s: parts[s].rank for s in inst.outcomes.labels}
    dim_k = dim_h * sum(ranks.values())

    tensor = np.zeros((dim_k, dim_k, dim_h, dim_h), dtype=complex)
    e0 = {}
    v = np.zeros((dim_k, dim_h), dtype=complex)
    offset = 0
    for s in inst.outcomes.labels:
        part = parts[s]
        size = part.dim_k
        sl = slice(offset, offset + size)
        if size:
            for i, j, x in matrix_units(dim_h):
                tensor[sl, sl, i, j] = np.kron(x, np.eye(part.rank))
            v[sl, :] = part.v
        p = np.zeros((dim_k, dim_k), dtype=complex)
        p[sl, sl] = np.eye(size)
        e0[s] = p
        offset += size
    rep = InstrumentRepresentation(dim_h, dim_k, PiMap(tensor), e0, v, ranks)
    rep.require_valid(inst, tol)
    return rep


# ---------------------------------------------------------------------------
# Splitting a representation of B(H) and reading off commutant data


def multiplicity_split(pi: PiMap, tol: Tolerance = DEFAULT_TOL
                       ) -> tuple[int, np.ndarray]:
    """Split a unital representation of B(H) as ``π(X) = U₁*(X ⊗ 1)U₁``.

    Returns ``(dimK, u1)`` with ``u1`` a unitary from the representation
    space onto ``H ⊗ C^dimK``. The unitary is assembled by propagating
    an orthonormal basis of the range of ``π(|0><0|)`` with the partial
    isometries ``π(|i><0|)``.
    """
    dim_l, dim_h = pi.dim_out, pi.dim_in
    if dim_l % dim_h != 0:
        raise ValueError(f"space of dimension {dim_l} admits no "
                         f"multiplicity split over dimension {dim_h}")
    dim_k = dim_l // dim_h
    e00 = np.zeros((dim_h, dim_h), dtype=complex)
    e00[0, 0] = 1.0
    p0 = pi.apply(e00)
    vals, vecs = np.linalg.eigh((p0 + dagger(p0)) / 2)
    sel = vals > 0.5
    if int(np.count_nonzero(sel)) != dim_k:
        raise ValueError("π is not a representation: π(|0><0|) has rank "
                         f"{int(np.count_nonzero(sel))}, expected {dim_k}")
    f = vecs[:, sel]
    w = np.zeros((dim_l, dim_l), dtype=complex)
    for i in range(dim_h):
        ei0 = np.zeros((dim_h, dim_h), dtype=complex)
        ei0[i, 0] = 1.0
        w[:, i * dim_k:(i + 1) * dim_k] = pi.apply(ei0) @ f
    scale = tol.abs * (1 + dim_l) * 100
    if spectral_norm(dagger(w) @ w - np.eye(dim_l)) > scale:
        raise ValueError("π is not a representation: propagated basis is "
                         "not orthonormal")
    u1 = dagger(w)
    worst = 0.0
    for _, _, x in matrix_units(dim_h):
        worst = max(worst, spectral_norm(
            pi.apply(x) - w @ np.kron(x, np.eye(dim_k)) @ u1))
    if worst > scale:
        raise ValueError(f"π is not a representation of the full matrix "
                         f"algebra (residual {worst:.3e})")
    return dim_k, u1


def commutant_pvm_lift(pi_vals: dict[str, np.ndarray], u2: np.ndarray,
                       dim_h: int, tol: Tolerance = DEFAULT_TOL
                       ) -> dict[str, np.ndarray]:
    """Read a commutant PVM through a multiplicity split.

    Each projection must commute with ``u2*(X ⊗ 1)u2``; then
    ``u2 P u2*`` has the form ``1 ⊗ E₀`` and ``E₀`` is recovered by
    partial trace over the first leg. The recovered family is verified
    to be a PVM and to reproduce the inputs.
    """
    dim_l = u2.shape[0]
    if dim_l % dim_h != 0:
        raise ValueError("split dimensions do not divide")
    dim_k = dim_l // dim_h
    scale = tol.abs * (1 + dim_l) * 100
    out = {}
    for s, p in pi_vals.items():
        p = np.asarray(p, dtype=complex)
        for _, _, x in matrix_units(dim_h):
            tx = dagger(u2) @ np.kron(x, np.eye(dim_k)) @ u2
            if spectral_norm(p @ tx - tx @ p) > scale:
                raise ValueError(f"projection {s!r} does not commute with "
                                 "the transported algebra")
        t = (u2 @ p @ dagger(u2)).reshape(dim_h, dim_k, dim_h, dim_k)
        e0 = np.einsum("akal->kl", t) / dim_h
        if spectral_norm(t.reshape(dim_l, dim_l)
                         - np.kron(np.eye(dim_h), e0)) > scale:
            raise ValueError(f"transported projection {s!r} is not of the "
                             "form 1 ⊗ (·)")
        out[s] = e0
    rep = is_pvm(out, tol)
    if rep.residual > scale:
        raise ValueError(f"lifted family is not a PVM "
                         f"(residual {rep.residual:.3e})")
    return out


def intertwiner_vector(v: np.ndarray, tol: Tolerance = DEFAULT_TOL
                       ) -> np.ndarray:
    """Extract η from an intertwining isometry ``V ξ = ξ ⊗ η``.

    The vector is read off the image of the first basis vector and
    re-phased so its first significant component is real positive; the
    product form is verified against the raw (un-phased) extraction, so
    the check is phase-free.
    """
    v = np.asarray(v, dtype=complex)
    dim_h = v.shape[1]
    if v.shape[0] % dim_h != 0:
        raise ValueError("isometry shape does not factor over the system")
    dim_l1 = v.shape[0] // dim_h
    scale = tol.abs * (1 + v.shape[0]) * 100
    for _, _, x in matrix_units(dim_h):
        res = spectral_norm(np.kron(x, np.eye(dim_l1)) @ v - v @ x)
        if res > scale:
            raise ValueError(f"V does not intertwine the system action "
                             f"(residual {res:.3e})")
    eta_raw = v[:dim_l1, 0].copy()
    if spectral_norm(v - np.kron(np.eye(dim_h), eta_raw.reshape(-1, 1))) > scale:
        raise ValueError("V is not of the form ξ ↦ ξ ⊗ η")
    norm = np.linalg.norm(eta_raw)
    if abs(norm - 1.0) > scale:
        raise ValueError("extracted vector is not normalized")
    eta = eta_raw / norm
    mags = np.abs(eta)
    lead = int(np.argmax(mags >= mags.max() * 1e-6))
    phase = eta[lead] / abs(eta[lead])
    return eta * phase.conjugate()


# ---------------------------------------------------------------------------
# Correlation system -> measuring process


def _swap23(dim_h: int, d2: int, d1: int) -> np.ndarray:
    """Permutation H ⊗ C^d2 ⊗ C^d1 → H ⊗ C^d1 ⊗ C^d2."""
    n = dim_h * d1 * d2
    s = np.zeros((n, n), dtype=complex)
    for i in range(dim_h):
        for q in range(d2):
            for p in range(d1):
                s[(i * d1 + p) * d2 + q, (i * d2 + q) * d1 + p] = 1.0
    return s


def mp_from_correlations(sys: CorrelationSystem,
                         tol: Tolerance = DEFAULT_TOL,
                         completion_seed: int | None = None
                         ) -> MeasuringProcess:
    """Build a measuring process reproducing a full-algebra system.

    Both the input letter map and the summed atom map are unital
    representations of B(H) on the same space, so their multiplicity
    splits share one multiplicity dimension. The meter is the tensor
    square of that multiplicity space; the coupling unitary acts as the
    transported change of splitting on the support of the meter state
    and as a fixed basis permutation between the (equal-dimensional)
    orthocomplements. ``completion_seed`` replaces that permutation with
    a seeded random unitary; any choice yields a 2-equivalent process.
    """
    if not sys.algebra.is_full:
        raise ValueError("construction requires the full matrix algebra")
    dim_h = sys.dim_h
    d1, u1 = multiplicity_split(sys.pi_in, tol)
    pi_s = PiMap(sum(sys.pi_atom[s].tensor for s in sys.outcomes.labels))
    d2, u2 = multiplicity_split(pi_s, tol)
    if d1 != d2:
        raise ValueError("splitting dimensions disagree; the letter maps "
                         "do not act on a common space")
    e0 = commutant_pvm_lift(sys.atom_units(), u2, dim_h, tol)
    eta1 = intertwiner_vector(u1 @ sys.v, tol)
    eta2 = basis_vector(d2, 0)

    # Populated block: swap ∘ (U₂U₁* ⊗ |η₁><η₂|) maps H⊗L₁⊗L₂ into the
    # slice of the final space whose L₁ leg is η₁.
    swap = _swap23(dim_h, d2, d1)
    uq = swap @ np.kron(u2 @ dagger(u1), np.outer(eta1, eta2.conj()))

    # Orthocomplement bases: initial = η₂-orthogonal meter directions,
    # final = η₁-orthogonal directions of the L₁ leg.
    q_comp, _ = np.linalg.qr(np.column_stack([eta1, np.eye(d1)]))
    eta1_perp = q_comp[:, 1:]
    eye_h = np.eye(dim_h)
    b_init = np.kron(np.kron(eye_h, np.eye(d1)), np.eye(d2)[:, 1:])
    b_final = np.kron(np.kron(eye_h, eta1_perp), np.eye(d2))
    if b_init.shape[1] != b_final.shape[1]:
        raise ValueError("orthocomplement dimensions disagree")
    if completion_seed is None:
        rot = np.eye(b_init.shape[1])
    else:
        rng = np.random.default_rng(completion_seed)
        rot = random_unitary(rng, b_init.shape[1])
    u = uq + b_final @ rot @ dagger(b_init)

    rep = is_unitary(u, tol)
    if rep.residual > tol.abs * (1 + u.shape[0]) * 100:
        raise ValueError(f"assembled coupling is not unitary "
                         f"(residual {rep.residual:.3e})")
    dim_k = d1 * d2
    sigma = proj(np.kron(eta1, eta2))
    e = {s: np.kron(np.eye(d1), e0[s]) for s in sys.outcomes.labels}
    mp = MeasuringProcess(dim_h, sys.algebra, sys.outcomes, dim_k, sigma, e, u)

    # Spot check: the process reproduces the system's correlation values.
    rng = np.random.default_rng(7)
    worst = 0.0
    labels = list(sys.outcomes.labels)
    for _ in range(6):
        length = int(rng.integers(1, 3))
        letters = tuple(
            ([IN] + labels)[int(rng.integers(1 + len(labels)))]
            for _ in range(length))
        ms = [np.eye(dim_h) + 0.3 * np.diag(rng.standard_normal(dim_h))
              for _ in range(length)]
        lhs = correlations_of_mp(mp, TimeWord(letters), ms, tol)
        rhs = eval_W(sys, TimeWord(letters), ms, tol, check_membership=False)
        worst = max(worst, spectral_norm(lhs - rhs))
    if worst > tol.abs * (1 + dim_h * dim_k) * 100:
        raise ValueError(f"constructed process fails to reproduce the "
                         f"correlation values (residual {worst:.3e})")
    return mp


# ---------------------------------------------------------------------------
# Measuring process -> instrument / correlation data


def _pure_interaction(mp: MeasuringProcess, tol: Tolerance
                      ) -> tuple[MeasuringProcess, np.ndarray]:
    pure = mp.purified(tol)
    eta = pure.state_vector(tol)
    b = pure.u @ np.kron(np.eye(pure.dim_h), eta.reshape(-1, 1))
    return pure, b


def induced_instrument_mp(mp: MeasuringProcess, tol: Tolerance = DEFAULT_TOL
                          ) -> CPInstrument:
    """Extract the CP instrument ``M, Δ ↦ (id ⊗ σ)[U*(M ⊗ E(Δ))U]``.

    The meter state is purified first, so each atom's Heisenberg map is
    a single compression; Kraus families come from the Choi
    factorization of each map. Raises when a compressed value leaves the
    algebra (closure violation).
    """
    pure, b = _pure_interaction(mp, tol)
    c = b.reshape(pure.dim_h, pure.dim_k, pure.dim_h)
    kraus = {}
    for s in mp.outcomes.labels:
        dual = np.einsum("ika,kl,jlb->abij", c.conj(), pure.e[s], c,
                         optimize=True)
        for m in mp.algebra.basis():
            img = np.einsum("abij,ij->ab", dual, m)
            rep = contains(mp.algebra, img, tol)
            if rep.residual > tol.abs * (1 + mp.dim_h) * 100:
                raise ValueError(
                    f"closure violation at atom {s!r}: compressed value "
                    f"outside the algebra (residual {rep.residual:.3e})")
        choi = np.einsum("jiba->iajb", dual).reshape(
            mp.dim_h ** 2, mp.dim_h ** 2)
        kraus[s] = kraus_from_dual_choi(choi, mp.dim_h, tol)
    return CPInstrument(mp.dim_h, mp.algebra, mp.outcomes, kraus)


def correlations_of_mp(mp: MeasuringProcess, t: TimeWord, ms,
                       tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Correlation value of a word: multiply letter operators, compress.

    The input letter acts as ``M ⊗ 1``; an outcome letter (atom or
    event) acts as ``U*(M ⊗ E)U``. The product is compressed by the
    meter state at the end.
    """
    letters = t.letters if isinstance(t, TimeWord) else TimeWord(t).letters
    ms = [np.asarray(m, dtype=complex) for m in ms]
    if len(ms) != len(letters):
        raise ValueError(f"{len(letters)} letters but {len(ms)} operators")
    n = mp.dim_h * mp.dim_k
    eye_k = np.eye(mp.dim_k)
    acc = np.eye(n, dtype=complex)
    for letter, m in zip(letters, ms):
        if letter == IN:
            op = np.kron(m, eye_k)
        else:
            op = dagger(mp.u) @ np.kron(m, mp.pointer(letter)) @ mp.u
        acc = acc @ op
    return compress_by_state(acc, mp.sigma, mp.dim_h, mp.dim_k)


def system_of_mp(mp: MeasuringProcess, tol: Tolerance = DEFAULT_TOL
                 ) -> CorrelationSystem:
    """The correlation system carried by a measuring process.

    Uses the purified meter, so the representation space is
    ``H ⊗ K_pure`` and the cyclic isometry is ``ξ ↦ ξ ⊗ η``.
    """
    pure = mp.purified(tol)
    eta = pure.state_vector(tol)
    dim_l = pure.dim_h * pure.dim_k
    eye_k = np.eye(pure.dim_k)
    udag = dagger(pure.u)

    pi_in = PiMap.from_function(lambda x: np.kron(x, eye_k),
                                pure.dim_h, dim_l)
    pi_atom = {}
    for s in mp.outcomes.labels:
        pi_atom[s] = PiMap.from_function(
            lambda x, s=s: udag @ np.kron(x, pure.e[s]) @ pure.u,
            pure.dim_h, dim_l)
    v = np.kron(np.eye(pure.dim_h), eta.reshape(-1, 1))
    return CorrelationSystem(mp.dim_h, mp.algebra, mp.outcomes, dim_l,
                             pi_in, pi_atom, v)


# ---------------------------------------------------------------------------
# n-equivalence


@dataclass(frozen=True)
class EquivalenceReport:
    equivalent: bool
    worst_residual: float
    order: int
    note: str = ""

    def __bool__(self) -> bool:
        return self.equivalent


def _word_values(mp: MeasuringProcess, choices, n: int,
                 tol: Tolerance) -> list[np.ndarray]:
    """Values of every word of length ≤ n in DFS order, sharing suffixes.

    ``choices`` is the ordered list of (letter, operator) pairs used at
    each position. States accumulate right-to-left so extending a word
    prepends a letter. Values compress against the cyclic isometry
    ``ξ ↦ ξ ⊗ η``; every letter map carries its own coupling factors.
    """
    pure = mp.purified(tol)
    eta = pure.state_vector(tol)
    c = np.kron(np.eye(pure.dim_h), eta.reshape(-1, 1))
    dim_h, dim_k = pure.dim_h, pure.dim_k
    udag = dagger(pure.u)
    e = pure.e

    def step(letter, m, state):
        if letter == IN:
            s3 = state.reshape(dim_h, dim_k, -1)
            return np.einsum("ij,jkb->ikb", m, s3).reshape(state.shape)
        t1 = pure.u @ state
        t3 = t1.reshape(dim_h, dim_k, -1)
        t2 = np.einsum("ij,kl,jlb->ikb", m, e[letter], t3, optimize=True)
        return udag @ t2.reshape(state.shape)

    out: list[np.ndarray] = []
    cdag = dagger(c)

    def dfs(state, depth):
        for letter, m in choices:
            new = step(letter, m, state)
            out.append(cdag @ new)
            if depth + 1 < n:
                dfs(new, depth + 1)

    dfs(c, 0)
    return out


def n_equivalent(mp1: MeasuringProcess, mp2: MeasuringProcess, n: int,
                 samples: int | None = None, seed: int | None = None,
                 tol: Tolerance = DEFAULT_TOL) -> EquivalenceReport:
    """Compare correlation values of two processes up to word length n.

    By multilinearity it suffices to range the operator slots over a
    basis of the algebra and the letters over the input plus the atoms,
    which this does exhaustively (every word of length ≤ n). Passing
    ``samples`` switches to that many seeded random words instead. The
    order-2 check is statistical equivalence.
    """
    if n < 1:
        raise ValueError("order must be at least 1")
    if mp1.dim_h != mp2.dim_h:
        raise ValueError("system dimensions differ")
    if mp1.outcomes.labels != mp2.outcomes.labels:
        raise ValueError("outcome spaces differ")
    basis = mp1.algebra.basis()
    letters = [IN] + list(mp1.outcomes.labels)
    choices = [(t, m) for t in letters for m in basis]
    note = "statistical equivalence" if n == 2 else ""
    if samples is None:
        vals1 = _word_values(mp1, choices, n, tol)
        vals2 = _word_values(mp2, choices, n, tol)
        worst = max((float(np.abs(a - b).max())
                     for a, b in zip(vals1, vals2)), default=0.0)
    else:
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(samples):
            length = int(rng.integers(1, n + 1))
            picks = [choices[int(rng.integers(len(choices)))]
                     for _ in range(length)]
            word = TimeWord(tuple(p[0] for p in picks))
            ms = [p[1] for p in picks]
            w1 = correlations_of_mp(mp1, word, ms, tol)
            w2 = correlations_of_mp(mp2, word, ms, tol)
            worst = max(worst, float(np.abs(w1 - w2).max()))
    return EquivalenceReport(worst <= tol.abs * 100, worst, n, note)


# ---------------------------------------------------------------------------
# Inner and faithful processes


def halmos_unitary(v: np.ndarray, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Block unitary of a partial isometry on an extra qubit leg.

    ``U = V⊗|0><0| + (1-VV*)⊗|0><1| + (1-V*V)⊗|1><0| - V*⊗|1><1|``;
    unitarity is an algebraic identity when ``V*V`` is a projection.
    """
    v = np.asarray(v, dtype=complex)
    n = v.shape[0]
    if v.shape != (n, n):
        raise ValueError("partial isometry must be square")
    vvd = v @ dagger(v)
    vdv = dagger(v) @ v
    if spectral_norm(vdv @ vdv - vdv) > tol.abs * (1 + n) * 100:
        raise ValueError("input is not a partial isometry")
    eye = np.eye(n)
    e = [[np.zeros((2, 2)) for _ in range(2)] for _ in range(2)]
    for a in range(2):
        for b in range(2):
            m = np.zeros((2, 2), dtype=complex)
            m[a, b] = 1.0
            e[a][b] = m
    return (np.kron(v, e[0][0]) + np.kron(eye - vvd, e[0][1])
            + np.kron(eye - vdv, e[1][0]) - np.kron(dagger(v), e[1][1]))


def inner_mp_from_kraus(inst: CPInstrument, tol: Tolerance = DEFAULT_TOL
                        ) -> MeasuringProcess:
    """Measuring process with coupling inside ``𝓜 ⊗ B(K)``.

    Requires every Kraus operator to lie in the algebra. The meter is
    ``C^(N+2) ⊗ C^2`` for N total Kraus operators: one meter slot per
    Kraus operator, one for the initial state, one for the completeness
    defect (zero in the exact case, retained), and a qubit for the block
    unitary. Pointer projections group meter slots by atom; the initial
    slot joins the first atom and the defect slot the last, both with
    zero weight in the induced instrument.
    """
    inst.require_valid(tol)
    dim_h = inst.dim_h
    flat: list[tuple[str, np.ndarray]] = []
    for s in inst.outcomes.labels:
        for k, w in zip(inst.kraus[s], inst.atom_weights(s)):
            if w < 0:
                raise ValueError("instrument carries negative weights")
            kk = np.sqrt(w) * np.asarray(k, dtype=complex)
            rep = contains(inst.algebra, kk, tol)
            if rep.residual > tol.abs * (1 + dim_h) * 100:
                raise ValueError(
                    f"Kraus operator of atom {s!r} lies outside the algebra "
                    f"(residual {rep.residual:.3e}); a faithful process can "
                    "still be built through the conditional expectation")
            flat.append((s, kk))
    n_tot = len(flat)
    dim_m = n_tot + 2
    gram = sum(dagger(k) @ k for _, k in flat)
    defect = np.eye(dim_h) - gram
    vals = np.linalg.eigvalsh((defect + dagger(defect)) / 2)
    if vals.min() < -tol.psd_slack * (1 + abs(vals).max()) * 100:
        raise ValueError(f"completeness defect is not positive "
                         f"(min eigenvalue {vals.min():.3e})")
    l_op = sqrt_psd(defect, tol)

    v_op = np.zeros((dim_h * dim_m, dim_h * dim_m), dtype=complex)
    for idx, (_, k) in enumerate(flat):
        slot = np.zeros((dim_m, dim_m), dtype=complex)
        slot[idx + 1, 0] = 1.0
        v_op += np.kron(k, slot)
    slot = np.zeros((dim_m, dim_m), dtype=complex)
    slot[n_tot + 1, 0] = 1.0
    v_op += np.kron(l_op, slot)

    u = halmos_unitary(v_op, tol)
    dim_k = dim_m * 2

    labels = inst.outcomes.labels
    meter_slots = {s: [] for s in labels}
    meter_slots[labels[0]].append(0)
    for idx, (s, _) in enumerate(flat):
        meter_slots[s].append(idx + 1)
    meter_slots[labels[-1]].append(n_tot + 1)
    e = {}
    for s in labels:
        p = np.zeros((dim_m, dim_m), dtype=complex)
        for slot_idx in meter_slots[s]:
            p[slot_idx, slot_idx] = 1.0
        e[s] = np.kron(p, np.eye(2))

    sigma = proj(np.kron(basis_vector(dim_m, 0), basis_vector(2, 0)))
    return MeasuringProcess(dim_h, inst.algebra, inst.outcomes, dim_k,
                            sigma, e, u)


def inner_membership(mp: MeasuringProcess, tol: Tolerance = DEFAULT_TOL):
    """Membership report of the coupling in ``𝓜 ⊗ B(K)``."""
    big = tensor_with_full(mp.algebra, mp.dim_k)
    return contains(big, mp.u, tol)


def faithful_mp(inst: CPInstrument, tol: Tolerance = DEFAULT_TOL
                ) -> MeasuringProcess:
    """Measuring process with a pointer PVM faithful on non-null atoms.

    The instrument is first extended to all of B(H) by composing with
    the conditional expectation onto its algebra; the extension's
    minimal representation is split into ``H ⊗ L₁``, the pointer PVM is
    read off the commutant, and a block unitary on ``L₁ ⊗ C^2`` turns
    the split isometry into a coupling. The induced instrument agrees
    with the input on the algebra exactly, and on the identity for every
    event; an atom's pointer projection vanishes only if the atom has
    zero probability in every state.
    """
    inst.require_valid(tol)
    dim_h = inst.dim_h
    ext_kraus = {}
    for s in inst.outcomes.labels:
        dual = np.zeros((dim_h, dim_h, dim_h, dim_h), dtype=complex)
        for i, j, x in matrix_units(dim_h):
            dual[:, :, i, j] = apply_dual(
                inst, conditional_expectation(inst.algebra, x), (s,))
        choi = np.einsum("jiba->iajb", dual).reshape(dim_h ** 2, dim_h ** 2)
        ext_kraus[s] = kraus_from_dual_choi(choi, dim_h, tol)
    extended = CPInstrument(dim_h, full_algebra(dim_h), inst.outcomes,
                            ext_kraus)
    rep = instrument_representation(extended, tol)

    d1, u1 = multiplicity_split(rep.pi0, tol)
    e1 = commutant_pvm_lift(rep.e0, u1, dim_h, tol)
    v_tilde = u1 @ rep.v
    eta1 = basis_vector(d1, 0)
    w = v_tilde @ dagger(np.kron(np.eye(dim_h), eta1.reshape(-1, 1)))
    u = halmos_unitary(w, tol)

    dim_k = d1 * 2
    sigma = proj(np.kron(eta1, basis_vector(2, 0)))
    e = {s: np.kron(e1[s], np.eye(2)) for s in inst.outcomes.labels}
    return MeasuringProcess(dim_h, inst.algebra, inst.outcomes, dim_k,
                            sigma, e, u)


def faithfulness_table(mp: MeasuringProcess, inst: CPInstrument,
                       tol: Tolerance = DEFAULT_TOL) -> dict[str, dict]:
    """Per-atom faithfulness data: pointer support vs. atom probability."""
    out = {}
    eye = np.eye(inst.dim_h)
    for s in inst.outcomes.labels:
        e_norm = spectral_norm(mp.e[s])
        total = spectral_norm(apply_dual(inst, eye, (s,)))
        null_atom = total <= tol.abs * 100
        out[s] = {
            "pointer_nonzero": bool(e_norm > tol.abs * 100),
            "null_atom": bool(null_atom),
            "faithful": bool(null_atom or e_norm > tol.abs * 100),
        }
    return out
