"""Intercept-resend compatibility check via PPT feasibility.

Asks whether observed BB84 statistics p(b|x,y,a), measured with
per-detector efficiencies eta_k, admit an explanation by a bipartite
state that is positive under partial transposition.  An intercept-
resend channel is entanglement breaking, so its data always admit such
a state; when no PPT state fits, the channel demonstrably preserved
entanglement and every intercept-resend strategy is excluded.

The search runs Dykstra's alternating projections among the PSD cone,
the PPT cone and the affine set of data constraints on the 12x12
source-replacement state: a 4-dimensional register holding which
signal was sent, tensored with a 3-dimensional receiver space spanned
by {vacuum, H, V}.  Infeasibility is declared numerically when the
inter-set residual stalls above tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .receiver import STATES

__all__ = [
    "BASES",
    "OUTCOMES",
    "MeasurementModel",
    "JointDistribution",
    "WitnessVerdict",
    "build_bob_povm",
    "alice_projectors",
    "rho_alice_ideal",
    "distribution_from_channel",
    "intercept_resend_state",
    "check_feasibility",
    "verify_state",
    "partial_transpose",
    "mismatch_fixture",
    "save_distribution",
    "load_distribution",
]

BASES = ("Z", "X")
OUTCOMES = ("0", "1", "none", "double")
BASIS_STATES = {"Z": ("H", "V"), "X": ("D", "A")}

DIM_A = 4
DIM_B = 3  # span{vacuum, H, V}

_SQ2 = 1.0 / math.sqrt(2.0)
_QUBIT = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([_SQ2, _SQ2], dtype=complex),
    "A": np.array([_SQ2, -_SQ2], dtype=complex),
}


def _embed(qubit_op: np.ndarray) -> np.ndarray:
    """Embed a 2x2 polarization operator into the {vac, H, V} space."""
    out = np.zeros((DIM_B, DIM_B), dtype=complex)
    out[1:, 1:] = qubit_op
    return out


def build_bob_povm(eta: Mapping[str, float], basis: str) -> dict:
    """Receiver POVM for one basis under per-detector efficiencies.

    Click elements are eta_k times the polarization projector embedded
    in the single-photon block; the no-click element absorbs the rest
    (including the full vacuum projector).  The double-click element is
    identically zero at this truncation but kept for schema stability.
    """
    if basis not in BASES:
        raise ValueError(f"unknown basis {basis!r}")
    for k, v in eta.items():
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"eta[{k}]={v} outside [0, 1]")
    b0, b1 = BASIS_STATES[basis]
    el0 = eta[b0] * _embed(np.outer(_QUBIT[b0], _QUBIT[b0].conj()))
    el1 = eta[b1] * _embed(np.outer(_QUBIT[b1], _QUBIT[b1].conj()))
    none = np.eye(DIM_B, dtype=complex) - el0 - el1
    double = np.zeros((DIM_B, DIM_B), dtype=complex)
    return {"0": el0, "1": el1, "none": none, "double": double}


def alice_projectors() -> dict:
    """Register projectors selecting which signal was prepared.

    The register flags are orthonormal, ordered H, V, D, A; basis x
    with bit a selects one flag.  The per-basis POVM is completed by
    the projector onto the other basis' flags (the discarded
    basis-mismatch outcome).
    """
    proj = {}
    for x in BASES:
        for a in (0, 1):
            i = STATES.index(BASIS_STATES[x][a])
            op = np.zeros((DIM_A, DIM_A), dtype=complex)
            op[i, i] = 1.0
            proj[(x, a)] = op
    return proj


def rho_alice_ideal() -> np.ndarray:
    """Reduced register state of the source-replacement entangled state.

    (1/4) of the Gram matrix of the four signal states; its
    off-diagonals encode the signal non-orthogonality that powers the
    entanglement argument.
    """
    g = np.empty((DIM_A, DIM_A), dtype=complex)
    for i, si in enumerate(STATES):
        for j, sj in enumerate(STATES):
            g[i, j] = np.vdot(_QUBIT[sj], _QUBIT[si])  # <phi_j | phi_i>
    return g.conj() / 4.0


@dataclass(frozen=True)
class MeasurementModel:
    """Measurement description entering the feasibility problem."""

    eta: Mapping[str, float]

    def __post_init__(self):
        for k in STATES:
            if k not in self.eta:
                raise ValueError(f"missing detector {k} in eta")
            if not (0.0 <= self.eta[k] <= 1.0):
                raise ValueError(f"eta[{k}] outside [0, 1]")

    def bob_povm(self, basis: str) -> dict:
        return build_bob_povm(self.eta, basis)

    def povm_closure_error(self) -> float:
        """Max deviation of each party's per-basis POVM from closure."""
        worst = 0.0
        for basis in BASES:
            total = sum(self.bob_povm(basis).values())
            worst = max(worst, float(np.abs(total - np.eye(DIM_B)).max()))
        proj = alice_projectors()
        for x in BASES:
            other = [s for s in STATES if s not in BASIS_STATES[x]]
            rest = np.zeros((DIM_A, DIM_A), dtype=complex)
            for s in other:
                rest[STATES.index(s), STATES.index(s)] = 1.0
            total = proj[(x, 0)] + proj[(x, 1)] + rest
            worst = max(worst, float(np.abs(total - np.eye(DIM_A)).max()))
        return worst


@dataclass(frozen=True)
class JointDistribution:
    """p[b | x, y, a] indexed as p[x, y, a, b] with b over OUTCOMES."""

    p: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.p, dtype=float)
        if arr.shape != (2, 2, 2, 4):
            raise ValueError("distribution must have shape (2, 2, 2, 4)")
        if np.any(arr < -1e-15):
            raise ValueError("negative probability entry")
        sums = arr.sum(axis=3)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValueError("each conditional distribution over b must sum to 1")
        object.__setattr__(self, "p", np.clip(arr, 0.0, None))

    def mixed_with(self, other: "JointDistribution", weight: float) -> "JointDistribution":
        return JointDistribution(p=(1.0 - weight) * self.p + weight * other.p)


def _bob_state(channel, state: str) -> np.ndarray:
    """Receiver-side density matrix for one prepared signal."""
    psi = _QUBIT[state]
    pure = np.outer(psi, psi.conj())
    kind = channel[0] if isinstance(channel, tuple) else channel
    if kind == "identity":
        return _embed(pure)
    if kind == "loss":
        _, transmission = channel
        out = transmission * _embed(pure)
        out[0, 0] += 1.0 - transmission
        return out
    if kind == "depol":
        _, depol, transmission = channel
        mixed = (1.0 - depol) * pure + depol * np.eye(2) / 2.0
        out = transmission * _embed(mixed)
        out[0, 0] += 1.0 - transmission
        return out
    if kind == "ir":
        bases = channel[1] if isinstance(channel, tuple) and len(channel) > 1 else BASES
        transmission = channel[2] if isinstance(channel, tuple) and len(channel) > 2 else 1.0
        out = np.zeros((DIM_B, DIM_B), dtype=complex)
        for g in bases:
            for k in BASIS_STATES[g]:
                prob = float(np.abs(np.vdot(_QUBIT[k], psi)) ** 2) / len(bases)
                out += prob * transmission * _embed(
                    np.outer(_QUBIT[k], _QUBIT[k].conj())
                )
                out[0, 0] += prob * (1.0 - transmission)
        return out
    raise ValueError(f"unknown channel spec {channel!r}")


def distribution_from_channel(channel, model: MeasurementModel) -> JointDistribution:
    """Exact p(b|x,y,a) for a channel acting on the prepared signals."""
    p = np.zeros((2, 2, 2, 4))
    for xi, x in enumerate(BASES):
        for ai, a in enumerate((0, 1)):
            rho_b = _bob_state(channel, BASIS_STATES[x][a])
            for yi, y in enumerate(BASES):
                povm = model.bob_povm(y)
                for bi, b in enumerate(OUTCOMES):
                    p[xi, yi, ai, bi] = float(np.trace(povm[b] @ rho_b).real)
    return JointDistribution(p=p)


def intercept_resend_state(bases=BASES, transmission: float = 1.0) -> np.ndarray:
    """Explicit separable state realizing the intercept-resend channel.

    Convex combination over the eavesdropper's measure-resend outcomes
    (resends transmit with the given probability, vacuum otherwise);
    satisfies the data constraints of the matching "ir" distribution by
    construction.
    """
    rho = np.zeros((DIM_A * DIM_B, DIM_A * DIM_B), dtype=complex)
    for g in bases:
        for k in BASIS_STATES[g]:
            phi = _QUBIT[k]
            omega = np.empty((DIM_A, DIM_A), dtype=complex)
            for i, si in enumerate(STATES):
                for j, sj in enumerate(STATES):
                    omega[i, j] = (
                        np.vdot(phi, _QUBIT[si]) * np.vdot(_QUBIT[sj], phi) / 4.0
                    )
            omega /= len(bases)
            bob = transmission * _embed(np.outer(phi, phi.conj()))
            bob[0, 0] += 1.0 - transmission
            rho += np.kron(omega, bob)
    return rho


def partial_transpose(rho: np.ndarray, dims=(DIM_A, DIM_B), sys: int = 0) -> np.ndarray:
    """Partial transpose over one subsystem of a bipartite matrix."""
    da, db = dims
    r = rho.reshape(da, db, da, db)
    if sys == 0:
        r = r.transpose(2, 1, 0, 3)
    elif sys == 1:
        r = r.transpose(0, 3, 2, 1)
    else:
        raise ValueError("sys must be 0 or 1")
    return r.reshape(da * db, da * db)


# ---------------------------------------------------------------------
# Hermitian <-> real-vector encoding for the projection machinery.

_N = DIM_A * DIM_B


def _herm_to_vec(h: np.ndarray) -> np.ndarray:
    n = h.shape[0]
    iu = np.triu_indices(n, 1)
    return np.concatenate(
        [np.diag(h).real, math.sqrt(2.0) * h[iu].real, math.sqrt(2.0) * h[iu].imag]
    )


def _vec_to_herm(v: np.ndarray, n: int = _N) -> np.ndarray:
    n_off = n * (n - 1) // 2
    h = np.zeros((n, n), dtype=complex)
    h[np.diag_indices(n)] = v[:n]
    iu = np.triu_indices(n, 1)
    off = (v[n : n + n_off] + 1j * v[n + n_off :]) / math.sqrt(2.0)
    h[iu] = off
    h += np.triu(h, 1).conj().T
    return h


def _constraints(p: JointDistribution, model: MeasurementModel):
    """Stack the data and register-marginal trace constraints."""
    proj = alice_projectors()
    ops = []
    rhs = []
    for xi, x in enumerate(BASES):
        for yi, y in enumerate(BASES):
            povm = model.bob_povm(y)
            for ai in (0, 1):
                for bi, b in enumerate(OUTCOMES):
                    op = np.kron(proj[(x, ai)], povm[b])
                    ops.append(_herm_to_vec(0.5 * (op + op.conj().T)))
                    rhs.append(0.25 * p.p[xi, yi, ai, bi])
    rho_a = rho_alice_ideal()
    eye_b = np.eye(DIM_B, dtype=complex)
    for i in range(DIM_A):
        for j in range(i, DIM_A):
            e = np.zeros((DIM_A, DIM_A), dtype=complex)
            if i == j:
                e[i, i] = 1.0
                ops.append(_herm_to_vec(np.kron(e, eye_b)))
                rhs.append(float(rho_a[i, i].real))
            else:
                e[i, j] = 1.0
                sym = 0.5 * (e + e.conj().T)
                ops.append(_herm_to_vec(np.kron(sym, eye_b)))
                rhs.append(float(rho_a[i, j].real))
                asym = 0.5j * (e - e.conj().T)
                ops.append(_herm_to_vec(np.kron(asym, eye_b)))
                rhs.append(float(rho_a[i, j].imag))  # Tr(rho_A asym) = Im
    return np.array(ops), np.array(rhs)


def _psd_project(h: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(h)
    clipped = np.clip(vals, 0.0, None)
    return (vecs * clipped) @ vecs.conj().T


@dataclass(frozen=True)
class WitnessVerdict:
    """Feasibility outcome with its numerical certificate."""

    outcome: str  # compatible-with-ir | entanglement-verified | indeterminate
    residual: float
    iterations: int
    tolerance: float
    state: np.ndarray | None = None

    def record(self) -> str:
        return f"{self.outcome},{self.residual:.6e},{self.iterations},{self.tolerance:.1e}"


def _support_isometry() -> np.ndarray:
    """Isometry onto supp(rho_A) tensor the receiver space.

    The register marginal is rank deficient (the four signal states
    span a qubit), so every constraint-satisfying PSD state lives in
    this subspace; restricting the projections to it is exact and
    removes the tangential geometry that slows them down.
    """
    rho_a = rho_alice_ideal()
    vals, vecs = np.linalg.eigh(rho_a.real)
    order = np.argsort(vals)[::-1]
    keep = [i for i in order if vals[i] > 1e-12]
    u = vecs[:, keep]  # real orthonormal columns
    return np.kron(u, np.eye(DIM_B))


def check_feasibility(
    p: JointDistribution,
    model: MeasurementModel,
    tol: float = 1e-7,
    max_iter: int = 100_000,
    stall_window: int = 500,
    stall_rel: float = 1e-10,
) -> WitnessVerdict:
    """Search for a PPT state reproducing the data.

    Dykstra's cyclic projections among {PSD, PPT, affine constraints}.
    A state passing all memberships within tol certifies intercept-
    resend compatibility; a stalled positive residual certifies
    (numerically) that no such state exists, i.e. entanglement is
    verified.  Hitting the iteration cap yields an indeterminate
    verdict, reported distinctly.

    The iteration runs on the support subspace of the register
    marginal (a real rotation of the full space, under which partial
    transposition commutes); the returned state is embedded back into
    the full 12x12 space.
    """
    a_mat_full, rhs = _constraints(p, model)
    w = _support_isometry()
    dim_sub = w.shape[1]
    dims_sub = (dim_sub // DIM_B, DIM_B)

    def reduce_op(vec):
        return _herm_to_vec(w.conj().T @ _vec_to_herm(vec) @ w)

    a_mat = np.array([reduce_op(row) for row in a_mat_full])
    gram = a_mat @ a_mat.T
    gram_pinv = np.linalg.pinv(gram, rcond=1e-12)

    def project_affine(v):
        return v - a_mat.T @ (gram_pinv @ (a_mat @ v - rhs))

    def pt(h):
        return partial_transpose(h, dims=dims_sub, sys=0)

    x = project_affine(_herm_to_vec(np.eye(dim_sub, dtype=complex) / dim_sub))
    inc1 = np.zeros_like(x)
    inc2 = np.zeros_like(x)
    inc3 = np.zeros_like(x)
    history = []
    for it in range(1, max_iter + 1):
        h1 = _vec_to_herm(x + inc1, dim_sub)
        y1 = _herm_to_vec(_psd_project(h1))
        inc1 = x + inc1 - y1

        h2 = pt(_vec_to_herm(y1 + inc2, dim_sub))
        y2 = _herm_to_vec(pt(_psd_project(h2)))
        inc2 = y1 + inc2 - y2

        y3 = project_affine(y2 + inc3)
        inc3 = y2 + inc3 - y3
        gap = max(
            float(np.linalg.norm(y1 - y2)),
            float(np.linalg.norm(y2 - y3)),
            float(np.linalg.norm(y3 - x)),
        )
        x = y3

        cand = _vec_to_herm(x, dim_sub)  # exactly on the affine set
        min_eig = float(np.linalg.eigvalsh(cand)[0])
        min_eig_pt = float(np.linalg.eigvalsh(pt(cand))[0])
        if min_eig >= -tol and min_eig_pt >= -tol:
            full = w @ cand @ w.conj().T
            return WitnessVerdict(
                outcome="compatible-with-ir",
                residual=float(np.linalg.norm(a_mat @ x - rhs)),
                iterations=it,
                tolerance=tol,
                state=full,
            )
        history.append(gap)
        if it > stall_window and gap > tol:
            past = history[-stall_window - 1]
            if abs(gap - past) < stall_rel * max(gap, 1e-300):
                return WitnessVerdict(
                    outcome="entanglement-verified",
                    residual=gap,
                    iterations=it,
                    tolerance=tol,
                )
    return WitnessVerdict(
        outcome="indeterminate",
        residual=history[-1] if history else math.inf,
        iterations=max_iter,
        tolerance=tol,
    )


def verify_state(
    rho: np.ndarray, p: JointDistribution, model: MeasurementModel, tol: float = 1e-7
) -> dict:
    """Independently recheck a returned state against all constraints."""
    a_mat, rhs = _constraints(p, model)
    v = _herm_to_vec(rho)
    return {
        "min_eig": float(np.linalg.eigvalsh(rho)[0]),
        "min_eig_pt": float(np.linalg.eigvalsh(partial_transpose(rho))[0]),
        "constraint_residual": float(np.abs(a_mat @ v - rhs).max()),
        "tolerance": tol,
    }


def mismatch_fixture(r0) -> MeasurementModel:
    """Fold a summary-row's relative efficiencies into per-detector eta.

    tau_k are themselves normalized detection efficiencies; scaling the
    largest to 1 gives the per-detector efficiency spread that the
    feasibility problem sees.
    """
    from .attack import TABLE_ROWS, _row_key

    row = TABLE_ROWS[_row_key(r0)]
    tau = np.asarray(row["tau"], dtype=float)
    eta = tau / tau.max()
    return MeasurementModel(eta={k: float(eta[i]) for i, k in enumerate(STATES)})


# Fixture operating points.  A row whose mismatch supports a working
# faked-state attack is represented by the statistics that attack
# leaves behind (an intercept-resend channel with the optimizer's
# per-outcome resend transmissions); a row whose mismatch is too flat
# for any matching attack is represented by honest low-loss operation
# with the system's baseline polarization error.
FIXTURE_IR_TRANSMISSION = 0.45
FIXTURE_HONEST_DEPOL = 0.02
FIXTURE_HONEST_TRANSMISSION = 0.6


def fixture_problem(kind: str) -> tuple[JointDistribution, MeasurementModel]:
    """Build (distribution, measurement model) for a named fixture.

    Kinds: "ideal" (identity channel, unit efficiencies), "ir"
    (explicit intercept-resend with loss), "mismatch:<row>" (row with a
    working attack: the attack's intercept-resend statistics seen
    through the row's folded efficiencies), "flattened:<row>" (row
    without a working attack: honest lossy operation seen through the
    row's folded efficiencies).
    """
    if kind == "ideal":
        model = MeasurementModel(eta={k: 1.0 for k in STATES})
        return distribution_from_channel("identity", model), model
    if kind == "ir":
        model = MeasurementModel(eta={k: 0.9 for k in STATES})
        channel = ("ir", BASES, FIXTURE_IR_TRANSMISSION)
        return distribution_from_channel(channel, model), model
    if kind.startswith("mismatch:"):
        model = mismatch_fixture(kind.split(":", 1)[1])
        channel = ("ir", BASES, FIXTURE_IR_TRANSMISSION)
        return distribution_from_channel(channel, model), model
    if kind.startswith("flattened:"):
        model = mismatch_fixture(kind.split(":", 1)[1])
        channel = ("depol", FIXTURE_HONEST_DEPOL, FIXTURE_HONEST_TRANSMISSION)
        return distribution_from_channel(channel, model), model
    raise ValueError(f"unknown witness fixture {kind!r}")


def save_distribution(p: JointDistribution, path) -> None:
    """CSV x,y,a,b,p with one row per table entry."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("x,y,a,b,p\n")
        for xi, x in enumerate(BASES):
            for yi, y in enumerate(BASES):
                for ai in (0, 1):
                    for bi, b in enumerate(OUTCOMES):
                        fh.write(f"{x},{y},{ai},{b},{p.p[xi, yi, ai, bi]:.12e}\n")


def load_distribution(path) -> JointDistribution:
    arr = np.zeros((2, 2, 2, 4))
    seen = set()
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != "x,y,a,b,p":
            raise ValueError(f"{path}: wrong distribution header")
        for lineno, line in enumerate(fh, start=2):
            parts = line.strip().split(",")
            if len(parts) != 5:
                raise ValueError(f"{path}: line {lineno}: expected 5 fields")
            x, y, a, b, val = parts
            try:
                xi, yi = BASES.index(x), BASES.index(y)
                ai = int(a)
                bi = OUTCOMES.index(b)
                arr[xi, yi, ai, bi] = float(val)
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
            seen.add((xi, yi, ai, bi))
    if len(seen) != 32:
        raise ValueError(f"{path}: incomplete distribution ({len(seen)}/32 entries)")
    return JointDistribution(p=arr)
