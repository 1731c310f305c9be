"""Numerical checks of the rank/nuclear-norm concatenation bounds and of the
coherence and trade-off bounds, with explicit equality witnesses.

Monte-Carlo inputs are built to satisfy each bound's hypotheses exactly:
Gaussian matrices have their singular values clamped at ``alpha``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .losses import ClassPartition, class_orthogonality, domain_coherence_classwise, domain_coherence_global
from .spectral import ContractError, as_matrix, nuclear_norm, numerical_rank, spectral_norm, svd

TOL = 1e-8
SQRT2 = np.sqrt(2.0)
BOUNDARY_LAMBDA = 1.0 + SQRT2
_HYP_SLACK = 1e-12


@dataclass
class BoundCheck:
    """Outcome of one bound evaluation.

    ``excess`` is ``lhs - rhs`` for a bound written ``lhs <= rhs``; the
    check passes when ``excess <= tol``.
    """

    passed: bool
    excess: float
    lhs: float
    rhs: float


@dataclass
class BoundCheckReport:
    name: str
    trials: int = 0
    violations: int = 0
    max_slack: float = -np.inf
    witness_residual: float = 0.0

    def add(self, check: BoundCheck) -> None:
        self.trials += 1
        self.violations += int(not check.passed)
        self.max_slack = max(self.max_slack, check.excess)

    def merge(self, other: "BoundCheckReport") -> "BoundCheckReport":
        return BoundCheckReport(
            self.name, self.trials + other.trials, self.violations + other.violations,
            max(self.max_slack, other.max_slack), max(self.witness_residual, other.witness_residual),
        )

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.witness_residual <= TOL

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("name")
        d["max_slack"] = float(d["max_slack"]) if np.isfinite(d["max_slack"]) else None
        d["witness_residual"] = float(d["witness_residual"])
        return d


def _le(lhs: float, rhs: float, tol: float) -> BoundCheck:
    excess = float(lhs - rhs)
    return BoundCheck(excess <= tol, excess, float(lhs), float(rhs))


def check_rank_concat_upper(matrices, tol: float = 1e-6) -> BoundCheck:
    """rank([A_1, ..., A_k]) <= sum_i rank(A_i)."""
    mats = [as_matrix(A) for A in matrices]
    lhs = numerical_rank(np.hstack(mats), tol)
    rhs = sum(numerical_rank(A, tol) for A in mats)
    return _le(lhs, rhs, 0)


def check_rank_concat_lower(A, B, tol: float = 1e-6) -> BoundCheck:
    """max(rank A, rank B) <= rank([A, B])."""
    A, B = as_matrix(A), as_matrix(B)
    lhs = max(numerical_rank(A, tol), numerical_rank(B, tol))
    return _le(lhs, numerical_rank(np.hstack([A, B]), tol), 0)


def check_nuclear_concat_upper(A, B, tol: float = TOL) -> BoundCheck:
    """||[A, B]||_* <= ||A||_* + ||B||_*."""
    A, B = as_matrix(A), as_matrix(B)
    return _le(nuclear_norm(np.hstack([A, B])), nuclear_norm(A) + nuclear_norm(B), tol)


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def clip_spectrum(M, alpha: float) -> np.ndarray:
    """Clamp singular values at ``alpha`` so that ||M||_sigma <= alpha."""
    dec = svd(M)
    return (dec.U * np.minimum(dec.sigma, alpha)) @ dec.V.T


def coherence_bound(alpha: float, d: int) -> float:
    return (2.0 - SQRT2) * alpha * d


def make_transferability_witness(d: int, n: int, alpha: float, m: int | None = None,
                                 seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Pair with a shared column space and every singular value equal to ``alpha``.

    ``A = alpha * P [I_d, 0] Q_A^T`` and ``B = alpha * P [I_d, 0] Q_B^T`` with
    seeded random orthogonal ``P, Q_A, Q_B``.
    """
    m = n if m is None else m
    if n < d or m < d:
        raise ContractError("witness needs at least d columns per matrix")
    rng = np.random.default_rng(seed)
    P = random_orthogonal(d, rng)
    A = alpha * P @ random_orthogonal(n, rng)[:, :d].T
    B = alpha * P @ random_orthogonal(m, rng)[:, :d].T
    return A, B


def _require_spectral(M, bound: float, what: str) -> None:
    if spectral_norm(M) > bound * (1 + _HYP_SLACK) + _HYP_SLACK:
        raise ContractError(f"hypothesis violated: ||{what}||_sigma > {bound}")


def check_transferability_bound(A, B, alpha: float, tol: float = TOL) -> BoundCheck:
    """L_DC(A, B) <= (2 - sqrt 2) alpha d, given spectral norms at most alpha."""
    A, B = as_matrix(A), as_matrix(B)
    _require_spectral(A, alpha, "A")
    _require_spectral(B, alpha, "B")
    value, _, _ = domain_coherence_global(A, B)
    return _le(value, coherence_bound(alpha, A.shape[0]), tol)


def tradeoff_bound(lam: float, alpha: float, d: int, k: int, regime: str) -> float:
    if regime == "i":
        return (((SQRT2 - 2.0) * lam + SQRT2) * np.sqrt(k) - SQRT2) * alpha * d
    if regime == "ii":
        return (SQRT2 - 2.0) * alpha * lam * d
    raise ContractError(f"unknown regime {regime!r}")


def _regime_applies(lam: float, regime: str) -> bool:
    # the boundary value belongs to both regimes
    eps = 1e-12
    return lam >= BOUNDARY_LAMBDA - eps if regime == "i" else lam <= BOUNDARY_LAMBDA + eps


def make_tradeoff_witness(k: int, d: int, alpha: float, regime: str, n: int | None = None,
                          seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-class ``(Z^s_i, Z^t_i)`` attaining the trade-off bound.

    Regime "i": every class spans all of R^d with ``Z^s_i = Z^t_i`` and all
    singular values ``alpha / sqrt(k)``.  Regime "ii" (needs ``k | d``):
    class ``i`` owns a private ``d/k``-dimensional block of a random
    orthonormal frame with ``Z^s_i = Z^t_i = alpha`` times that block.
    """
    rng = np.random.default_rng(seed)
    P = random_orthogonal(d, rng)
    out = []
    if regime == "i":
        n = d if n is None else n
        if n < d:
            raise ContractError("regime (i) witness needs n >= d columns per block")
        for _ in range(k):
            Zi = (alpha / np.sqrt(k)) * P @ random_orthogonal(n, rng)[:, :d].T
            out.append((Zi, Zi.copy()))
    elif regime == "ii":
        if d % k:
            raise ContractError("regime (ii) witness needs k to divide d")
        b = d // k
        n = b if n is None else n
        if n < b:
            raise ContractError("regime (ii) witness needs n >= d/k columns per block")
        for i in range(k):
            Zi = alpha * P[:, i * b:(i + 1) * b] @ random_orthogonal(n, rng)[:, :b].T
            out.append((Zi, Zi.copy()))
    else:
        raise ContractError(f"unknown regime {regime!r}")
    return out


def assemble_clusters(clusters):
    """Stack per-class blocks into ``Z = [Z^s, Z^t]`` with a matching partition."""
    src = [np.asarray(s, dtype=float) for s, _ in clusters]
    tgt = [np.asarray(t, dtype=float) for _, t in clusters]
    d = src[0].shape[0]
    Zs = np.hstack(src) if src else np.zeros((d, 0))
    Zt = np.hstack(tgt) if tgt else np.zeros((d, 0))
    ns = Zs.shape[1]
    s_idx, t_idx, off_s, off_t = [], [], 0, ns
    for s, t in zip(src, tgt):
        s_idx.append(np.arange(off_s, off_s + s.shape[1]))
        t_idx.append(np.arange(off_t, off_t + t.shape[1]))
        off_s += s.shape[1]
        off_t += t.shape[1]
    return Zs, Zt, np.hstack([Zs, Zt]), ClassPartition(s_idx, t_idx)


def _tradeoff_terms(clusters) -> tuple[float, float, np.ndarray]:
    _, _, Z, part = assemble_clusters(clusters)
    co, _ = class_orthogonality(Z, part)
    dc, _ = domain_coherence_classwise(Z, part)
    return co, dc, Z


def normalized_tradeoff(clusters, lam: float) -> float:
    """``L_CO - lam * L_DC`` on the class-wise terms."""
    co, dc, _ = _tradeoff_terms(clusters)
    return co - lam * dc


def _check_tradeoff_hypotheses(clusters, alpha: float) -> None:
    Zs, Zt, Z, _ = assemble_clusters(clusters)
    _require_spectral(Zs, alpha, "Z^s")
    _require_spectral(Zt, alpha, "Z^t")
    _require_spectral(Z, SQRT2 * alpha, "Z")


def _tradeoff_verdict(co, dc, d, k, lam, alpha, regime, tol) -> BoundCheck:
    if not _regime_applies(lam, regime):
        raise ContractError(f"lambda={lam} is outside regime ({regime})")
    # lower bound: value >= bound  <=>  bound - value <= tol
    return _le(tradeoff_bound(lam, alpha, d, k, regime), co - lam * dc, tol)


def check_tradeoff_bound(clusters, lam: float, alpha: float, regime: str, tol: float = TOL) -> BoundCheck:
    """Lower bound on ``L_CO - lam * L_DC`` in the given regime.

    Requires ||Z^s||, ||Z^t|| <= alpha and ||Z|| <= sqrt(2) alpha (spectral).
    """
    if not _regime_applies(lam, regime):
        raise ContractError(f"lambda={lam} is outside regime ({regime})")
    _check_tradeoff_hypotheses(clusters, alpha)
    co, dc, Z = _tradeoff_terms(clusters)
    return _tradeoff_verdict(co, dc, Z.shape[0], len(clusters), lam, alpha, regime, tol)


def check_tradeoff_sweep(clusters, lambdas, alpha: float, tol: float = TOL) -> list[tuple[float, str, BoundCheck]]:
    """``check_tradeoff_bound`` for every (lambda, applicable regime) pair,
    sharing one evaluation of the loss terms."""
    _check_tradeoff_hypotheses(clusters, alpha)
    co, dc, Z = _tradeoff_terms(clusters)
    return [(lam, regime, _tradeoff_verdict(co, dc, Z.shape[0], len(clusters), lam, alpha, regime, tol))
            for lam in lambdas for regime in ("i", "ii") if _regime_applies(lam, regime)]


def coherence_gap(x, y):
    """x + y - sqrt(x^2 + y^2), the scalar envelope behind the coherence bound."""
    return x + y - np.hypot(x, y)


# --------------------------------------------------------------------------
# Monte-Carlo samplers


def _sample_clipped(rng, d, n, alpha):
    scale = rng.uniform(0.3, 3.0) * alpha / np.sqrt(max(n, d))
    return clip_spectrum(scale * rng.standard_normal((d, n)), alpha)


def sample_orthogonal_pair(rng, d_max: int = 8):
    d = int(rng.integers(2, d_max + 1))
    P = random_orthogonal(d, rng)
    r = int(rng.integers(1, d))
    ra, rb = r, int(rng.integers(1, d - r + 1))
    A = P[:, :ra] @ rng.standard_normal((ra, int(rng.integers(1, 7))))
    B = P[:, ra:ra + rb] @ rng.standard_normal((rb, int(rng.integers(1, 7))))
    return A, B


def sample_coherence_pair(rng, d: int, alpha: float):
    """Clipped pair, sometimes forced to share a column space."""
    n, m = int(rng.integers(d, 2 * d + 3)), int(rng.integers(d, 2 * d + 3))
    A = _sample_clipped(rng, d, n, alpha)
    if rng.random() < 0.3:
        # shared column space, near the equality case
        U = svd(A).U
        B = clip_spectrum(U @ np.diag(rng.uniform(0.5, 1.5, d) * alpha) @ random_orthogonal(m, rng)[:, :d].T, alpha)
    else:
        B = _sample_clipped(rng, d, m, alpha)
    return A, B


def sample_tradeoff_clusters(rng, k: int, d: int, alpha: float):
    """Random per-class blocks, clipped so both spectral hypotheses hold."""
    mode = rng.random()
    if mode < 0.25:
        regime = "ii" if d % k == 0 and rng.random() < 0.5 else "i"
        base = make_tradeoff_witness(k, d, alpha, regime, seed=int(rng.integers(2**31)))
        noise = rng.uniform(0.001, 0.3) * alpha
        blocks = [(s + noise * rng.standard_normal(s.shape), t + noise * rng.standard_normal(t.shape))
                  for s, t in base]
    else:
        blocks = []
        for _ in range(k):
            blocks.append((rng.standard_normal((d, int(rng.integers(1, d + 3)))),
                           rng.standard_normal((d, int(rng.integers(1, d + 3))))))
        if mode < 0.5:
            # classes confined to random low-dimensional subspaces
            for j, (s, t) in enumerate(blocks):
                r = int(rng.integers(1, d + 1))
                Pj = random_orthogonal(d, rng)[:, :r]
                blocks[j] = (Pj @ Pj.T @ s, Pj @ Pj.T @ t * rng.uniform(0.2, 2.0))
    ns = [s.shape[1] for s, _ in blocks]
    nt = [t.shape[1] for _, t in blocks]
    gain = rng.uniform(0.5, 4.0)
    Zs = clip_spectrum(gain * np.hstack([s for s, _ in blocks]) / np.sqrt(sum(ns)), alpha)
    Zt = clip_spectrum(gain * np.hstack([t for _, t in blocks]) / np.sqrt(sum(nt)), alpha)
    cs, ct = np.cumsum([0] + ns), np.cumsum([0] + nt)
    return [(Zs[:, cs[i]:cs[i + 1]], Zt[:, ct[i]:ct[i + 1]]) for i in range(k)]


def _trial_rng(seed: int, name: str, trial: int) -> np.random.Generator:
    tag = sum(ord(c) * 31**i for i, c in enumerate(name)) % (2**31)
    return np.random.default_rng([seed, tag, trial])


def suite_orthogonal_additivity(seed: int, trials: int) -> BoundCheckReport:
    """|‖[A,B]‖_* - ‖A‖_* - ‖B‖_*| <= tol for orthogonal column spaces."""
    rep = BoundCheckReport("orthogonal_additivity")
    for t in range(trials):
        A, B = sample_orthogonal_pair(_trial_rng(seed, rep.name, t))
        gap = abs(nuclear_norm(np.hstack([A, B])) - nuclear_norm(A) - nuclear_norm(B))
        rep.add(_le(gap, 0.0, TOL))
    return rep


def suite_nuclear_concat_upper(seed: int, trials: int) -> BoundCheckReport:
    rep = BoundCheckReport("nuclear_concat_upper")
    for t in range(trials):
        rng = _trial_rng(seed, rep.name, t)
        d = int(rng.integers(1, 9))
        A = rng.standard_normal((d, int(rng.integers(1, 10)))) * rng.uniform(0.1, 5)
        B = rng.standard_normal((d, int(rng.integers(1, 10)))) * rng.uniform(0.1, 5)
        if rng.random() < 0.3:
            B = A @ rng.standard_normal((A.shape[1], B.shape[1]))
        rep.add(check_nuclear_concat_upper(A, B))
    A = np.eye(3)[:, :1]
    rep.witness_residual = abs(check_nuclear_concat_upper(A, np.eye(3)[:, 1:]).excess)
    return rep


def _low_rank(rng, d, n, r):
    return rng.standard_normal((d, r)) @ rng.standard_normal((r, n))


def suite_rank_concat(seed: int, trials: int) -> tuple[BoundCheckReport, BoundCheckReport]:
    up, lo = BoundCheckReport("rank_concat_upper"), BoundCheckReport("rank_concat_lower")
    for t in range(trials):
        rng = _trial_rng(seed, up.name, t)
        d = int(rng.integers(2, 9))
        mats = [_low_rank(rng, d, int(rng.integers(1, 8)), int(rng.integers(1, d + 1)))
                for _ in range(int(rng.integers(2, 5)))]
        up.add(check_rank_concat_upper(mats))
        lo.add(check_rank_concat_lower(mats[0], mats[1]))
    e = np.eye(3)
    up.witness_residual = abs(check_rank_concat_upper([e[:, :1], e[:, 1:2], e[:, 2:]]).excess)
    lo.witness_residual = abs(check_rank_concat_lower(e[:, :2], e[:, :1]).excess)
    return up, lo


def suite_transferability(seed: int, trials: int, alphas=(0.5, 1.0, 2.0), dims=(2, 3, 5, 8)) -> BoundCheckReport:
    rep = BoundCheckReport("transferability_bound")
    for t in range(trials):
        rng = _trial_rng(seed, rep.name, t)
        alpha = float(alphas[t % len(alphas)])
        d = int(dims[(t // len(alphas)) % len(dims)])
        A, B = sample_coherence_pair(rng, d, alpha)
        rep.add(check_transferability_bound(A, B, alpha))
    resid = 0.0
    for i, (alpha, d) in enumerate([(a, d) for a in alphas for d in dims]):
        A, B = make_transferability_witness(d, d + i % 3, alpha, m=d + 1, seed=seed + i)
        resid = max(resid, abs(check_transferability_bound(A, B, alpha).excess))
    rep.witness_residual = resid
    return rep


TRADEOFF_LAMBDAS = (0.5, 1.0, BOUNDARY_LAMBDA, 3.0, 5.0)


def suite_tradeoff(seed: int, trials: int, lambdas=TRADEOFF_LAMBDAS) -> list[BoundCheckReport]:
    reports = {"i": BoundCheckReport("tradeoff_regime_i"), "ii": BoundCheckReport("tradeoff_regime_ii")}
    shapes = [(2, 2), (3, 3), (2, 4), (4, 4), (3, 6), (2, 3), (4, 6)]
    for t in range(trials):
        rng = _trial_rng(seed, "tradeoff", t)
        k, d = shapes[t % len(shapes)]
        alpha = float(rng.choice([0.5, 1.0, 2.0]))
        clusters = sample_tradeoff_clusters(rng, k, d, alpha)
        for _, regime, check in check_tradeoff_sweep(clusters, lambdas, alpha):
            reports[regime].add(check)
    for regime, rep in reports.items():
        resid = 0.0
        for j, (k, d) in enumerate([(3, 3), (2, 4), (4, 4), (2, 6)]):
            for alpha in (0.5, 1.0, 2.0):
                clusters = make_tradeoff_witness(k, d, alpha, regime, n=d + 1, seed=seed + j)
                for _, reg, check in check_tradeoff_sweep(clusters, lambdas, alpha):
                    if reg == regime:
                        resid = max(resid, abs(check.excess))
        rep.witness_residual = resid
    agree = BoundCheckReport("tradeoff_boundary_agreement")
    for k, d in [(2, 2), (3, 3), (4, 4), (5, 10)]:
        for alpha in (0.5, 1.0, 2.0):
            gap = abs(tradeoff_bound(BOUNDARY_LAMBDA, alpha, d, k, "i") - tradeoff_bound(BOUNDARY_LAMBDA, alpha, d, k, "ii"))
            agree.add(_le(gap, 0.0, TOL))
    return [reports["i"], reports["ii"], agree]


def suite_monotonicity(alpha: float = 1.0, d: int = 3, grid: int = 101) -> BoundCheckReport:
    """x + y - sqrt(x^2 + y^2) is non-decreasing in each argument on [0, alpha d]^2."""
    rep = BoundCheckReport("coherence_envelope_monotone")
    xs = np.linspace(0.0, alpha * d, grid)
    F = coherence_gap(xs[:, None], xs[None, :])
    for diff in (np.diff(F, axis=0), np.diff(F, axis=1)):
        for v in diff.ravel():
            rep.add(_le(-v, 0.0, TOL))
    rep.witness_residual = float(abs(coherence_gap(alpha * d, alpha * d) - coherence_bound(alpha, d)))
    return rep


def run_theory_suite(seed: int = 0, trials: int = 1000) -> list[BoundCheckReport]:
    """Every bound check with ``trials`` seeded draws each (trade-off: half)."""
    up, lo = suite_rank_concat(seed, trials)
    return [
        up, lo,
        suite_nuclear_concat_upper(seed, trials),
        suite_orthogonal_additivity(seed, trials),
        suite_transferability(seed, trials),
        *suite_tradeoff(seed, max(1, trials // 2)),
        suite_monotonicity(),
    ]


def reports_to_json(reports) -> dict:
    return {rep.name: rep.to_dict() for rep in reports}
