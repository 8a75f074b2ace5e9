"""Dense log-barrier solver for the per-iteration beamformer subproblem.

For fixed auxiliaries the surrogate objective is concave quadratic in the
beamformer and linear in the common-rate split, the power and reformulated
common-rate constraints are convex quadratic, and r_c is box-bounded below.
The complex beamformer is stacked into reals column by column ([Re f; Im f]
per stream), giving a Newton system of side 2*N_T*(K+1)+K, small enough for
dense linear algebra at any scale this package targets.
"""

from dataclasses import dataclass, field

import numpy as np

from .fp import AuxState
from .metrics import LN2, Beamformer, RateAllocation


class SolverError(Exception):
    pass


class InfeasibleStartError(SolverError):
    """Warm start violates a constraint beyond feasibility_eps."""


class BarrierDivergedError(SolverError):
    """Newton made no progress while still far from centered."""


class CannotInteriorizeError(SolverError):
    """No shrink factor produced a strictly interior starting point."""


@dataclass
class SubproblemSpec:
    channels: np.ndarray   # (K, N_T), user channels as rows
    aux: AuxState
    noise: np.ndarray      # (K,) watts
    power_budget: float
    warm_start: tuple      # (Beamformer, RateAllocation)

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=complex)
        self.noise = np.atleast_1d(np.asarray(self.noise, dtype=float))
        K = self.channels.shape[0]
        if self.noise.size == 1:
            self.noise = np.full(K, self.noise[0])
        if self.noise.shape != (K,):
            raise ValueError("noise must be scalar or length K")
        fmat = self.warm_start[0].matrix
        if fmat.shape != (self.channels.shape[1], K + 1):
            raise ValueError("warm-start beamformer shape mismatch")
        if self.warm_start[1].r_c.shape != (K,):
            raise ValueError("warm-start rate allocation must have length K")


@dataclass
class SolverConfig:
    barrier_start: float = 50.0
    barrier_mult: float = 20.0
    max_outer_iters: int = 6
    newton_tol: float = 1e-7        # half squared Newton decrement
    max_newton_iters: int = 80
    feasibility_eps: float = 1e-7
    armijo_c: float = 0.01
    backtrack: float = 0.5

    def __post_init__(self):
        if self.barrier_mult <= 1.0:
            raise ValueError("barrier_mult must exceed 1")
        if min(self.barrier_start, self.newton_tol, self.feasibility_eps) <= 0:
            raise ValueError("tolerances must be positive")

    @property
    def final_barrier_weight(self):
        return self.barrier_start * self.barrier_mult ** (self.max_outer_iters - 1)


@dataclass
class SubproblemResult:
    beamformer: Beamformer
    rates: RateAllocation
    objective: float              # surrogate value at the returned point
    kkt_residual: float           # half squared Newton decrement at exit
    duality_measure: float        # num_constraints / final barrier weight
    used_fallback: bool           # warm start returned because it scored better
    trace: list = field(default_factory=list)


def write_solver_trace(path, trace):
    with open(path, "w") as fh:
        fh.write("stage,newton_iters,objective,max_violation\n")
        for row in trace:
            fh.write("%d,%d,%.12g,%.3g\n" % row)


class _Problem:
    """Realification of one subproblem: precomputed coefficient blocks and
    evaluators for the surrogate, slacks and barrier derivatives."""

    def __init__(self, spec):
        Hm = spec.channels
        K, N = Hm.shape
        aux = spec.aux
        self.K, self.N = K, N
        self.nF = 2 * N * (K + 1)
        self.n = self.nF + K
        self.P0 = float(spec.power_budget)

        # a.z = Re(h^H f), b.z = Im(h^H f) for the real stack z = [Re f; Im f]
        self.A = np.hstack([Hm.real, Hm.imag])
        self.B = np.hstack([-Hm.imag, Hm.real])

        beta2 = np.abs(aux.beta) ** 2
        wq = beta2 / LN2
        self.W = (self.A.T * wq) @ self.A + (self.B.T * wq) @ self.B

        root = np.sqrt(aux.alpha + 1.0)
        coef = 2.0 / LN2 * root
        self.D = (coef * (aux.beta.real * self.A.T + aux.beta.imag * self.B.T))[:, :K]

        rootc = 2.0 * np.sqrt(aux.mu + 1.0)
        self.E = rootc[:, None] * (aux.eta.real[:, None] * self.A + aux.eta.imag[:, None] * self.B)
        self.eta2 = np.abs(aux.eta) ** 2
        self.ct = np.log(1.0 + aux.mu) - aux.mu - self.eta2 * spec.noise
        self.c0 = float(np.sum(np.log(1.0 + aux.alpha) - aux.alpha) / LN2
                        - np.sum(beta2 * spec.noise) / LN2)

    def split(self, z):
        Z = z[: self.nF].reshape(self.K + 1, 2 * self.N).T
        return Z, z[self.nF:]

    def pack(self, fmat, r_c):
        Z = np.vstack([fmat.real, fmat.imag])
        return np.concatenate([Z.T.ravel(), np.asarray(r_c, dtype=float)])

    def to_matrices(self, z):
        Z, r = self.split(z)
        fmat = Z[: self.N] + 1j * Z[self.N:]
        return fmat, r

    def state(self, z):
        """Surrogate value and all slacks at z."""
        Z, r = self.split(z)
        AZ = self.A @ Z
        BZ = self.B @ Z
        Psq = AZ**2 + BZ**2
        Zp = Z[:, : self.K]
        ghat = (self.c0 + float(np.sum(self.D * Zp)) - float(np.sum(Zp * (self.W @ Zp)))
                + float(r.sum()))
        t_vec = self.ct + self.E @ Z[:, self.K] - self.eta2 * Psq.sum(axis=1)
        s_pow = self.P0 - float(np.sum(Z * Z))
        s_t = t_vec - LN2 * float(r.sum())
        return ghat, s_pow, s_t, r, Z, AZ, BZ

    def phi(self, z, t, use_power, use_rc):
        ghat, s_pow, s_t, r, _, _, _ = self.state(z)
        if np.any(s_t <= 0.0):
            return np.inf, ghat
        val = -t * ghat - float(np.sum(np.log(s_t)))
        if use_power:
            if s_pow <= 0.0:
                return np.inf, ghat
            val -= np.log(s_pow)
        if use_rc:
            if np.any(r <= 0.0):
                return np.inf, ghat
            val -= float(np.sum(np.log(r)))
        return val, ghat

    def derivatives(self, z, t, use_power, use_rc):
        """Barrier gradient and Hessian; also returns phi and the surrogate."""
        K, N = self.K, self.N
        ghat, s_pow, s_t, r, Z, AZ, BZ = self.state(z)
        phi = -t * ghat - float(np.sum(np.log(s_t)))
        Zp = Z[:, :K]

        grad_f = np.zeros_like(Z)
        grad_f[:, :K] = -t * (self.D - 2.0 * (self.W @ Zp))
        wt = self.eta2 / s_t
        grad_f += 2.0 * (self.A.T @ (wt[:, None] * AZ) + self.B.T @ (wt[:, None] * BZ))
        grad_f[:, K] -= self.E.T @ (1.0 / s_t)
        grad_r = np.full(K, -t + LN2 * float(np.sum(1.0 / s_t)))

        S_t = 2.0 * ((self.A.T * wt) @ self.A + (self.B.T * wt) @ self.B)
        M_com = S_t.copy()
        if use_power:
            phi -= np.log(s_pow)
            grad_f += (2.0 / s_pow) * Z
            M_com[np.diag_indices_from(M_com)] += 2.0 / s_pow
        M_priv = M_com + 2.0 * t * self.W

        hess_r_diag = np.zeros(K)
        if use_rc:
            phi -= float(np.sum(np.log(r)))
            grad_r -= 1.0 / r
            hess_r_diag += 1.0 / r**2

        n, nF, m2 = self.n, self.nF, 2 * N
        H = np.zeros((n, n))
        for j in range(K):
            H[j * m2:(j + 1) * m2, j * m2:(j + 1) * m2] = M_priv
        H[K * m2:nF, K * m2:nF] = M_com
        H[nF:, nF:] = np.diag(hess_r_diag)

        # rank-1 pieces grad(g_i) grad(g_i)^T / slack_i^2
        gt = 2.0 * self.eta2[:, None, None] * (
            self.A[:, :, None] * AZ[:, None, :] + self.B[:, :, None] * BZ[:, None, :])
        gt[:, :, K] -= self.E
        V = np.empty((self.n, K + (1 if use_power else 0)))
        V[:nF, :K] = gt.transpose(2, 1, 0).reshape(nF, K)
        V[nF:, :K] = LN2
        V[:, :K] /= s_t
        if use_power:
            V[:nF, K] = 2.0 * Z.T.ravel() / s_pow
            V[nF:, K] = 0.0
        H += V @ V.T

        grad = np.concatenate([grad_f.T.ravel(), grad_r])
        return phi, ghat, grad, H


def _warm_violation(prob, z):
    """Largest scaled violation of the inequality set at z."""
    _, s_pow, s_t, r, _, _, _ = prob.state(z)
    return max(-s_pow / prob.P0, float(np.max(-s_t)), float(np.max(-r)))


def _newton(prob, z, t, cfg, use_power, use_rc, active, stage):
    """Damped Newton on the barrier objective at weight t.

    Exits at the decrement tolerance, or accepts the current point when the
    decrement stops shrinking near the numerical floor (the surrogate error
    of a stagnated point is about decrement/t, far below any tolerance this
    package uses).
    """
    lam2 = np.inf
    phi_prev = np.inf
    stagnant = 0
    for it in range(cfg.max_newton_iters):
        phi0, _, grad, H = prob.derivatives(z, t, use_power, use_rc)
        ga = grad[active]
        Ha = H[np.ix_(active, active)]
        try:
            step_a = np.linalg.solve(Ha, -ga)
        except np.linalg.LinAlgError:
            # extreme slack spread can make H numerically singular even
            # though it is PD in exact arithmetic; a tiny ridge recovers a
            # usable ascent direction, the line search guards quality
            ridge = 1e-12 * float(np.max(np.diag(Ha))) + 1e-300
            try:
                step_a = np.linalg.solve(Ha + ridge * np.eye(Ha.shape[0]), -ga)
            except np.linalg.LinAlgError:
                raise BarrierDivergedError("singular Newton system at stage %d" % stage)
        lam2 = max(-float(ga @ step_a), 0.0)
        if lam2 / 2.0 <= cfg.newton_tol:
            return z, it, lam2
        # numerical floor: the barrier value stopped moving, so the point is
        # as centered as doubles allow (surrogate error ~ decrement / t)
        if phi_prev - phi0 <= 1e-12 * (1.0 + abs(phi0)):
            stagnant += 1
            if stagnant >= 3:
                return z, it, lam2
        else:
            stagnant = 0
        phi_prev = phi0
        delta = np.zeros(prob.n)
        delta[active] = step_a
        slope = float(ga @ step_a)
        size = 1.0
        while size > 1e-13:
            cand = z + size * delta
            phic, _ = prob.phi(cand, t, use_power, use_rc)
            if phic <= phi0 + cfg.armijo_c * size * slope:
                break
            size *= cfg.backtrack
        else:
            if lam2 / 2.0 > 1e6 * cfg.newton_tol:
                raise BarrierDivergedError(
                    "line search stalled with decrement %.3g at stage %d" % (lam2, stage))
            return z, it, lam2
        z = cand
    return z, cfg.max_newton_iters, lam2


def make_strict_interior(spec, eps=1e-7):
    """Shrink the warm start until every inequality holds strictly.

    Both blocks are scaled by (1-delta) with delta the smallest of
    {1e-6, 1e-4, 1e-2} that works; zero common-rate entries are floored by a
    tiny amount sized so the surplus sacrifice stays below a quarter of the
    worst slack (pure scaling cannot move them off the boundary).

    A feasible point that no shrink can move off the boundary (all surplus
    already pinned at zero, as with an all-zero beamformer) comes back
    unchanged; only an infeasible input raises.
    """
    prob = _Problem(spec)
    fmat = spec.warm_start[0].matrix
    r_c = np.clip(spec.warm_start[1].r_c, 0.0, None)
    K = prob.K
    for delta in (1e-6, 1e-4, 1e-2):
        fs = (1.0 - delta) * fmat
        rs = (1.0 - delta) * r_c
        z = prob.pack(fs, rs)
        _, s_pow, s_t, _, _, _, _ = prob.state(z)
        s_min = float(np.min(s_t))
        if s_pow <= 0.0 or s_min <= 0.0:
            continue
        # entries sitting on the r_c >= 0 boundary get an explicit lift (the
        # log barrier needs them strictly positive); anything already clear
        # of 1e-8 is left alone
        target = s_min / (4.0 * K * LN2)
        rs = np.where(rs < 1e-8, np.maximum(rs, target), rs)
        z = prob.pack(fs, rs)
        _, s_pow, s_t, _, _, _, _ = prob.state(z)
        if s_pow > 0.0 and np.min(s_t) > 0.0:
            return Beamformer(fs), RateAllocation(rs)
    if _warm_violation(prob, prob.pack(fmat, r_c)) <= eps:
        return Beamformer(fmat.copy()), RateAllocation(r_c.copy())
    raise CannotInteriorizeError("no shrink factor up to 1e-2 yields a strict interior")


def solve(spec, cfg=None, freeze_beamformer=False, freeze_rates=False,
          collect_trace=False):
    """Maximize the surrogate over (F, r_c) under power, reformulated
    common-rate and nonnegativity constraints.

    Returns a point at least as good as the warm start (the warm start
    itself if the barrier path somehow ends below it).  The freeze flags pin
    one block at its warm-start value; they exist for degenerate-subproblem
    tests and are not used by the optimizer loop.
    """
    if cfg is None:
        cfg = SolverConfig()
    if freeze_beamformer and freeze_rates:
        raise ValueError("nothing left to optimize with both blocks frozen")
    prob = _Problem(spec)
    eps = cfg.feasibility_eps

    z_warm = prob.pack(spec.warm_start[0].matrix, spec.warm_start[1].r_c)
    violation = _warm_violation(prob, z_warm)
    if violation > eps:
        raise InfeasibleStartError("warm start violates constraints by %.3g" % violation)
    ghat_warm = prob.state(z_warm)[0]

    fs, rs = make_strict_interior(spec, eps)
    z = prob.pack(fs.matrix, rs.r_c)

    use_power = not freeze_beamformer
    use_rc = not freeze_rates
    active = np.ones(prob.n, dtype=bool)
    if freeze_beamformer:
        active[: prob.nF] = False
    if freeze_rates:
        active[prob.nF:] = False

    # a start pinned to the boundary cannot seed a log barrier; the warm
    # start itself is then the best certifiable point
    _, s_pow0, s_t0, r0, _, _, _ = prob.state(z)
    if (s_pow0 <= 0.0 or np.min(s_t0) <= 0.0
            or (use_rc and np.min(r0) <= 0.0)):
        fmat, r = prob.to_matrices(z_warm)
        return SubproblemResult(
            beamformer=Beamformer(fmat), rates=RateAllocation(np.clip(r, 0.0, None)),
            objective=ghat_warm, kkt_residual=np.inf,
            duality_measure=np.inf, used_fallback=True, trace=[])

    trace = []
    m = (1 if use_power else 0) + prob.K + (prob.K if use_rc else 0)
    t_final = cfg.final_barrier_weight
    weights = [cfg.barrier_start * cfg.barrier_mult**s
               for s in range(cfg.max_outer_iters)]

    lam2 = np.inf
    for stage, t in enumerate(weights):
        z, iters, lam2 = _newton(prob, z, t, cfg, use_power, use_rc, active, stage)
        if collect_trace:
            ghat_now, s_pow, s_t, r, _, _, _ = prob.state(z)
            viol = max(0.0, -s_pow, float(np.max(-s_t)), float(np.max(-r)))
            trace.append((stage, iters, ghat_now, viol))

    ghat_final = prob.state(z)[0]
    if ghat_final < ghat_warm:
        fmat, r = prob.to_matrices(z_warm)
        return SubproblemResult(
            beamformer=Beamformer(fmat), rates=RateAllocation(r),
            objective=ghat_warm, kkt_residual=lam2 / 2.0,
            duality_measure=m / t_final, used_fallback=True, trace=trace)
    fmat, r = prob.to_matrices(z)
    return SubproblemResult(
        beamformer=Beamformer(fmat), rates=RateAllocation(np.clip(r, 0.0, None)),
        objective=ghat_final, kkt_residual=lam2 / 2.0,
        duality_measure=m / t_final, used_fallback=False, trace=trace)
