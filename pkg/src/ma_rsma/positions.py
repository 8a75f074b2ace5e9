"""Two-stage search over transmit antenna positions.

Stage one enumerates sorted subsets of a coarse grid (one wavelength apart
by default) and keeps the best after a single optimization pass.  Stage two
nudges positions along the analytic gradient of the surrogate objective,
shrinking the step by 1.5 whenever the proposal fails to improve or leaves
the feasible region.
"""

from dataclasses import dataclass
from itertools import combinations
import logging

import numpy as np

from .channel import AntennaLayout, channel_matrix, conj_channel_derivative
from .metrics import LN2, Beamformer, common_constraint_values, mf_outputs, reformulated_total
from .solver import SolverError

log = logging.getLogger(__name__)


def coarse_grid_points(params, spacing):
    """Grid x_min, x_min + s, ... up to x_max (guarded against float floor)."""
    span = params.x_max - params.x_min
    count = int(np.floor(span / spacing + 1e-9)) + 1
    return params.x_min + spacing * np.arange(count)


def enumerate_coarse_grid(params, spacing=None):
    """All sorted N_T-subsets of the coarse grid that satisfy the spacing
    constraint (every subset does when spacing >= min_spacing)."""
    if spacing is None:
        spacing = params.wavelength
    points = coarse_grid_points(params, spacing)
    n = params.num_tx_antennas
    if points.size < n:
        raise ValueError("coarse grid has %d points, need %d" % (points.size, n))
    layouts = []
    for combo in combinations(points, n):
        x = np.asarray(combo)
        if x.size > 1 and np.min(np.diff(x)) < params.min_spacing - 1e-12:
            continue
        layouts.append(AntennaLayout(x))
    if not layouts:
        raise ValueError("no coarse candidate satisfies the spacing constraint")
    return layouts


def coarse_select(candidates, score, tie_tol=1e-8):
    """Best candidate by score; near-ties (within tie_tol) go to the
    lexicographically smallest position vector.

    ``score`` maps a layout to a float and may raise SolverError; failed
    candidates are logged and skipped.
    """
    if not candidates:
        raise ValueError("empty candidate list")
    ordered = sorted(candidates, key=lambda lay: tuple(lay.positions))
    best = None
    best_score = -np.inf
    failures = 0
    for layout in ordered:
        try:
            value = score(layout)
        except SolverError as exc:
            failures += 1
            log.warning("coarse candidate %s failed: %s", layout.positions, exc)
            continue
        if value > best_score + tie_tol:
            best, best_score = layout, value
    if best is None:
        raise SolverError("all %d coarse candidates failed" % failures)
    return best, best_score


def objective_gradient(layout, scenario, beamformer, alpha, beta):
    """Gradient of the surrogate objective in the antenna positions.

    With u_kj = h_k^H f_j and g_kn the position derivative of conj(h_k[n]),
    entry n is (2/ln2) sum_k [ sqrt(a_k+1) Re(conj(b_k) g_kn F[n,k])
    - |b_k|^2 sum_j Re(conj(u_kj) g_kn F[n,j]) ].
    """
    fmat = beamformer.matrix
    K = fmat.shape[1] - 1
    channels = channel_matrix(scenario, layout)
    deriv = conj_channel_derivative(scenario, layout)
    fp = fmat[:, :K]
    up = mf_outputs(channels, fmat)[:, :K]
    t1 = np.sqrt(np.asarray(alpha) + 1.0)[:, None] * np.real(
        np.conj(beta)[:, None] * deriv * fp.T)
    w = fp @ np.conj(up).T
    t2 = (np.abs(beta) ** 2)[:, None] * np.real(deriv * w.T)
    return (2.0 / LN2) * (t1 - t2).sum(axis=0)


@dataclass
class AscentState:
    positions: AntennaLayout
    kappa: float | None = None      # None: pick 0.1 wavelength / |gradient|
    kappa_min: float = 1e-7


@dataclass
class AscentOutcome:
    state: AscentState
    beamformer: Beamformer          # rows permuted when the sort reordered
    objective: float
    stalled: bool
    rejections: int


def ascend_positions(state, scenario, beamformer, rates, aux, prev_objective=None,
                     kappa0_wavelengths=0.1):
    """One accepted gradient step on the positions, or a stall.

    A proposal x + kappa * grad is accepted only if it stays in the feasible
    region (box, spacing, and the reformulated common-rate constraints at
    the current mu, eta) and strictly improves the surrogate; otherwise
    kappa shrinks by 1.5 until it drops below kappa_min.
    """
    params = scenario.params
    noise = params.noise_vector()
    x = state.positions.positions
    fmat = beamformer.matrix
    r_total = float(np.sum(rates.r_c))

    if prev_objective is None:
        channels = channel_matrix(scenario, state.positions)
        prev_objective = reformulated_total(channels, fmat, rates.r_c, aux.alpha,
                                            aux.beta, noise)

    grad = objective_gradient(state.positions, scenario, beamformer, aux.alpha, aux.beta)
    norm = float(np.linalg.norm(grad))
    kappa = state.kappa
    if kappa is None:
        kappa = kappa0_wavelengths * params.wavelength / (norm + 1e-12)
    if norm == 0.0:
        return AscentOutcome(AscentState(state.positions, kappa, state.kappa_min),
                             beamformer, prev_objective, True, 0)

    rejections = 0
    while kappa >= state.kappa_min:
        raw = x + kappa * grad
        order = np.argsort(raw, kind="stable")
        cand = raw[order]
        ok = (cand[0] >= params.x_min and cand[-1] <= params.x_max
              and (cand.size < 2 or np.min(np.diff(cand)) >= params.min_spacing))
        if ok:
            # surplus and surrogate are invariant under the antenna sort, so
            # evaluate at the raw proposal with the unpermuted beamformer
            channels = channel_matrix(scenario, AntennaLayout(raw))
            t_vec = common_constraint_values(channels, fmat, aux.mu, aux.eta, noise)
            ok = bool(np.all(t_vec - LN2 * r_total >= 0.0))
        if ok:
            value = reformulated_total(channels, fmat, rates.r_c, aux.alpha,
                                       aux.beta, noise)
            if value > prev_objective:
                new_f = Beamformer(fmat[order, :])
                new_state = AscentState(AntennaLayout(raw[order]), kappa, state.kappa_min)
                return AscentOutcome(new_state, new_f, float(value), False, rejections)
        kappa /= 1.5
        rejections += 1
    return AscentOutcome(AscentState(state.positions, kappa, state.kappa_min),
                         beamformer, prev_objective, True, rejections)
