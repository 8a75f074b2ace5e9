"""Rate and objective bookkeeping for 1-layer rate splitting.

The transmitter sends one common stream plus K private streams through the
beamforming matrix F (columns f_1..f_K, f_c last).  Every user first decodes
the common stream treating all private streams as noise, strips it, then
decodes its own private stream.  All public rates are base-2; the natural-log
machinery of the reformulated objective carries explicit 1/ln2 factors.
"""

from dataclasses import dataclass

import numpy as np

from .channel import channel_matrix

LN2 = float(np.log(2.0))

# Default absolute tolerances: power/rate at the interior-point accuracy
# floor, geometry tighter because positions are exact arithmetic.
POWER_TOL = 1e-7
RATE_TOL = 1e-7
GEOM_TOL = 1e-9


@dataclass
class Beamformer:
    """Beamforming matrix, shape (N_T, K+1); last column is the common one."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.matrix.ndim != 2 or self.matrix.shape[1] < 2:
            raise ValueError("beamformer must be (N_T, K+1) with K >= 1")

    @property
    def num_users(self):
        return self.matrix.shape[1] - 1

    @property
    def private(self):
        return self.matrix[:, : self.num_users]

    @property
    def common(self):
        return self.matrix[:, self.num_users]

    @property
    def power(self):
        return float(np.sum(np.abs(self.matrix) ** 2))

    def copy(self):
        return Beamformer(self.matrix.copy())


@dataclass
class RateAllocation:
    """Per-user slices of the common rate, bits/s/Hz, nonnegative."""

    r_c: np.ndarray

    def __post_init__(self):
        self.r_c = np.asarray(self.r_c, dtype=float)

    @property
    def total(self):
        return float(np.sum(self.r_c))

    def copy(self):
        return RateAllocation(self.r_c.copy())


def zero_allocation(num_users):
    return RateAllocation(np.zeros(num_users))


def mf_outputs(channels, fmat):
    """Matched-filter outputs h_k^H f_j for all users and streams.

    channels has user channels as rows (K, N_T); returns (K, K+1).
    """
    return np.conj(channels) @ fmat


def sinr_arrays(outputs, noise):
    """Private and common SINR vectors from the matched-filter outputs.

    The common stream is decoded first, so its interference is the full
    private power; the private streams see the other K-1 privates only.
    """
    K = outputs.shape[1] - 1
    if outputs.shape[0] != K:
        raise ValueError("outputs must be square-plus-one: (K, K+1)")
    power = np.abs(outputs) ** 2
    priv = power[:, :K]
    own = np.diagonal(priv)
    total_priv = priv.sum(axis=1) + noise
    sinr_p = own / (total_priv - own)
    sinr_c = power[:, K] / total_priv
    return sinr_p, sinr_c


def sinr_private(h_k, fmat, noise_k, k):
    """|h_k^H f_k|^2 over the other private streams plus noise."""
    if noise_k <= 0:
        raise ValueError("noise power must be positive")
    u = np.conj(h_k) @ fmat
    K = fmat.shape[1] - 1
    p = np.abs(u[:K]) ** 2
    return float(p[k] / (p.sum() - p[k] + noise_k))


def sinr_common(h_k, fmat, noise_k):
    """|h_k^H f_c|^2 over all private streams plus noise."""
    if noise_k <= 0:
        raise ValueError("noise power must be positive")
    u = np.conj(h_k) @ fmat
    K = fmat.shape[1] - 1
    return float(np.abs(u[K]) ** 2 / ((np.abs(u[:K]) ** 2).sum() + noise_k))


@dataclass
class RateReport:
    sinr_private: np.ndarray   # (K,)
    sinr_common: np.ndarray    # (K,)
    r_p: np.ndarray            # (K,) private rates, log2(1+sinr_p)
    r_c_cap: np.ndarray        # (K,) per-user common capacity log2(1+sinr_c)
    r_c: np.ndarray            # (K,) allocated common slices
    sum_rate: float
    common_cap: float          # min_k r_c_cap
    saturated_sum_rate: float  # sum r_p + common_cap

    def csv_header(self):
        K = self.r_p.size
        cols = ["sum_rate", "common_cap", "saturated_sum_rate"]
        cols += ["r_p_%d" % k for k in range(K)]
        cols += ["r_c_%d" % k for k in range(K)]
        return ",".join(cols)

    def csv_row(self):
        vals = [self.sum_rate, self.common_cap, self.saturated_sum_rate]
        vals += list(self.r_p) + list(self.r_c)
        return ",".join("%.12g" % v for v in vals)


def rate_report(channels, beamformer, rates, noise):
    outputs = mf_outputs(channels, beamformer.matrix)
    sinr_p, sinr_c = sinr_arrays(outputs, noise)
    r_p = np.log2(1.0 + sinr_p)
    r_c_cap = np.log2(1.0 + sinr_c)
    cap = float(np.min(r_c_cap))
    return RateReport(
        sinr_private=sinr_p,
        sinr_common=sinr_c,
        r_p=r_p,
        r_c_cap=r_c_cap,
        r_c=rates.r_c.copy(),
        sum_rate=float(r_p.sum() + rates.total),
        common_cap=cap,
        saturated_sum_rate=float(r_p.sum() + cap),
    )


def achieved_sum_rate(scenario, layout, beamformer, rates):
    """Full rate report at a layout: private rates plus the allocated common
    slices, and the saturated variant where the common budget is maxed out."""
    channels = channel_matrix(scenario, layout)
    return rate_report(channels, beamformer, rates, scenario.params.noise_vector())


def reformulated_parts(channels, fmat, rates, alpha, beta, noise):
    """The three pieces of the quadratic-transform objective.

    base = (1/ln2) sum[ln(1+a_k) - a_k] + sum r_c;
    linear_k = sqrt(a_k+1) Re(conj(b_k) h_k^H f_k);
    quad_k = |b_k|^2 (sum_j |h_k^H f_j|^2 + noise_k).
    Total = base + (2/ln2) sum linear - (1/ln2) sum quad.
    """
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= -1.0):
        raise ValueError("alpha must stay above -1")
    K = fmat.shape[1] - 1
    outputs = mf_outputs(channels, fmat)
    own = np.diagonal(outputs[:, :K])
    linear = np.sqrt(alpha + 1.0) * np.real(np.conj(beta) * own)
    quad = (np.abs(beta) ** 2) * ((np.abs(outputs[:, :K]) ** 2).sum(axis=1) + noise)
    base = float(np.sum(np.log(1.0 + alpha) - alpha) / LN2 + np.sum(rates))
    return base, linear, quad


def reformulated_objective(fmat, rates, layout, alpha, beta, scenario):
    """Surrogate sum rate (bits/s/Hz) for fixed auxiliaries; equals the
    achieved sum rate when the auxiliaries sit at their closed-form values."""
    channels = channel_matrix(scenario, layout)
    noise = scenario.params.noise_vector()
    base, linear, quad = reformulated_parts(channels, fmat, rates, alpha, beta, noise)
    return base + (2.0 / LN2) * float(linear.sum()) - float(quad.sum()) / LN2


def reformulated_total(channels, fmat, rates, alpha, beta, noise):
    base, linear, quad = reformulated_parts(channels, fmat, rates, alpha, beta, noise)
    return base + (2.0 / LN2) * float(linear.sum()) - float(quad.sum()) / LN2


def common_constraint_values(channels, fmat, mu, eta, noise):
    """t_k for every user, in nats.

    t_k = ln(1+m_k) - m_k + 2 sqrt(m_k+1) Re(conj(e_k) h_k^H f_c)
          - |e_k|^2 (sum_j |h_k^H f_j|^2 + |h_k^H f_c|^2 + noise_k).
    The common-rate constraint reads t_k >= ln2 * sum r_c.
    """
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= -1.0):
        raise ValueError("mu must stay above -1")
    K = fmat.shape[1] - 1
    outputs = mf_outputs(channels, fmat)
    common = outputs[:, K]
    denom = (np.abs(outputs[:, :K]) ** 2).sum(axis=1) + np.abs(common) ** 2 + noise
    return (
        np.log(1.0 + mu)
        - mu
        + 2.0 * np.sqrt(mu + 1.0) * np.real(np.conj(eta) * common)
        - (np.abs(eta) ** 2) * denom
    )


def common_constraint_surplus(fmat, rates, layout, mu, eta, scenario, k=None):
    """t_k minus ln2 * sum(r_c); nonnegative iff the reformulated
    common-rate constraint holds.  Returns the vector unless k is given."""
    channels = channel_matrix(scenario, layout)
    noise = scenario.params.noise_vector()
    t = common_constraint_values(channels, fmat, mu, eta, noise)
    surplus = t - LN2 * float(np.sum(rates))
    if k is None:
        return surplus
    return float(surplus[k])


@dataclass
class ConstraintCheck:
    name: str
    ok: bool
    slack: float


@dataclass
class FeasibilityReport:
    checks: list

    @property
    def all_ok(self):
        return all(c.ok for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.ok]

    def __str__(self):
        return "; ".join(
            "%s %s (slack %.3g)" % (c.name, "ok" if c.ok else "VIOLATED", c.slack)
            for c in self.checks
        )


def check_feasibility(layout, beamformer, rates, scenario,
                      power_tol=POWER_TOL, rate_tol=RATE_TOL, geom_tol=GEOM_TOL):
    """Per-constraint report for the original problem: power budget,
    common-rate cap in its log2 form, nonnegative r_c, box and spacing.

    Slack is the satisfied margin; negative slack means violation beyond its
    tolerance column, but each check's boolean already folds the tolerance in.
    """
    params = scenario.params
    x = layout.positions
    checks = []

    slack = params.power_budget_w - beamformer.power
    checks.append(ConstraintCheck("power", slack >= -power_tol * params.power_budget_w, slack))

    report = achieved_sum_rate(scenario, layout, beamformer, rates)
    slack = report.common_cap - rates.total
    checks.append(ConstraintCheck("common_rate", slack >= -rate_tol, slack))

    slack = float(np.min(rates.r_c)) if rates.r_c.size else 0.0
    checks.append(ConstraintCheck("r_c_nonneg", slack >= -rate_tol, slack))

    slack = float(min(np.min(x) - params.x_min, params.x_max - np.max(x)))
    checks.append(ConstraintCheck("box", slack >= -geom_tol, slack))

    if x.size > 1:
        slack = float(np.min(np.diff(np.sort(x))) - params.min_spacing)
    else:
        slack = 0.0
    checks.append(ConstraintCheck("spacing", slack >= -geom_tol, slack))

    return FeasibilityReport(checks)
