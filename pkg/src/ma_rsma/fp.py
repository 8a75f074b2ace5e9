"""Closed-form updates of the fractional-programming auxiliaries.

The quadratic transform introduces (alpha, beta) per private stream and
(mu, eta) per user for the common stream.  With everything else fixed the
optimal values are the current SINRs (alpha, mu) and scaled matched-filter
ratios (beta, eta); plugging them back makes the surrogate objective equal
the true sum rate and t_k equal ln(1+SINR_c,k).
"""

from dataclasses import dataclass

import numpy as np

from .channel import channel_matrix
from .metrics import mf_outputs, sinr_arrays


@dataclass
class AuxState:
    alpha: np.ndarray  # (K,) private SINR targets
    beta: np.ndarray   # (K,) complex
    mu: np.ndarray     # (K,) common SINR targets
    eta: np.ndarray    # (K,) complex

    def copy(self):
        return AuxState(self.alpha.copy(), self.beta.copy(),
                        self.mu.copy(), self.eta.copy())


def _sinrs(channels, fmat, noise):
    outputs = mf_outputs(channels, fmat)
    return outputs, sinr_arrays(outputs, noise)


def alpha_from_channels(channels, fmat, noise):
    _, (sinr_p, _) = _sinrs(channels, fmat, noise)
    return sinr_p


def mu_from_channels(channels, fmat, noise):
    _, (_, sinr_c) = _sinrs(channels, fmat, noise)
    return sinr_c


def beta_from_channels(channels, fmat, noise, alpha):
    """beta_k = sqrt(1+alpha_k) h_k^H f_k / (sum_j |h_k^H f_j|^2 + noise_k)."""
    K = fmat.shape[1] - 1
    outputs = mf_outputs(channels, fmat)
    own = np.diagonal(outputs[:, :K])
    denom = (np.abs(outputs[:, :K]) ** 2).sum(axis=1) + noise
    return np.sqrt(np.asarray(alpha) + 1.0) * own / denom


def eta_from_channels(channels, fmat, noise, mu):
    """Like beta for the common stream; the denominator additionally counts
    the common stream's own power."""
    K = fmat.shape[1] - 1
    outputs = mf_outputs(channels, fmat)
    common = outputs[:, K]
    denom = (np.abs(outputs) ** 2).sum(axis=1) + noise
    return np.sqrt(np.asarray(mu) + 1.0) * common / denom


def init_aux(channels, fmat, noise):
    """Fresh auxiliaries: SINR-valued alpha, mu first, then beta, eta from
    them, so the very first surrogate evaluation is already tight."""
    outputs, (sinr_p, sinr_c) = _sinrs(channels, fmat, noise)
    K = fmat.shape[1] - 1
    own = np.diagonal(outputs[:, :K])
    denom_p = (np.abs(outputs[:, :K]) ** 2).sum(axis=1) + noise
    beta = np.sqrt(sinr_p + 1.0) * own / denom_p
    eta = np.sqrt(sinr_c + 1.0) * outputs[:, K] / (denom_p + np.abs(outputs[:, K]) ** 2)
    return AuxState(alpha=sinr_p, beta=beta, mu=sinr_c, eta=eta)


def refresh_aux(channels, fmat, noise):
    """Alias of init_aux: the closed-form refresh run after every solve."""
    return init_aux(channels, fmat, noise)


def update_alpha(scenario, layout, beamformer):
    channels = channel_matrix(scenario, layout)
    return alpha_from_channels(channels, beamformer.matrix, scenario.params.noise_vector())


def update_mu(scenario, layout, beamformer):
    channels = channel_matrix(scenario, layout)
    return mu_from_channels(channels, beamformer.matrix, scenario.params.noise_vector())


def update_beta(scenario, layout, beamformer, alpha):
    channels = channel_matrix(scenario, layout)
    return beta_from_channels(channels, beamformer.matrix, scenario.params.noise_vector(), alpha)


def update_eta(scenario, layout, beamformer, mu):
    channels = channel_matrix(scenario, layout)
    return eta_from_channels(channels, beamformer.matrix, scenario.params.noise_vector(), mu)
