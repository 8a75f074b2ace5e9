"""Multipath channel model for a downlink with movable transmit antennas.

Each user sees L_p planar wavefronts.  A transmit antenna sitting at
position x on the linear aperture contributes a phase 2*pi/lambda * x *
cos(theta) per path, so moving the antennas reshapes every user's channel
vector without changing the path gains.
"""

from dataclasses import asdict, dataclass
import hashlib
import json

import numpy as np

# Reference distance span for user drops, meters.
DIST_RANGE = (20.0, 100.0)


def dbm_to_watts(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(watts) + 30.0


@dataclass
class SystemParams:
    """Static description of the system: geometry, power and noise.

    Antenna positions live on the segment [x_min, x_max] (meters) and must
    keep at least ``min_spacing`` between neighbours.  ``ref_gain`` is the
    expected channel power at 1 m; when left as None it is derived from the
    wavelength as (wavelength / (4 * pi^2)) ** 2.
    """

    num_users: int = 4
    num_tx_antennas: int = 4
    num_paths: int = 8
    wavelength: float = 0.1
    power_budget_w: float = 1.0
    noise_power_w: float = 1e-12
    min_spacing: float | None = None
    x_min: float = 0.0
    x_max: float | None = None
    path_loss_exp: float = 2.8
    ref_gain: float | None = None

    def __post_init__(self):
        if self.min_spacing is None:
            self.min_spacing = self.wavelength / 2.0
        if self.x_max is None:
            self.x_max = self.x_min + 8.0 * self.wavelength
        if self.ref_gain is None:
            self.ref_gain = (self.wavelength / (4.0 * np.pi**2)) ** 2
        self.validate()

    def validate(self):
        if self.num_users < 1 or self.num_tx_antennas < 1 or self.num_paths < 1:
            raise ValueError("num_users, num_tx_antennas and num_paths must be >= 1")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if self.power_budget_w <= 0:
            raise ValueError("power budget must be positive")
        noise = np.atleast_1d(np.asarray(self.noise_power_w, dtype=float))
        if noise.size not in (1, self.num_users) or np.any(noise <= 0):
            raise ValueError("noise power must be positive, scalar or per user")
        if self.min_spacing <= 0:
            raise ValueError("min_spacing must be positive")
        aperture = self.x_max - self.x_min
        if aperture < (self.num_tx_antennas - 1) * self.min_spacing:
            raise ValueError(
                "aperture %.4g m cannot hold %d antennas at spacing %.4g m"
                % (aperture, self.num_tx_antennas, self.min_spacing)
            )

    def noise_vector(self):
        """Per-user noise powers as a (K,) array."""
        noise = np.atleast_1d(np.asarray(self.noise_power_w, dtype=float))
        if noise.size == 1:
            noise = np.full(self.num_users, noise[0])
        return noise

    @property
    def wavenumber(self):
        return 2.0 * np.pi / self.wavelength


@dataclass
class ChannelScenario:
    """One random draw of path gains, angles and user distances."""

    params: SystemParams
    gains: np.ndarray      # (K, L_p) complex path gains rho
    angles: np.ndarray     # (K, L_p) angles of departure, radians
    distances: np.ndarray  # (K,) user distances, meters
    seed: int | None = None

    def __post_init__(self):
        K, L = self.params.num_users, self.params.num_paths
        if self.gains.shape != (K, L) or self.angles.shape != (K, L):
            raise ValueError("gains and angles must have shape (K, L_p)")
        if self.distances.shape != (K,):
            raise ValueError("distances must have shape (K,)")


def generate_scenario(params, seed):
    """Draw a random scenario: distances, departure angles, path gains.

    Distances are uniform on DIST_RANGE, angles uniform on
    [-pi/2, pi/2], and each path gain is CN(0, C_k^2 / L_p) with
    C_k^2 = ref_gain * D_k^(-path_loss_exp), so the expected total path
    power per user equals C_k^2.
    """
    rng = np.random.default_rng(seed)
    K, L = params.num_users, params.num_paths
    distances = rng.uniform(DIST_RANGE[0], DIST_RANGE[1], size=K)
    angles = rng.uniform(-np.pi / 2.0, np.pi / 2.0, size=(K, L))
    c2 = params.ref_gain * distances ** (-params.path_loss_exp)
    scale = np.sqrt(c2 / (2.0 * L))[:, None]
    gains = scale * (rng.standard_normal((K, L)) + 1j * rng.standard_normal((K, L)))
    return ChannelScenario(params, gains, angles, distances, seed=seed)


def scenario_to_json(scenario):
    """Serialize a scenario (gains as re/im pairs) for reproducibility."""
    doc = {
        "params": asdict(scenario.params),
        "seed": scenario.seed,
        "distances_m": scenario.distances.tolist(),
        "angles_rad": scenario.angles.tolist(),
        "gains_re": scenario.gains.real.tolist(),
        "gains_im": scenario.gains.imag.tolist(),
    }
    return json.dumps(doc, indent=2)


def scenario_from_json(text):
    doc = json.loads(text)
    params = SystemParams(**doc["params"])
    gains = np.asarray(doc["gains_re"]) + 1j * np.asarray(doc["gains_im"])
    return ChannelScenario(params, gains, np.asarray(doc["angles_rad"]),
                          np.asarray(doc["distances_m"]), seed=doc["seed"])


def derive_seed(base_seed, axis_value, trial):
    """Stable per-trial seed, independent of scheme and worker count."""
    tag = "%s:%r:%d" % (base_seed, axis_value, trial)
    digest = hashlib.sha256(tag.encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class AntennaLayout:
    """Transmit antenna positions on the aperture, sorted ascending."""

    positions: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)

    def check(self, params, tol=1e-9):
        """Raise ValueError unless positions are sorted, inside the box and
        no closer than min_spacing (all up to tol)."""
        x = self.positions
        if x.shape != (params.num_tx_antennas,):
            raise ValueError("layout must hold %d positions" % params.num_tx_antennas)
        if np.any(np.diff(x) < -tol):
            raise ValueError("positions must be sorted ascending")
        if np.any(x < params.x_min - tol) or np.any(x > params.x_max + tol):
            raise ValueError("positions leave the aperture box")
        if x.size > 1 and np.min(np.diff(x)) < params.min_spacing - tol:
            raise ValueError("antenna spacing below min_spacing")


def equispaced_layout(params, spacing):
    """Equispaced layout anchored at x_min; the spacing shrinks when the
    requested one does not fit the aperture."""
    n = params.num_tx_antennas
    if n > 1:
        spacing = min(spacing, (params.x_max - params.x_min) / (n - 1))
    x = params.x_min + spacing * np.arange(n)
    return AntennaLayout(x)


def field_response_vector(x_i, angles, wavelength):
    """Per-path transmit phases of one antenna at position x_i: entry l is
    exp(j * (2 pi / wavelength) * x_i * cos(angles[l]))."""
    angles = np.asarray(angles, dtype=float)
    if not (np.isfinite(x_i) and np.all(np.isfinite(angles)) and wavelength > 0):
        raise ValueError("positions, angles and wavelength must be finite, wavelength > 0")
    return np.exp(1j * (2.0 * np.pi / wavelength) * x_i * np.cos(angles))


def field_response_matrix(layout, angles, wavelength):
    """Stack of field-response vectors, shape (L_p, N_T); column i belongs
    to the antenna at layout.positions[i]."""
    angles = np.asarray(angles, dtype=float)
    phase = (2.0 * np.pi / wavelength) * np.outer(np.cos(angles), layout.positions)
    return np.exp(1j * phase)


def user_channel(layout, scenario, k):
    """Channel vector of user k at the given layout, length N_T."""
    if not 0 <= k < scenario.params.num_users:
        raise IndexError("user index out of range")
    frm = field_response_matrix(layout, scenario.angles[k], scenario.params.wavelength)
    return np.conj(frm).T @ scenario.gains[k]


def channel_matrix(scenario, layout):
    """Channels for every user at the given layout, shape (K, N_T).

    Entry (k, i) is sum_l rho_{k,l} * exp(-j * k0 * x_i * cos(theta_{k,l})).
    """
    params = scenario.params
    x = layout.positions
    # (K, N_T, L_p) phases; contract over paths
    phase = params.wavenumber * x[None, :, None] * np.cos(scenario.angles)[:, None, :]
    return np.einsum("kl,knl->kn", scenario.gains, np.exp(-1j * phase))


def conj_channel_derivative(scenario, layout):
    """Derivative of conj(h_k[n]) in the position x_n, shape (K, N_T).

    conj(h_k[n]) = sum_l conj(rho_{k,l}) exp(+j k0 x_n cos(theta_{k,l})),
    so the derivative multiplies each term by j * k0 * cos(theta_{k,l}).
    """
    params = scenario.params
    x = layout.positions
    cosang = np.cos(scenario.angles)
    phase = params.wavenumber * x[None, :, None] * cosang[:, None, :]
    factors = np.conj(scenario.gains) * (1j * params.wavenumber * cosang)
    return np.einsum("kl,knl->kn", factors, np.exp(1j * phase))
