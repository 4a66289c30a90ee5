"""Closed-form detection and key-rate formulas for the five-node relay.

Intensity convention
--------------------
Every `mu`/`nu` parameter in this package is the PER-USER pulse intensity:
each user prepares a coherent state of mean photon number mu, exactly as in
the protocol definition and in the bundled experiment tables.  The yield and
gain formulas are written for the users' combined intensity, so internally
they evaluate at 2*mu; the slice-error bound is written directly in the
per-user intensity.  The combined intensity also drives the Poisson
single-photon fraction in the phase-error bound.

The symmetric setting (eta1 = eta4, eta2 = eta3) is assumed by the yield and
gain formulas; branch_weights covers the general asymmetric interference
algebra.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

from .source import SourceModel, UndefinedStatisticError

DEFAULT_DARK_RATE = 2.78e-8   # per detector per window
DEFAULT_F_EC = 1.15
DEFAULT_D_PHASES = 16
PULSE_RATE_HZ = 200e6         # effective signal-pulse rate


def binary_entropy(x: float) -> float:
    """h(x) = -x log2 x - (1-x) log2 (1-x), with h(0) = h(1) = 0."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"binary entropy needs x in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def dark_rate_per_window(rate_hz: float = 60.0,
                         pulse_rate_hz: float = PULSE_RATE_HZ) -> float:
    """Convert a detector dark-count rate in Hz to a per-window probability."""
    return rate_hz / pulse_rate_hz


@dataclass(frozen=True)
class LinkBudget:
    """Transmittances of the four fiber spans plus detection parameters.

    eta1/eta4: user -> measurement node; eta2/eta3: source -> measurement
    node.  p_d is per detector per window; e_extra is an additive error
    fraction covering modulation and synchronization imperfections.
    """

    eta1: float
    eta2: float
    eta3: float
    eta4: float
    eta_d: float = 1.0
    p_d: float = DEFAULT_DARK_RATE
    e_extra: float = 0.0

    def __post_init__(self):
        for name in ("eta1", "eta2", "eta3", "eta4", "eta_d"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if not 0.0 <= self.p_d <= 1e-3:
            raise ValueError(f"p_d must be in [0, 1e-3], got {self.p_d}")
        if not 0.0 <= self.e_extra <= 0.5:
            raise ValueError(f"e_extra must be in [0, 0.5], got {self.e_extra}")

    @classmethod
    def symmetric(cls, eta_user: float, eta_source: float, **kw) -> "LinkBudget":
        return cls(eta1=eta_user, eta2=eta_source, eta3=eta_source,
                   eta4=eta_user, **kw)

    def folded(self) -> "LinkBudget":
        """Fold the detector efficiency into the span transmittances.

        Both the user and the source paths terminate on the same detectors,
        so eta_d multiplies every span.
        """
        return replace(self, eta1=self.eta1 * self.eta_d,
                       eta2=self.eta2 * self.eta_d,
                       eta3=self.eta3 * self.eta_d,
                       eta4=self.eta4 * self.eta_d, eta_d=1.0)

    @property
    def is_symmetric(self) -> bool:
        return self.eta1 == self.eta4 and self.eta2 == self.eta3


@dataclass(frozen=True)
class ProtocolConstants:
    """Protocol-level knobs: phase slices, intensities, error correction."""

    mu: float
    nu: float
    p_mu: float = 0.751
    p_nu: float = 0.160
    d_phases: int = DEFAULT_D_PHASES
    f_ec: float = DEFAULT_F_EC

    def __post_init__(self):
        if self.d_phases < 2 or self.d_phases % 2:
            raise ValueError("d_phases must be even and >= 2")
        if self.f_ec < 1.0:
            raise ValueError("f_ec must be >= 1")
        if not 0.0 <= self.nu < self.mu:
            raise ValueError(f"intensities must satisfy 0 <= nu < mu, "
                             f"got nu={self.nu}, mu={self.mu}")
        if self.p_mu < 0 or self.p_nu < 0 or self.p_mu + self.p_nu > 1.0:
            raise ValueError("sending probabilities must be in [0,1] and sum <= 1")


# --- interference branch algebra (general, asymmetric) -----------------------

def branch_weights(alpha: complex, beta: complex,
                   links: LinkBudget) -> tuple[float, float, float]:
    """Weights of the three orthogonal post-selected branches.

    w_match drives same-side coincidences, w_mismatch cross-side ones, and
    w_leak (the single photon lost in its channel) splits 50:50 and carries
    the intrinsic error.  alpha/beta are the users' encoder amplitudes.
    """
    mu_a = abs(alpha) ** 2 * links.eta1
    mu_b = abs(beta) ** 2 * links.eta4
    if max(mu_a, mu_b) > 0.1:
        warnings.warn("attenuated intensities above 0.1: outside the "
                      "weak-pulse regime these weights assume", stacklevel=2)
    ca = math.sqrt(links.eta1 * links.eta3) * alpha
    cb = math.sqrt(links.eta2 * links.eta4) * beta
    w_match = abs(ca + cb) ** 2
    w_mismatch = abs(ca - cb) ** 2
    w_leak = links.eta1 * links.eta4 * (2 - links.eta2 - links.eta3) * abs(alpha * beta) ** 2
    return w_match, w_mismatch, w_leak


def intensity_match(links: LinkBudget, beta_abs: float) -> float:
    """|alpha| Alice needs so both single-photon branches interfere fully:
    sqrt(eta1 eta3)|alpha| = sqrt(eta2 eta4)|beta|."""
    if links.eta1 * links.eta3 <= 0:
        raise ValueError("eta1*eta3 must be positive to match intensities")
    return math.sqrt(links.eta2 * links.eta4 / (links.eta1 * links.eta3)) * beta_abs


def error_from_weights(w_match: float, w_mismatch_is_signal: bool,
                       w_leak: float, w_signal: float) -> float:
    """Error fraction of valid coincidences given the branch weights.

    w_signal is the branch that encodes the correct outcome (match at phase
    difference 0, mismatch at pi); the leak branch errs half the time.
    """
    return w_leak / (w_signal + 2 * w_leak)


def symmetric_error_rate(mu_user: float, eta1: float, eta2: float) -> float:
    """Intrinsic error at matched intensities and symmetric losses:
    e = eta1 (1-eta2) mu / (2 eta2 + eta1 (1-eta2) mu), mu per user."""
    num = eta1 * (1.0 - eta2) * mu_user
    return num / (2.0 * eta2 + num)


# --- symmetric-setting yields and gains --------------------------------------

def pr_sde(eta1: float, eta2: float, t_emit: float) -> tuple[float, bool]:
    """Single-detection-event probability for a lone user photon.

    Pr(SDE) = eta1 (1 - T eta2) + (1 - eta1) T eta2 + eta1 T eta2 / 2.
    The printed sum can exceed 1 at extreme transmittances; it is clamped
    with a flag rather than renormalized.  Returns (value, clamped).
    """
    for v in (eta1, eta2, t_emit):
        if not 0.0 <= v <= 1.0:
            raise ValueError("pr_sde arguments must be in [0, 1]")
    p = eta1 * (1 - t_emit * eta2) + (1 - eta1) * t_emit * eta2 \
        + 0.5 * eta1 * t_emit * eta2
    if p > 1.0:
        return 1.0, True
    return p, False


def _pr_sde_mu(x: float, t_eta2: float) -> float:
    """Single-detection probability when users send intensity with
    per-side no-click amplitude exp(-x), x = eta1 * mu_user."""
    emx = math.exp(-x)
    return emx * (1 - t_eta2) * (1 - emx) + (1 - emx * (1 - t_eta2)) * emx


@dataclass(frozen=True)
class Breakdown:
    ideal: float
    dark: float
    leak: float

    @property
    def total(self) -> float:
        return self.ideal + self.dark + self.leak


def _leak_click_prob(links: LinkBudget, src: SourceModel) -> float:
    """Probability the pump leak fires a given site: intensity nu/2 reaches
    each side through eta2."""
    return -math.expm1(-0.5 * links.eta2 * src.nu_leak)


def yield_y1(links: LinkBudget, src: SourceModel) -> Breakdown:
    """Coincidence probability given the users emit one photon in total.

    Y1 = T eta1 eta2 / 2 + 2 p_d Pr(SDE) + (1 - e^{-eta2 nu/2}) Pr(SDE).
    Assumes the symmetric setting; pass links.folded() to include eta_d.
    """
    t = src.t_emit
    ideal = 0.5 * t * links.eta1 * links.eta2
    sde, _ = pr_sde(links.eta1, links.eta2, t)
    return Breakdown(ideal=ideal, dark=2 * links.p_d * sde,
                     leak=_leak_click_prob(links, src) * sde)


def gain_qmu(mu: float, links: LinkBudget, src: SourceModel) -> Breakdown:
    """Coincidence probability when each user sends intensity mu.

    With the combined intensity 2*mu the per-site no-click factor is
    e^{-eta1 mu}; Q_ideal = [1 - e^{-eta1 mu}(1 - T eta2)](1 - e^{-eta1 mu}).
    """
    if mu < 0:
        raise ValueError("mu must be >= 0")
    t_eta2 = src.t_emit * links.eta2
    x = links.eta1 * mu
    emx = math.exp(-x)
    ideal = (1 - emx * (1 - t_eta2)) * (1 - emx)
    sde = _pr_sde_mu(x, t_eta2)
    return Breakdown(ideal=ideal, dark=2 * links.p_d * sde,
                     leak=_leak_click_prob(links, src) * sde)


def e_mu_ideal(mu: float, links: LinkBudget, d_phases: int = DEFAULT_D_PHASES,
               t_emit: float = 1.0) -> float:
    """Slice-bounded intrinsic error of the ideal branch.

    e <= eta4 (2 - eta2 - eta3) mu / (4 eta3 cos^2(pi/2D) + 2 eta4 (...) mu),
    mu per user; the cos^2 factor accounts for the worst phase offset inside
    one of the D slices.  The formula treats an emission failure like a
    channel loss, so the source-path transmittances absorb t_emit: rounds
    without the relay photon give random coincidences exactly like rounds
    where it was lost in fiber.
    """
    e2, e3 = t_emit * links.eta2, t_emit * links.eta3
    num = links.eta4 * (2 - e2 - e3) * mu
    cos2 = math.cos(math.pi / (2 * d_phases)) ** 2
    return num / (4 * e3 * cos2 + 2 * num)


def e_mu_ideal_exact(mu: float, links: LinkBudget, t_emit: float = 1.0) -> float:
    """Intrinsic error at exactly matched announced phases (the discrete-
    phase protocol): the d -> infinity limit of e_mu_ideal."""
    e2, e3 = t_emit * links.eta2, t_emit * links.eta3
    num = links.eta4 * (2 - e2 - e3) * mu
    return num / (4 * e3 + 2 * num)


def error_emu(mu: float, links: LinkBudget, src: SourceModel,
              consts: ProtocolConstants, exact_phases: bool = False) -> float:
    """Total bit error rate E_mu, including e_extra, clamped to [0, 0.5].

    E = (e_ideal Q_ideal + (Q_dark + Q_leak)/2) / Q_total + e_extra.
    exact_phases selects the matched-phase error instead of the slice bound.
    """
    q = gain_qmu(mu, links, src)
    if q.total <= 0:
        raise UndefinedStatisticError("error rate undefined at zero gain")
    e_i = (e_mu_ideal_exact(mu, links, src.t_emit) if exact_phases
           else e_mu_ideal(mu, links, consts.d_phases, src.t_emit))
    e = (e_i * q.ideal + 0.5 * q.dark + 0.5 * q.leak) / q.total
    return min(0.5, e + links.e_extra)


def phase_error_bound(y1: float, q_mu: float, mu: float) -> tuple[float, float]:
    """Single-photon fraction and phase-error bound.

    q1 = Y1 * mu e^{-mu} / Q_mu  (mu = the Poisson intensity of the users'
    combined emission), clamped to [0, 1]; e_ph <= 1 - q1.
    """
    if q_mu <= 0:
        raise UndefinedStatisticError("phase error undefined at zero gain")
    q1 = min(1.0, max(0.0, y1 * mu * math.exp(-mu) / q_mu))
    return q1, 1.0 - q1


@dataclass(frozen=True)
class RateReport:
    """Every intermediate of the key-rate computation, plus the rate itself.

    rate_per_pulse is clamped at zero for curve plotting; rate_raw keeps the
    sign.  *_total fields are the sums of their ideal/dark/leak components.
    """

    y1_ideal: float
    y1_dark: float
    y1_leak: float
    y1_total: float
    q_mu_ideal: float
    q_mu_dark: float
    q_mu_leak: float
    q_mu_total: float
    e_mu_ideal: float
    e_mu_total: float
    q1: float
    e_phase_bound: float
    rate_per_pulse: float
    rate_per_sifted: float
    rate_raw: float


def key_rate_per_sifted(e_p: float, e_z: float, f: float = DEFAULT_F_EC) -> float:
    """r = 1 - h(e_p) - f h(e_z): final bits per sifted raw bit (may be
    negative)."""
    if not 0.0 <= e_p <= 0.5 or not 0.0 <= e_z <= 0.5:
        raise ValueError("error rates must be in [0, 0.5]")
    return 1.0 - binary_entropy(e_p) - f * binary_entropy(e_z)


def key_rate_per_pulse(report: RateReport, consts: ProtocolConstants) -> float:
    """r = (2 Q_mu / D)(1 - h(e_ph) - f h(E_mu)); negative clamps to 0."""
    r = (2.0 * report.q_mu_total / consts.d_phases) * key_rate_per_sifted(
        report.e_phase_bound, report.e_mu_total, consts.f_ec)
    return max(0.0, r)


def rate_report(links: LinkBudget, src: SourceModel, consts: ProtocolConstants,
                fold_detector_efficiency: bool = True) -> RateReport:
    """Assemble the full analytic report for one operating point."""
    lk = links.folded() if fold_detector_efficiency else links
    y1 = yield_y1(lk, src)
    q = gain_qmu(consts.mu, lk, src)
    e_mu = error_emu(consts.mu, lk, src, consts)
    q1, e_ph = phase_error_bound(y1.total, q.total, 2.0 * consts.mu)
    # e_ph may exceed 1/2 when multiphoton rounds dominate; h() handles it
    per_sifted = (1.0 - binary_entropy(e_ph)
                  - consts.f_ec * binary_entropy(e_mu))
    raw = (2.0 * q.total / consts.d_phases) * per_sifted
    return RateReport(
        y1_ideal=y1.ideal, y1_dark=y1.dark, y1_leak=y1.leak, y1_total=y1.total,
        q_mu_ideal=q.ideal, q_mu_dark=q.dark, q_mu_leak=q.leak, q_mu_total=q.total,
        e_mu_ideal=e_mu_ideal(consts.mu, lk, consts.d_phases, src.t_emit),
        e_mu_total=e_mu, q1=q1, e_phase_bound=e_ph,
        rate_per_pulse=max(0.0, raw), rate_per_sifted=per_sifted, rate_raw=raw)
