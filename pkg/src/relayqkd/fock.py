"""Exact small-Fock-space optics oracle.

Sparse multimode photon-number states with a hard per-mode cutoff, unitary
beam splitters, loss channels (beam splitter into a fresh environment mode),
and threshold-detector click statistics.  Everything downstream of the
analytic rate formulas is cross-checked against this module, so it stays
deliberately simple: dictionaries of occupation tuples -> complex amplitudes.

Intensities in this project are at most a few percent of a photon per mode,
so the default cutoff of 4 keeps truncation error below 1e-9.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_CUTOFF = 4
PRUNE_THRESHOLD = 1e-12

# Path labels of the five-node layout: users on A1/B1, the split single
# photon on A2/B2.  After the final beam splitters the same slots hold the
# detector ports (D1, D2 at site A; D3, D4 at site B).
MODE_A1, MODE_B1, MODE_A2, MODE_B2 = "A1", "B1", "A2", "B2"

# Beam-splitter sign conventions (columns are the two output ports).  The
# A-side splitter puts the minus on the second input, the B-side splitter
# puts it on the first input.
CONVENTION_A = +1
CONVENTION_B = -1


class ModeError(ValueError):
    """A referenced optical mode is missing or duplicated."""


@dataclass(frozen=True)
class FockVector:
    """Sparse state over an ordered list of optical modes.

    amps maps occupation tuples (one entry per mode, each <= cutoff) to
    complex amplitudes.  States are immutable; operations return new ones.
    """

    modes: tuple[str, ...]
    cutoff: int
    amps: dict[tuple[int, ...], complex] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.modes)) != len(self.modes):
            raise ModeError(f"duplicate mode labels in {self.modes}")

    def norm_sq(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.amps.values()))

    def index(self, mode: str) -> int:
        try:
            return self.modes.index(mode)
        except ValueError:
            raise ModeError(f"mode {mode!r} not in state (has {self.modes})") from None

    def prune(self, threshold: float = PRUNE_THRESHOLD) -> "FockVector":
        kept = {occ: a for occ, a in self.amps.items() if abs(a) > threshold}
        return FockVector(self.modes, self.cutoff, kept)

    def probabilities(self, keep_modes: tuple[str, ...] | None = None) -> dict:
        """Occupation probabilities, marginalized onto keep_modes."""
        if keep_modes is None:
            return {occ: abs(a) ** 2 for occ, a in self.amps.items()}
        idx = [self.index(m) for m in keep_modes]
        out: dict[tuple[int, ...], float] = {}
        for occ, a in self.amps.items():
            key = tuple(occ[i] for i in idx)
            out[key] = out.get(key, 0.0) + abs(a) ** 2
        return out

    def mode_mean_photons(self, mode: str) -> float:
        i = self.index(mode)
        return float(sum(occ[i] * abs(a) ** 2 for occ, a in self.amps.items()))


ClickPattern = tuple[bool, bool, bool, bool]  # (la, ra, lb, rb) = (D1, D2, D3, D4)

ALL_PATTERNS: tuple[ClickPattern, ...] = tuple(
    itertools.product((False, True), repeat=4)
)


def pattern_is_valid(p: ClickPattern) -> bool:
    """Exactly one click at each measurement site (the protocol rule)."""
    la, ra, lb, rb = p
    return (la != ra) and (lb != rb)


def pattern_is_same_side(p: ClickPattern) -> bool:
    la, ra, lb, rb = p
    return pattern_is_valid(p) and ((la and lb) or (ra and rb))


def pattern_is_cross_side(p: ClickPattern) -> bool:
    la, ra, lb, rb = p
    return pattern_is_valid(p) and ((la and rb) or (ra and lb))


def make_coherent(amplitude: complex, cutoff: int = DEFAULT_CUTOFF,
                  mode: str = MODE_A1) -> FockVector:
    """Truncated coherent state e^{-|a|^2/2} sum_n a^n/sqrt(n!) |n>.

    No renormalization is applied after truncation; the norm deficit is the
    Poisson tail beyond the cutoff.
    """
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    amplitude = complex(amplitude)
    pref = math.exp(-abs(amplitude) ** 2 / 2.0)
    amps: dict[tuple[int, ...], complex] = {}
    term = pref + 0j
    for n in range(cutoff + 1):
        if n > 0:
            term = term * amplitude / math.sqrt(n)
        if abs(term) > PRUNE_THRESHOLD or n == 0:
            amps[(n,)] = term
    return FockVector((mode,), cutoff, amps)


def make_split_single_photon(t_emit: float, cutoff: int = DEFAULT_CUTOFF) -> FockVector:
    """Source output after the 50:50 splitter, on modes (A2, B2).

    sqrt(T)/sqrt(2) (|10> + |01>) + sqrt(1-T) |00>: the emission failure is a
    vacuum branch, not an environment mode.
    """
    if not 0.0 <= t_emit <= 1.0:
        raise ValueError(f"t_emit must be in [0, 1], got {t_emit}")
    amps: dict[tuple[int, ...], complex] = {}
    if t_emit < 1.0:
        amps[(0, 0)] = complex(math.sqrt(1.0 - t_emit))
    if t_emit > 0.0:
        c = complex(math.sqrt(t_emit / 2.0))
        amps[(1, 0)] = c
        amps[(0, 1)] = c
    return FockVector((MODE_A2, MODE_B2), cutoff, amps)


def tensor(*states: FockVector) -> FockVector:
    """Tensor product; mode lists concatenate."""
    modes: tuple[str, ...] = ()
    cutoff = max(s.cutoff for s in states)
    amps: dict[tuple[int, ...], complex] = {(): 1.0 + 0j}
    for s in states:
        modes = modes + s.modes
        new: dict[tuple[int, ...], complex] = {}
        for occ1, a1 in amps.items():
            for occ2, a2 in s.amps.items():
                new[occ1 + occ2] = a1 * a2
        amps = new
    return FockVector(modes, cutoff, amps).prune()


def _bs_matrix(transmittance: float, convention: int) -> np.ndarray:
    t = math.sqrt(transmittance)
    r = math.sqrt(1.0 - transmittance)
    if convention == CONVENTION_A:
        return np.array([[t, r], [r, -t]])
    if convention == CONVENTION_B:
        return np.array([[t, -r], [r, t]])
    raise ValueError("convention must be +1 (A side) or -1 (B side)")


def apply_beam_splitter(state: FockVector, i: str, j: str,
                        transmittance: float = 0.5,
                        convention: int = CONVENTION_A) -> FockVector:
    """Unitary two-mode mixer on (i, j); outputs stay in the same slots.

    With transmittance 1/2 and convention +1 this is the A-side splitter
    (first input -> (out1 + out2)/sqrt2, second -> (out1 - out2)/sqrt2);
    convention -1 flips the minus sign to the first input (B side).
    """
    if i == j:
        raise ModeError("beam splitter needs two distinct modes")
    if not 0.0 <= transmittance <= 1.0:
        raise ValueError("transmittance must be in [0, 1]")
    ii, jj = state.index(i), state.index(j)
    u = _bs_matrix(transmittance, convention)
    cut = state.cutoff

    # Cache the single-pair transition amplitudes: (m, n) -> {(p, q): amp}.
    pair_cache: dict[tuple[int, int], dict[tuple[int, int], complex]] = {}

    def pair_map(m: int, n: int) -> dict[tuple[int, int], complex]:
        got = pair_cache.get((m, n))
        if got is not None:
            return got
        out: dict[tuple[int, int], complex] = {}
        # (a_i^+)^m (a_j^+)^n |00> expanded over output operators.
        for k in range(m + 1):
            ck = math.comb(m, k) * u[0, 0] ** k * u[0, 1] ** (m - k)
            for l in range(n + 1):
                cl = math.comb(n, l) * u[1, 0] ** l * u[1, 1] ** (n - l)
                p = k + l
                q = (m - k) + (n - l)
                if p > cut or q > cut:
                    continue
                w = ck * cl * math.sqrt(
                    math.factorial(p) * math.factorial(q)
                    / (math.factorial(m) * math.factorial(n)))
                out[(p, q)] = out.get((p, q), 0.0) + w
        pair_cache[(m, n)] = out
        return out

    new: dict[tuple[int, ...], complex] = {}
    for occ, a in state.amps.items():
        for (p, q), w in pair_map(occ[ii], occ[jj]).items():
            occ2 = list(occ)
            occ2[ii], occ2[jj] = p, q
            key = tuple(occ2)
            new[key] = new.get(key, 0.0) + a * w
    return FockVector(state.modes, cut, new).prune()


def apply_loss(state: FockVector, mode: str, eta: float) -> FockVector:
    """Loss channel: beam splitter with transmittance eta into a fresh ENV mode.

    Keeping the environment mode purifies the channel, so norm is conserved
    exactly; detector statistics marginalize over ENV occupations.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    state.index(mode)  # raises on absent mode
    if eta == 1.0:
        return state
    n_env = sum(1 for m in state.modes if m.startswith("ENV"))
    env = f"ENV{n_env}"
    widened = FockVector(state.modes + (env,), state.cutoff,
                         {occ + (0,): a for occ, a in state.amps.items()})
    return apply_beam_splitter(widened, mode, env, transmittance=eta,
                               convention=CONVENTION_A)


def click_distribution(state: FockVector, det_eff: float, dark_rate: float,
                       detector_modes: tuple[str, str, str, str] = (MODE_A1, MODE_A2, MODE_B1, MODE_B2),
                       extra_click_prob: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0),
                       ) -> dict[ClickPattern, float]:
    """Threshold-detector click-pattern probabilities.

    Each detector clicks with probability 1 - (1-det_eff)^n on n incident
    photons, OR'd independently with the dark-count probability and any
    extra_click_prob (used for the non-interfering pump-leak light).
    detector_modes order is (D1, D2, D3, D4) = (la, ra, lb, rb).
    """
    if not 0.0 <= det_eff <= 1.0:
        raise ValueError("det_eff must be in [0, 1]")
    if not 0.0 <= dark_rate <= 1.0:
        raise ValueError("dark_rate must be in [0, 1]")
    marg = state.probabilities(keep_modes=detector_modes)
    base_silent = [(1.0 - dark_rate) * (1.0 - q) for q in extra_click_prob]
    dist = {p: 0.0 for p in ALL_PATTERNS}
    miss = 1.0 - det_eff
    for occ, prob in marg.items():
        no_click = [base_silent[d] * miss ** occ[d] for d in range(4)]
        for pattern in ALL_PATTERNS:
            w = prob
            for d in range(4):
                w *= (1.0 - no_click[d]) if pattern[d] else no_click[d]
            dist[pattern] += w
    return dist


def coincidence_prob(dist: dict[ClickPattern, float]) -> float:
    """P(at least one click at each site): the quantity the analytic gain
    formulas approximate."""
    return sum(p for pat, p in dist.items()
               if (pat[0] or pat[1]) and (pat[2] or pat[3]))


def valid_coincidence_prob(dist: dict[ClickPattern, float]) -> float:
    """P(exactly one click at each site): the protocol's post-selection rule."""
    return sum(p for pat, p in dist.items() if pattern_is_valid(pat))


def build_relay_state(alpha: complex, beta: complex, eta1: float, eta2: float,
                      eta3: float, eta4: float, t_emit: float,
                      cutoff: int = DEFAULT_CUTOFF) -> FockVector:
    """Joint five-node state just before the detectors.

    alpha/beta are the users' coherent amplitudes at the encoders; channel
    losses rescale them (coherent-state closure makes that exact).  The split
    single photon takes the purified loss channels eta2/eta3.  After the two
    final splitters the slots (A1, A2, B1, B2) hold detectors (D1, D2, D3, D4).
    """
    a = make_coherent(alpha * math.sqrt(eta1), cutoff, mode=MODE_A1)
    b = make_coherent(beta * math.sqrt(eta4), cutoff, mode=MODE_B1)
    sp = make_split_single_photon(t_emit, cutoff)
    state = tensor(a, b, sp)
    state = apply_loss(state, MODE_A2, eta2)
    state = apply_loss(state, MODE_B2, eta3)
    state = apply_beam_splitter(state, MODE_A1, MODE_A2, 0.5, CONVENTION_A)
    state = apply_beam_splitter(state, MODE_B1, MODE_B2, 0.5, CONVENTION_B)
    return state


def relay_click_distribution(alpha: complex, beta: complex, eta1: float,
                             eta2: float, eta3: float, eta4: float,
                             t_emit: float, det_eff: float = 1.0,
                             dark_rate: float = 0.0, leak_site_intensity: float = 0.0,
                             cutoff: int = DEFAULT_CUTOFF) -> dict[ClickPattern, float]:
    """Click-pattern probabilities of the full architecture.

    leak_site_intensity is the mean photon number of the non-interfering
    pump-leak light arriving at ONE measurement site (already attenuated);
    it splits 50:50 onto the site's two detectors and contributes independent
    Poisson clicks.
    """
    state = build_relay_state(alpha, beta, eta1, eta2, eta3, eta4, t_emit, cutoff)
    q_det = -math.expm1(-0.5 * leak_site_intensity * det_eff)
    return click_distribution(
        state, det_eff, dark_rate,
        detector_modes=(MODE_A1, MODE_A2, MODE_B1, MODE_B2),
        extra_click_prob=(q_det, q_det, q_det, q_det))
