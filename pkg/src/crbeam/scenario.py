"""Reproducible network instance generation.

Geometry, d^-eta path loss, flat Rayleigh channels, norm-bounded CR-to-PU
uncertainty, and power/noise settings for one experiment instance.

Randomness uses the counter-based Philox generator. Every random quantity
gets its own stream, keyed by ``SeedSequence(seed, spawn_key=(run, SID, a, b))``
where SID identifies the quantity (cross distance, PU distance, CR channel,
PU channel estimate, uncertainty perturbation) and (a, b) the link/PU pair.
Per-link streams are therefore independent of the number of links and of
generation order.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np


class InvalidConfig(ValueError):
    """A NetworkConfig invariant is violated."""


class UnknownPreset(ValueError):
    """Unrecognized scenario preset name."""


# stream identifiers for seed splitting
_SID_DCROSS = 1
_SID_DPU = 2
_SID_H = 3
_SID_GHAT = 4
_SID_GPERT = 5


def _as_tuple(value, count: int, cast=int) -> tuple:
    if np.isscalar(value):
        return (cast(value),) * count
    t = tuple(cast(v) for v in value)
    if len(t) != count:
        raise InvalidConfig(f"expected {count} per-link values, got {len(t)}")
    return t


@dataclass
class NetworkConfig:
    """Parameters of one simulated CR network instance.

    Antenna counts and direct distances may be given as scalars (replicated
    over links) or per-link sequences.
    """

    K: int = 4
    M: tuple | int = 2
    N: tuple | int = 2
    num_pu: int = 1
    L: int = 2
    eta: float = 3.5
    d_direct: tuple | float = 30.0
    d_cross_range: tuple = (30.0, 100.0)
    d_pu_range: tuple = (70.0, 100.0)
    snr_db: float = 15.0
    sigma2: float = 2e-7
    iota_max: float = 4e-7
    budget_mode: str = "prepartitioned_equal"
    rho: float = 0.05
    seed: int = 0

    def __post_init__(self):
        self.M = _as_tuple(self.M, self.K)
        self.N = _as_tuple(self.N, self.K)
        self.d_direct = _as_tuple(self.d_direct, self.K, cast=float)

    def validate(self) -> None:
        if self.K < 1:
            raise InvalidConfig(f"K must be >= 1, got {self.K}")
        if any(m < 1 for m in self.M) or any(n < 1 for n in self.N):
            raise InvalidConfig("antenna counts must be >= 1")
        if self.num_pu < 1 or self.L < 1:
            raise InvalidConfig("num_pu and L must be >= 1")
        if self.eta <= 0:
            raise InvalidConfig(f"eta must be > 0, got {self.eta}")
        if any(d <= 0 for d in self.d_direct):
            raise InvalidConfig("direct distances must be > 0")
        for name, rng in (("d_cross_range", self.d_cross_range),
                          ("d_pu_range", self.d_pu_range)):
            lo, hi = rng
            if lo <= 0 or hi < lo:
                raise InvalidConfig(f"{name} must satisfy 0 < min <= max, got {rng}")
        if self.sigma2 <= 0:
            raise InvalidConfig(f"sigma2 must be > 0, got {self.sigma2}")
        if self.iota_max <= 0:
            raise InvalidConfig(f"iota_max must be > 0, got {self.iota_max}")
        if self.budget_mode not in ("prepartitioned_equal", "aggregate"):
            raise InvalidConfig(f"unknown budget_mode {self.budget_mode!r}")
        if self.rho < 0:
            raise InvalidConfig(f"rho must be >= 0, got {self.rho}")


@dataclass
class ChannelSet:
    """All channel matrices and power settings of one realization.

    H[k][j] is the N_k x M_j channel from transmitter j to receiver k.
    G_hat[p][k] / G_true[p][k] are the L x M_k CR-to-PU channels (estimate and
    realization) for PU p. eps[p, k] is the Frobenius uncertainty radius.
    """

    K: int
    num_pu: int
    H: list = field(repr=False)
    G_hat: list = field(repr=False)
    G_true: list = field(repr=False)
    eps: np.ndarray = field(repr=False)
    sigma2: np.ndarray = field(repr=False)
    p_max: np.ndarray = field(repr=False)

    @property
    def M(self) -> tuple:
        return tuple(self.H[0][j].shape[1] for j in range(self.K))

    @property
    def N(self) -> tuple:
        return tuple(self.H[k][0].shape[0] for k in range(self.K))

    def to_text(self) -> str:
        """Serialize to the fixture text format (exact float round-trip)."""
        out = io.StringIO()
        out.write(f"channelset v1\nK {self.K}\nnum_pu {self.num_pu}\n")
        for k in range(self.K):
            out.write(f"sigma2 {k} {self.sigma2[k].hex()}\n")
            out.write(f"p_max {k} {self.p_max[k].hex()}\n")
        for p in range(self.num_pu):
            for k in range(self.K):
                out.write(f"eps {p} {k} {float(self.eps[p, k]).hex()}\n")
        for k in range(self.K):
            for j in range(self.K):
                _write_matrix(out, f"H {k} {j}", self.H[k][j])
        for p in range(self.num_pu):
            for k in range(self.K):
                _write_matrix(out, f"G_hat {p} {k}", self.G_hat[p][k])
                _write_matrix(out, f"G_true {p} {k}", self.G_true[p][k])
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "ChannelSet":
        lines = iter(text.splitlines())
        if next(lines).strip() != "channelset v1":
            raise ValueError("not a channelset v1 file")
        K = int(next(lines).split()[1])
        num_pu = int(next(lines).split()[1])
        sigma2 = np.zeros(K)
        p_max = np.zeros(K)
        for _ in range(K):
            tok = next(lines).split()
            sigma2[int(tok[1])] = float.fromhex(tok[2])
            tok = next(lines).split()
            p_max[int(tok[1])] = float.fromhex(tok[2])
        eps = np.zeros((num_pu, K))
        for _ in range(num_pu * K):
            tok = next(lines).split()
            eps[int(tok[1]), int(tok[2])] = float.fromhex(tok[3])
        H = [[None] * K for _ in range(K)]
        for _ in range(K * K):
            tag, a, b, m = _read_matrix(lines)
            assert tag == "H"
            H[a][b] = m
        G_hat = [[None] * K for _ in range(num_pu)]
        G_true = [[None] * K for _ in range(num_pu)]
        for _ in range(num_pu * K):
            tag, a, b, m = _read_matrix(lines)
            assert tag == "G_hat"
            G_hat[a][b] = m
            tag, a, b, m = _read_matrix(lines)
            assert tag == "G_true"
            G_true[a][b] = m
        return cls(K=K, num_pu=num_pu, H=H, G_hat=G_hat, G_true=G_true,
                   eps=eps, sigma2=sigma2, p_max=p_max)


def _write_matrix(out, header: str, m: np.ndarray) -> None:
    r, c = m.shape
    out.write(f"{header} {r} {c}\n")
    for row in m:
        out.write(" ".join(f"{z.real.hex()} {z.imag.hex()}" for z in row))
        out.write("\n")


def _read_matrix(lines):
    tok = next(lines).split()
    tag, a, b, r, c = tok[0], int(tok[1]), int(tok[2]), int(tok[3]), int(tok[4])
    m = np.zeros((r, c), dtype=complex)
    for i in range(r):
        vals = next(lines).split()
        for j in range(c):
            m[i, j] = float.fromhex(vals[2 * j]) + 1j * float.fromhex(vals[2 * j + 1])
    return tag, a, b, m


def scenario_preset(name: str, base: NetworkConfig) -> NetworkConfig:
    """Apply a named CR-to-PU geometry preset (c1: 70-100 m, c2: 30-100 m)."""
    if name == "c1":
        return replace(base, d_pu_range=(70.0, 100.0))
    if name == "c2":
        return replace(base, d_pu_range=(30.0, 100.0))
    raise UnknownPreset(f"unknown scenario preset {name!r}")


def uncertainty_radius(G_hat: np.ndarray, rho: float) -> float:
    """Uncertainty radius eps with eps^2 = rho * ||G_hat||_F^2."""
    if rho < 0:
        raise InvalidConfig(f"rho must be >= 0, got {rho}")
    return float(np.sqrt(rho) * np.linalg.norm(G_hat))


def _stream(seed: int, run: int, sid: int, a: int = 0, b: int = 0):
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(run, sid, a, b))
    return np.random.Generator(np.random.Philox(ss))


def _rayleigh(rng, shape, variance: float) -> np.ndarray:
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def generate(cfg: NetworkConfig, run_index: int = 0) -> ChannelSet:
    """Draw one network realization.

    Channel entries are i.i.d. circularly-symmetric complex Gaussian with
    variance d^-eta of the sampled link distance. Direct distances are fixed;
    cross-link and CR-to-PU distances are uniform over their configured
    ranges (CR-to-PU path loss follows the same d^-eta model). The true
    CR-to-PU channel is the estimate plus a perturbation drawn uniformly from
    the Frobenius ball of radius eps, with eps^2 = rho * ||G_hat||_F^2.
    Transmit power caps are set from the configured per-link max SNR:
    p_max * d_kk^-eta / sigma2 = 10^(snr_db/10).

    Deterministic given (cfg, run_index).
    """
    cfg.validate()
    K, eta, seed = cfg.K, cfg.eta, cfg.seed

    H = [[None] * K for _ in range(K)]
    for k in range(K):
        for j in range(K):
            if k == j:
                d = cfg.d_direct[k]
            else:
                lo, hi = cfg.d_cross_range
                d = _stream(seed, run_index, _SID_DCROSS, k, j).uniform(lo, hi)
            rng = _stream(seed, run_index, _SID_H, k, j)
            H[k][j] = _rayleigh(rng, (cfg.N[k], cfg.M[j]), d ** -eta)

    G_hat = [[None] * K for _ in range(cfg.num_pu)]
    G_true = [[None] * K for _ in range(cfg.num_pu)]
    eps = np.zeros((cfg.num_pu, K))
    for p in range(cfg.num_pu):
        for k in range(K):
            lo, hi = cfg.d_pu_range
            d = _stream(seed, run_index, _SID_DPU, p, k).uniform(lo, hi)
            rng = _stream(seed, run_index, _SID_GHAT, p, k)
            g = _rayleigh(rng, (cfg.L, cfg.M[k]), d ** -eta)
            G_hat[p][k] = g
            eps[p, k] = uncertainty_radius(g, cfg.rho)
            if eps[p, k] == 0.0:
                G_true[p][k] = g.copy()
            else:
                G_true[p][k] = g + _ball_perturbation(
                    _stream(seed, run_index, _SID_GPERT, p, k),
                    (cfg.L, cfg.M[k]), eps[p, k])

    sigma2 = np.full(K, cfg.sigma2)
    snr_lin = 10.0 ** (cfg.snr_db / 10.0)
    p_max = np.array([snr_lin * cfg.sigma2 / (cfg.d_direct[k] ** -eta)
                      for k in range(K)])
    return ChannelSet(K=K, num_pu=cfg.num_pu, H=H, G_hat=G_hat, G_true=G_true,
                      eps=eps, sigma2=sigma2, p_max=p_max)


def _ball_perturbation(rng, shape, radius: float) -> np.ndarray:
    """Uniform draw from the Frobenius ball of the given radius.

    Gaussian direction plus radius r = eps * u^(1/(2*L*M)): the complex L x M
    ball has real dimension 2*L*M, so this exponent gives the uniform measure.
    """
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    nz = np.linalg.norm(z)
    if nz == 0.0:
        return np.zeros(shape, dtype=complex)
    u = rng.uniform()
    r = radius * u ** (1.0 / (2 * shape[0] * shape[1]))
    return (r / nz) * z
