"""Synchronous BPSK CDMA channel model, posterior, and exhaustive oracles.

The channel is

    y = S b0 / sqrt(N) + sigma0 * n

with ``S`` an ``N x K`` matrix of random +/-1 chips, ``b0`` the users' bits
and ``n`` standard Gaussian noise.  The detector side assumes a noise level
``sigma`` that need not equal ``sigma0``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .exceptions import CapacityError, DataError, DimensionError, ParameterError

BRUTE_FORCE_CAP = 20
_CHUNK_ROWS = 1 << 14
_LOG_2PI = float(np.log(2.0 * np.pi))


def sgn(u):
    """Sign with the tie rule ``sgn(0) = +1``; returns int8."""
    u = np.asarray(u)
    return np.where(u >= 0, 1, -1).astype(np.int8)


def open_unit(v):
    """Clip values into the open interval (-1, 1)."""
    hi = np.nextafter(1.0, 0.0)
    return np.clip(v, -hi, hi)


def check_signs(a, name: str) -> np.ndarray:
    a = np.asarray(a)
    if a.size and not np.all((a == 1) | (a == -1)):
        raise DataError(f"{name} must contain only -1/+1 entries")
    return a.astype(np.int8)


def received_signal(codes: np.ndarray, bits: np.ndarray, sigma0: float, noise: np.ndarray) -> np.ndarray:
    """Assemble ``y`` from its parts; the single code path used everywhere."""
    n = codes.shape[0]
    return (codes.astype(np.float64) @ bits.astype(np.float64)) / np.sqrt(n) + sigma0 * noise


@dataclass(frozen=True, eq=False)
class Instance:
    """One synthesized CDMA transmission.

    Attributes
    ----------
    codes : ndarray of shape (N, K), int8
        Spreading chips, each -1 or +1.
    bits : ndarray of shape (K,), int8
        Transmitted bits ``b0``.
    sigma0 : float
        True channel noise standard deviation.
    noise : ndarray of shape (N,)
        Standard Gaussian noise draws.
    y : ndarray of shape (N,)
        Received signal.
    seed : int or None
        Seed the instance was generated from (``None`` for hand-built ones).
    """

    codes: np.ndarray
    bits: np.ndarray
    sigma0: float
    noise: np.ndarray
    y: np.ndarray
    seed: int | None = None

    @property
    def n(self) -> int:
        return self.codes.shape[0]

    @property
    def k(self) -> int:
        return self.codes.shape[1]

    @property
    def beta(self) -> float:
        return self.k / self.n

    @classmethod
    def from_arrays(cls, codes, bits, sigma0: float = 0.0, noise=None, seed=None) -> "Instance":
        """Build an instance from explicit parts (fixtures, re-loading)."""
        codes = np.atleast_2d(np.asarray(codes))
        if codes.ndim != 2 or codes.shape[0] < 1 or codes.shape[1] < 1:
            raise DimensionError(f"codes must be a non-empty N x K matrix, got shape {codes.shape}")
        n, k = codes.shape
        codes = check_signs(codes, "codes")
        bits = check_signs(np.ravel(bits), "bits")
        if bits.shape != (k,):
            raise DimensionError(f"bits has length {bits.size}, expected K={k}")
        if not np.isfinite(sigma0) or sigma0 < 0:
            raise ParameterError(f"sigma0 must be a finite non-negative number, got {sigma0}")
        noise = np.zeros(n) if noise is None else np.array(noise, dtype=np.float64).ravel()
        if noise.shape != (n,):
            raise DimensionError(f"noise has length {noise.size}, expected N={n}")
        if not np.all(np.isfinite(noise)):
            raise DataError("noise contains non-finite values")
        y = received_signal(codes, bits, float(sigma0), noise)
        for a in (codes, bits, noise, y):
            a.setflags(write=False)
        return cls(codes=codes, bits=bits, sigma0=float(sigma0), noise=noise, y=y, seed=seed)

    def flip_user(self, k: int) -> "Instance":
        """Gauge transform: negate bit ``k`` and column ``k`` of the codes.

        ``y`` is unchanged by construction.
        """
        codes = self.codes.copy()
        bits = self.bits.copy()
        codes[:, k] *= -1
        bits[k] *= -1
        return Instance.from_arrays(codes, bits, self.sigma0, self.noise, self.seed)

    def permute_users(self, perm) -> "Instance":
        perm = np.asarray(perm)
        return Instance.from_arrays(self.codes[:, perm], self.bits[perm], self.sigma0, self.noise, self.seed)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "sigma0": self.sigma0,
            "seed": self.seed,
            "codes": self.codes.ravel().tolist(),
            "bits": self.bits.tolist(),
            "noise": self.noise.tolist(),
            "y": self.y.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Instance":
        try:
            n, k = int(doc["n"]), int(doc["k"])
            codes = np.asarray(doc["codes"]).reshape(n, k)
            inst = cls.from_arrays(codes, doc["bits"], float(doc["sigma0"]), doc["noise"], doc.get("seed"))
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed instance document: {exc!r}") from exc
        except ValueError as exc:
            if isinstance(exc, (DataError, DimensionError, ParameterError)):
                raise
            raise DimensionError(f"instance document has inconsistent sizes: {exc}") from exc
        if "y" in doc and not np.array_equal(np.asarray(doc["y"], dtype=np.float64), inst.y):
            raise DataError("stored y does not match codes, bits and noise")
        return inst

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Instance":
        return cls.from_json(Path(path).read_text())


def generate_instance(n: int, k: int, sigma0: float, seed: int) -> Instance:
    """Draw codes, bits and noise i.i.d. from ``numpy.random.default_rng(seed)``.

    Draw order is codes, bits, noise, so the same seed always yields the same
    instance.
    """
    if int(n) != n or int(k) != k or n < 1 or k < 1:
        raise DimensionError(f"need integers n >= 1 and k >= 1, got n={n}, k={k}")
    if not np.isfinite(sigma0) or sigma0 < 0:
        raise ParameterError(f"sigma0 must be a finite non-negative number, got {sigma0}")
    n, k = int(n), int(k)
    rng = np.random.default_rng(seed)
    codes = 2 * rng.integers(0, 2, size=(n, k), dtype=np.int8) - 1
    bits = 2 * rng.integers(0, 2, size=k, dtype=np.int8) - 1
    noise = rng.standard_normal(n)
    return Instance.from_arrays(codes, bits, sigma0, noise, seed)


@dataclass(frozen=True)
class PosteriorQuery:
    """An instance together with the noise level assumed by the receiver."""

    instance: Instance
    sigma: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ParameterError(f"assumed sigma must be positive, got {self.sigma}")
        if not np.all(np.isfinite(self.instance.y)):
            raise DataError("received signal contains non-finite values")


def log_likelihood(query: PosteriorQuery, b) -> float:
    """``sum_mu log P(y_mu | b)`` under the assumed Gaussian noise."""
    inst = query.instance
    b = check_signs(np.ravel(b), "b")
    if b.shape != (inst.k,):
        raise DimensionError(f"b has length {b.size}, expected K={inst.k}")
    s2 = query.sigma**2
    u = inst.codes.astype(np.float64) @ b.astype(np.float64) / np.sqrt(inst.n)
    r = inst.y - u
    return float(-np.dot(r, r) / (2 * s2) - 0.5 * inst.n * (_LOG_2PI + np.log(s2)))


def _all_configs(k: int, start: int, stop: int) -> np.ndarray:
    """Rows ``start..stop-1`` of the 2^k sign table (bit j of the row index -> user j)."""
    idx = np.arange(start, stop, dtype=np.int64)[:, None]
    return (2 * ((idx >> np.arange(k)) & 1) - 1).astype(np.float64)


def _check_cap(k: int, cap: int) -> None:
    if k > cap:
        raise CapacityError(f"K={k} exceeds the brute-force cap of {cap} users")


def _config_log_weights(query: PosteriorQuery, configs: np.ndarray) -> np.ndarray:
    inst = query.instance
    u = configs @ inst.codes.T.astype(np.float64) / np.sqrt(inst.n)
    r = inst.y[None, :] - u
    return -np.einsum("ij,ij->i", r, r) / (2 * query.sigma**2)


def posterior_probabilities(query: PosteriorQuery, cap: int = BRUTE_FORCE_CAP):
    """Full posterior table: ``(configs, probs)`` over all 2^K sign vectors."""
    _check_cap(query.instance.k, cap)
    k = query.instance.k
    configs = _all_configs(k, 0, 1 << k)
    lw = _config_log_weights(query, configs)
    probs = np.exp(lw - logsumexp(lw))
    return configs.astype(np.int8), probs


def exhaustive_mpm(query: PosteriorQuery, cap: int = BRUTE_FORCE_CAP):
    """Exact posterior means of every bit by enumerating all 2^K configurations.

    Returns ``(marginals, decisions)``.  Accumulation is streamed over chunks
    in the log domain, so ``K`` up to ``cap`` fits in bounded memory.
    """
    k = query.instance.k
    _check_cap(k, cap)
    total = 1 << k
    lse_plus = np.full(k, -np.inf)
    lse_minus = np.full(k, -np.inf)
    for start in range(0, total, _CHUNK_ROWS):
        configs = _all_configs(k, start, min(total, start + _CHUNK_ROWS))
        lw = _config_log_weights(query, configs)[:, None]
        plus = configs > 0
        lse_plus = np.logaddexp(lse_plus, logsumexp(np.where(plus, lw, -np.inf), axis=0))
        lse_minus = np.logaddexp(lse_minus, logsumexp(np.where(plus, -np.inf, lw), axis=0))
    marginals = open_unit(np.tanh(0.5 * (lse_plus - lse_minus)))
    return marginals, sgn(marginals)


def exact_cavity_field(query: PosteriorQuery, mu: int, k: int, h, cap: int = BRUTE_FORCE_CAP) -> float:
    """Cavity field sent from chip ``mu`` to user ``k``, by exact summation.

    ``h`` holds the fields of the other ``K - 1`` users in index order.  The
    result is ``atanh`` of the tilted posterior mean of ``b_k``, evaluated as
    half the log-ratio of the ``b_k = +1`` and ``b_k = -1`` partial sums.
    """
    inst = query.instance
    K = inst.k
    _check_cap(K, cap)
    h = np.asarray(h, dtype=np.float64).ravel()
    if h.shape != (K - 1,):
        raise DimensionError(f"h has length {h.size}, expected K-1={K - 1}")
    if not np.all(np.isfinite(h)):
        raise DataError("cavity fields must be finite")
    if not (0 <= mu < inst.n and 0 <= k < K):
        raise DimensionError(f"index out of range: mu={mu}, k={k}")
    configs = _all_configs(K, 0, 1 << K)
    u = configs @ inst.codes[mu].astype(np.float64) / np.sqrt(inst.n)
    lw = -((inst.y[mu] - u) ** 2) / (2 * query.sigma**2)
    others = np.delete(configs, k, axis=1)
    log2cosh = np.abs(h) + np.log1p(np.exp(-2 * np.abs(h)))
    lw = lw + others @ h - log2cosh.sum()
    plus = configs[:, k] > 0
    return float(0.5 * (logsumexp(lw[plus]) - logsumexp(lw[~plus])))
