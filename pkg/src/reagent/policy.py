"""Toy autoregressive policy: linear-softmax over hashed context features.

The policy is a dense weight matrix [feature_dim x vocab_size]. Contexts of
unbounded length are represented by feature hashing of context tokens
(collisions accepted), so log-probabilities and their gradients are exact
and cheap to compute.
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass, field

import numpy as np

from .grammar import VOCAB_SIZE, symbol_name

DEFAULT_FEATURE_DIM = 256

_WORD = re.compile(r"\w+")
_TOOL_WORDS = frozenset(
    ("search", "web_browse", "python_code", "file_reader",
     "image_descriptor", "audio_converter")
)
_hash_cache: dict[str, int] = {}


class NumericError(ArithmeticError):
    """Non-finite value encountered where silent clamping is forbidden."""


def _token_hash(token: str) -> int:
    h = _hash_cache.get(token)
    if h is None:
        h = int.from_bytes(hashlib.blake2b(token.encode(), digest_size=8).digest(), "little")
        _hash_cache[token] = h
    return h


def feature_index(token: str, feature_dim: int) -> int:
    return _token_hash(token) % feature_dim


def _words(text: str, limit: int | None = None) -> list[str]:
    ws = _WORD.findall(text.lower())
    return ws if limit is None else ws[:limit]


@dataclass
class Context:
    """Conditioning context: prompt, optional first attempt and critique,
    interleaved observations, and the action tokens emitted so far."""

    prompt: str
    first_attempt: str | None = None
    critique: str | None = None
    observations: list[str] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)

    def copy(self) -> "Context":
        return Context(
            self.prompt,
            self.first_attempt,
            self.critique,
            list(self.observations),
            list(self.actions),
        )

    def add_action(self, sym: int) -> None:
        self.actions.append(sym)

    def add_observation(self, obs: str) -> None:
        self.observations.append(obs)

    def fingerprint(self) -> str:
        h = hashlib.blake2b(digest_size=16)
        for part in (
            self.prompt,
            self.first_attempt or "",
            self.critique or "",
            "\x1f".join(self.observations),
            ",".join(map(str, self.actions)),
        ):
            h.update(part.encode())
            h.update(b"\x1e")
        return h.hexdigest()

    def feature_tokens(self) -> list[str]:
        n_obs = len(self.observations)
        bucket = "0" if n_obs == 0 else ("1" if n_obs == 1 else "2+")
        last = symbol_name(self.actions[-1]) if self.actions else "<none>"
        prev = symbol_name(self.actions[-2]) if len(self.actions) >= 2 else "<none>"
        toks = [
            "bias",
            f"state:n_obs={bucket}",
            f"state:last={last}",
            f"state:prev={prev}",
        ]
        pws = _words(self.prompt, 8)
        toks += [f"p:{w}" for w in pws]
        toks += [f"x:{w}|last={last}" for w in pws]
        toks += [f"x:{w}|n_obs={bucket}" for w in pws]
        if self.observations:
            toks += [f"obs:{w}" for w in _words(self.observations[-1], 12)]
        if self.critique is not None:
            toks.append("has_critique")
            cws = _words(self.critique, 24)
            toks += [f"c:{w}" for w in cws]
            # cross only actionable tool-name mentions with the episode state
            toks += [f"xc:{w}|n_obs={bucket}" for w in cws if w in _TOOL_WORDS]
        if self.first_attempt is not None:
            toks.append("has_first")
            toks += [f"r:{w}" for w in _words(self.first_attempt, 12)]
        return toks

    def feature_indices(self, feature_dim: int) -> np.ndarray:
        return np.fromiter(
            (_token_hash(t) % feature_dim for t in self.feature_tokens()),
            dtype=np.int64,
        )

    def featurize(self, feature_dim: int) -> np.ndarray:
        vec = np.zeros(feature_dim)
        np.add.at(vec, self.feature_indices(feature_dim), 1.0)
        return vec


@dataclass
class PolicyParams:
    weights: np.ndarray  # [feature_dim, vocab_size]
    frozen: bool = False

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError("weights must be a 2-D matrix")
        if not np.all(np.isfinite(self.weights)):
            raise NumericError("weights contain non-finite values")
        if self.vocab_size < 2 or self.feature_dim < 1:
            raise ValueError("need vocab_size >= 2 and feature_dim >= 1")
        if self.frozen:
            self.weights.setflags(write=False)

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.weights.shape[1]

    def checksum(self) -> str:
        return hashlib.blake2b(
            np.ascontiguousarray(self.weights).tobytes(), digest_size=16
        ).hexdigest()


def init_params(feature_dim: int = DEFAULT_FEATURE_DIM, vocab_size: int = VOCAB_SIZE,
                scale: float = 0.0, seed: int = 0) -> PolicyParams:
    if scale == 0.0:
        w = np.zeros((feature_dim, vocab_size))
    else:
        w = np.random.default_rng(seed).normal(0.0, scale, (feature_dim, vocab_size))
    return PolicyParams(w)


def snapshot(params: PolicyParams) -> PolicyParams:
    """Deep, immutable copy; later updates to the live params never leak in."""
    return PolicyParams(params.weights.copy(), frozen=True)


def _step_logits(params: PolicyParams, idx: np.ndarray) -> np.ndarray:
    logits = params.weights[idx].sum(axis=0)
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits")
    return logits


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


def sample(params: PolicyParams, ctx: Context, temperature: float, max_len: int,
           rng: np.random.Generator) -> tuple[tuple[int, ...], tuple[float, ...]]:
    """Sample token-by-token from the tempered softmax; stops at <eos> or
    max_len. Returned log-probs are of the distribution actually sampled."""
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    from .grammar import EOS

    ctx = ctx.copy()
    actions: list[int] = []
    logps: list[float] = []
    for _ in range(max_len):
        idx = ctx.feature_indices(params.feature_dim)
        logsm = _log_softmax(_step_logits(params, idx) / temperature)
        a = int(rng.choice(params.vocab_size, p=np.exp(logsm)))
        actions.append(a)
        logps.append(float(logsm[a]))
        ctx.add_action(a)
        if a == EOS:
            break
    return tuple(actions), tuple(logps)


def log_prob(params: PolicyParams, ctx: Context,
             actions) -> tuple[float, list[float]]:
    """Log-probability of an action sequence under the untempered policy."""
    ctx = ctx.copy()
    per_token: list[float] = []
    for a in actions:
        if not (0 <= a < params.vocab_size):
            raise ValueError(f"action {a} outside vocabulary of size {params.vocab_size}")
        idx = ctx.feature_indices(params.feature_dim)
        logsm = _log_softmax(_step_logits(params, idx))
        per_token.append(float(logsm[a]))
        ctx.add_action(a)
    return sum(per_token), per_token


def grad_log_prob(params: PolicyParams, ctx: Context, actions) -> np.ndarray:
    """Exact softmax log-likelihood gradient, summed over steps: [F x V]."""
    ctx = ctx.copy()
    grad = np.zeros_like(params.weights)
    for a in actions:
        if not (0 <= a < params.vocab_size):
            raise ValueError(f"action {a} outside vocabulary of size {params.vocab_size}")
        idx = ctx.feature_indices(params.feature_dim)
        probs = np.exp(_log_softmax(_step_logits(params, idx)))
        delta = -probs
        delta[a] += 1.0
        np.add.at(grad, idx, delta)
        ctx.add_action(a)
    return grad


_CKPT_MAGIC = b"RPOL"
_CKPT_VERSION = 1


def save_params(params: PolicyParams, path) -> None:
    """Bit-exact checkpoint: magic, version, F, V header then raw float64."""
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<III", _CKPT_VERSION, params.feature_dim, params.vocab_size))
        fh.write(np.ascontiguousarray(params.weights).tobytes())


def load_params(path) -> PolicyParams:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CKPT_MAGIC:
            raise ValueError("not a policy checkpoint")
        version, f, v = struct.unpack("<III", fh.read(12))
        if version != _CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        raw = fh.read(8 * f * v)
        if len(raw) != 8 * f * v:
            raise ValueError("truncated checkpoint")
        w = np.frombuffer(raw, dtype=np.float64).reshape(f, v).copy()
    return PolicyParams(w)
