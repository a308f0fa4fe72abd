"""Online gradient-descent training loop.

One training vector is drawn, conditioned, and consumed per update.  Each
of the three parameter types (biases, weights, reference vectors) gets its
own update rate, recomputed for every training vector so that the mean
absolute parameter change of type t equals epsilon times the current
spread (max - min) of that type's values.

Checkpoints are versioned binary files whose save/load round trip is
bit-exact, including the data RNG state, so an interrupted run resumed
from a checkpoint reproduces the uninterrupted run exactly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from .activation import NodeParams
from .datagen import TrainingConfig, TrainingVector, gen_1d, gen_2d, parity_mask
from .gradients import GradientSet, build_state, gradient_set_from_states
from .lattice import Lattice, LatticeConfig, get_lattice
from .objective import SampleSet, compute_D1_D2

PARAM_TYPES = ("bias", "weight", "ref")
DIAMETER_FLOOR = 1.0
GRAD_MEAN_EPS = 1e-12

CHECKPOINT_MAGIC = b"PMDNETC1"
CHECKPOINT_VERSION = 1
OVERRIDABLE_KEYS = frozenset({"epsilon", "seed_policy"})


class CheckpointError(RuntimeError):
    """Unreadable, corrupt, or incompatible checkpoint file."""


class TrainingDivergedError(RuntimeError):
    """A non-finite gradient or parameter appeared during training."""


@dataclass
class DominanceProfile:
    """Per-node mean absolute reference-vector component over the window
    cells of each subspace.  Zero means complete detachment."""

    a1: np.ndarray
    a2: np.ndarray

    def signed(self) -> np.ndarray:
        return self.a1 - self.a2


@dataclass
class TrainerState:
    lattice_cfg: LatticeConfig
    tcfg: TrainingConfig
    params: NodeParams
    step: int
    rates: np.ndarray       # last applied (bias, weight, ref) rates
    diameters: np.ndarray   # last used per-type spreads
    data_rng: np.random.Generator
    seed_policy: str        # "fresh" (infinite stream) or "restart"

    @property
    def lattice(self) -> Lattice:
        return get_lattice(self.lattice_cfg)


def data_scale(tc: TrainingConfig) -> float:
    """Conditioning factor mapping the attainable generator range
    [-1 - nu/2, 1 + nu/2] onto [-1, 1].

    The online stream is unbounded, so the global affine normalisation of a
    finite sample set is replaced by this fixed analytic map (the range is
    symmetric, so no translation is needed).
    """
    return 2.0 / (2.0 + tc.nu)


def init_params(lattice: Lattice, rng: np.random.Generator) -> NodeParams:
    """Weights uniform in [-0.1, 0.1]; biases and reference vectors zero."""
    m, k = lattice.num_nodes, lattice.window_len
    return NodeParams(
        weights=rng.uniform(-0.1, 0.1, size=(m, k)),
        biases=np.zeros(m),
        ref_vectors=np.zeros((m, k)),
    )


def new_state(lattice_cfg: LatticeConfig, tcfg: TrainingConfig, seed_policy: str = "fresh") -> TrainerState:
    if seed_policy not in ("fresh", "restart"):
        raise ValueError(f"seed_policy must be 'fresh' or 'restart', got {seed_policy!r}")
    lattice = get_lattice(lattice_cfg)
    init_rng = np.random.default_rng([tcfg.seed, 0])
    params = init_params(lattice, init_rng)
    return TrainerState(
        lattice_cfg=lattice_cfg,
        tcfg=tcfg,
        params=params,
        step=0,
        rates=np.zeros(3),
        diameters=np.ones(3),
        data_rng=np.random.default_rng([tcfg.seed, 1]),
        seed_policy=seed_policy,
    )


def _spread(values: np.ndarray) -> float:
    """Spread (max - min) of one parameter type, floored at 1.0.

    The floor keeps the cold start (all values identical, spread 0) moving
    and, just as importantly, keeps the early-training rate from collapsing:
    without it the spread right after the first update is ~epsilon, the mean
    step becomes epsilon * spread, and growth turns multiplicative at
    (1 + epsilon) per update, far too slow to organise in a few thousand
    updates.  With the floor the mean step is at least epsilon per update
    until the parameters genuinely occupy a region wider than 1.
    """
    return max(float(values.max() - values.min()), DIAMETER_FLOOR)


def adapt_rates(params: NodeParams, grads: GradientSet, epsilon: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-type rates: epsilon * spread / (mean |gradient| + tiny).

    By construction the mean absolute applied change of type t is then
    epsilon * spread_t whenever the mean gradient magnitude is nonzero.
    Returns (rates, spreads) ordered as PARAM_TYPES.
    """
    by_type = {
        "bias": (params.biases, grads.bias_total),
        "weight": (params.weights, grads.weight_total),
        "ref": (params.ref_vectors, grads.ref_total),
    }
    rates = np.zeros(3)
    diameters = np.zeros(3)
    for i, name in enumerate(PARAM_TYPES):
        values, grad = by_type[name]
        diameters[i] = _spread(values)
        rates[i] = epsilon * diameters[i] / (float(np.abs(grad).mean()) + GRAD_MEAN_EPS)
    return rates, diameters


def train_step(state: TrainerState, tvec: TrainingVector) -> TrainerState:
    """One online update from one (already conditioned) training vector."""
    lattice = state.lattice
    x = tvec.values.reshape(-1)
    sample_state = build_state(x, lattice, state.params, lattice.leakage)
    grads = gradient_set_from_states([sample_state], lattice, float(state.tcfg.n))
    if not grads.all_finite():
        raise TrainingDivergedError(f"non-finite gradient at step {state.step}")
    rates, diameters = adapt_rates(state.params, grads, state.tcfg.epsilon)
    state.params.biases -= rates[0] * grads.bias_total
    state.params.weights -= rates[1] * grads.weight_total
    state.params.ref_vectors -= rates[2] * grads.ref_total
    if __debug__:
        for arr in (state.params.biases, state.params.weights, state.params.ref_vectors):
            assert np.all(np.isfinite(arr)), f"non-finite parameter at step {state.step}"
    state.rates = rates
    state.diameters = diameters
    state.step += 1
    return state


def next_vector(state: TrainerState) -> TrainingVector:
    """Draw and condition the next training vector from the state's RNG."""
    if state.lattice_cfg.node_dims[0] == 1:
        tvec = gen_1d(state.tcfg, state.lattice_cfg, state.data_rng)
    else:
        tvec = gen_2d(state.tcfg, state.lattice_cfg, state.data_rng)
    return TrainingVector(values=tvec.values * data_scale(state.tcfg), parity=tvec.parity)


def run_training(state: TrainerState, updates: int, on_step=None) -> TrainerState:
    """Run a segment of online updates.

    Under the "restart" seed policy every segment replays the same data
    stream (a finite training set revisited); under "fresh" the stream
    continues from the stored RNG state.
    """
    if state.seed_policy == "restart":
        state.data_rng = np.random.default_rng([state.tcfg.seed, 1])
    for _ in range(updates):
        train_step(state, next_vector(state))
        if on_step is not None:
            on_step(state)
    return state


def heldout_samples(lattice_cfg: LatticeConfig, tcfg: TrainingConfig, size: int) -> SampleSet:
    """Frozen evaluation batch from a dedicated stream (never touches the
    training stream), conditioned like the training data."""
    rng = np.random.default_rng([tcfg.seed, 2])
    gen = gen_1d if lattice_cfg.node_dims[0] == 1 else gen_2d
    scale = data_scale(tcfg)
    rows = [gen(tcfg, lattice_cfg, rng).values.reshape(-1) * scale for _ in range(size)]
    return SampleSet(vectors=np.array(rows))


def heldout_objective(state: TrainerState, samples: SampleSet):
    lattice = state.lattice
    return compute_D1_D2(samples, lattice, state.params, lattice.leakage, float(state.tcfg.n))


def dominance_arrays(params: NodeParams, lattice: Lattice, parity: np.ndarray) -> DominanceProfile:
    """a_k(y) = mean |ref-vector component| over window cells of parity k.

    A window containing no cell of a parity (only possible for 1x1 input
    windows) contributes 0 for that subspace.
    """
    par_win = parity.reshape(-1)[lattice.win_idx]
    absr = np.abs(params.ref_vectors)
    out = []
    for k in (0, 1):
        mask = par_win == k
        counts = mask.sum(axis=1)
        sums = (absr * mask).sum(axis=1)
        out.append(np.divide(sums, counts, out=np.zeros(lattice.num_nodes), where=counts > 0))
    return DominanceProfile(a1=out[0], a2=out[1])


def dominance(state: TrainerState) -> DominanceProfile:
    if state.tcfg.s != 2:
        raise ValueError("dominance requires s = 2 (two subspaces to compare)")
    return dominance_arrays(state.params, state.lattice, parity_mask(state.lattice_cfg))


def _header_dict(state: TrainerState) -> dict:
    return {
        "lattice": {
            "node_dims": list(state.lattice_cfg.node_dims),
            "input_window": list(state.lattice_cfg.input_window),
            "neighbourhood_window": list(state.lattice_cfg.neighbourhood_window),
            "leakage_window": list(state.lattice_cfg.leakage_window),
        },
        "training": {
            "kappa": state.tcfg.kappa,
            "nu": state.tcfg.nu,
            "s": state.tcfg.s,
            "n": state.tcfg.n,
            "epsilon": state.tcfg.epsilon,
            "seed": state.tcfg.seed,
            "updates": state.tcfg.updates,
        },
        "seed_policy": state.seed_policy,
        "step": state.step,
        "rates": [float(v) for v in state.rates],
        "diameters": [float(v) for v in state.diameters],
        "rng": state.data_rng.bit_generator.state,
    }


def checkpoint_save(state: TrainerState, path) -> None:
    """Versioned binary checkpoint.

    Layout: 8-byte magic, uint32 version, uint64 header length, JSON header
    (config, step, rates, RNG state; sorted keys), then the weights, biases
    and ref_vectors arrays as little-endian float64 in C order, then a
    SHA-256 checksum of everything before it.
    """
    header = json.dumps(_header_dict(state), sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    blob += struct.pack("<Q", len(header))
    blob += header
    for arr in (state.params.weights, state.params.biases, state.params.ref_vectors):
        blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    blob += hashlib.sha256(bytes(blob)).digest()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def checkpoint_load(path, overrides: dict | None = None) -> TrainerState:
    """Restore a TrainerState; load(save(state)) is bit-identical.

    `overrides` may change epsilon or seed_policy only (resuming a run with
    a new update parameter is the supported workflow).
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8 + 4 + 8 + 32:
        raise CheckpointError("checkpoint file is truncated")
    if blob[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError("bad magic: not a checkpoint file")
    digest = blob[-32:]
    if hashlib.sha256(blob[:-32]).digest() != digest:
        raise CheckpointError("checksum mismatch: checkpoint is corrupt")
    (version,) = struct.unpack_from("<I", blob, 8)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (header_len,) = struct.unpack_from("<Q", blob, 12)
    header_start = 20
    header = json.loads(blob[header_start:header_start + header_len].decode("utf-8"))

    lattice_cfg = LatticeConfig(
        node_dims=tuple(header["lattice"]["node_dims"]),
        input_window=tuple(header["lattice"]["input_window"]),
        neighbourhood_window=tuple(header["lattice"]["neighbourhood_window"]),
        leakage_window=tuple(header["lattice"]["leakage_window"]),
    )
    tcfg = TrainingConfig(**header["training"])
    seed_policy = header["seed_policy"]
    if overrides:
        unknown = set(overrides) - OVERRIDABLE_KEYS
        if unknown:
            raise ValueError(f"only {sorted(OVERRIDABLE_KEYS)} may be overridden, got {sorted(unknown)}")
        if "epsilon" in overrides:
            tcfg = dataclasses.replace(tcfg, epsilon=float(overrides["epsilon"]))
        if "seed_policy" in overrides:
            seed_policy = str(overrides["seed_policy"])
            if seed_policy not in ("fresh", "restart"):
                raise ValueError(f"bad seed_policy override {seed_policy!r}")

    lattice = get_lattice(lattice_cfg)
    m, k = lattice.num_nodes, lattice.window_len
    sizes = [m * k, m, m * k]
    offset = header_start + header_len
    arrays = []
    for size in sizes:
        nbytes = size * 8
        chunk = blob[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError("checkpoint file is truncated")
        arrays.append(np.frombuffer(chunk, dtype="<f8").copy())
        offset += nbytes
    if offset != len(blob) - 32:
        raise CheckpointError("checkpoint has trailing garbage")
    params = NodeParams(
        weights=arrays[0].reshape(m, k),
        biases=arrays[1],
        ref_vectors=arrays[2].reshape(m, k),
    )

    rng_state = header["rng"]
    if rng_state.get("bit_generator") != "PCG64":
        raise CheckpointError(f"unsupported RNG {rng_state.get('bit_generator')!r}")
    data_rng = np.random.Generator(np.random.PCG64())
    data_rng.bit_generator.state = rng_state

    return TrainerState(
        lattice_cfg=lattice_cfg,
        tcfg=tcfg,
        params=params,
        step=int(header["step"]),
        rates=np.array(header["rates"], dtype=float),
        diameters=np.array(header["diameters"], dtype=float),
        data_rng=data_rng,
        seed_policy=seed_policy,
    )
