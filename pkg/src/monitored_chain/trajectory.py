"""Stochastic trajectory driver: Trotter sweeps, Poisson-triggered
projective measurements in randomized order, deterministic replay.

All randomness flows through the engine, never through a backend, so two
backends driven with the same (spec, seed) consume identical random
streams and produce identical measurement records.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import dense as dense_mod
from . import gaussian as gauss_mod
from . import mps as mps_mod
from . import observables
from .errors import BackendInconsistencyError, ConfigError, InvalidStateError
from .model import (
    OBSERVABLE_OCCUPATION,
    ChainSpec,
    bond_gate,
    projector_set_for,
    trotter_gates,
)
from .mps import TruncationPolicy
from .util import born_select

RECORD_VERSION = 1


@dataclass(frozen=True)
class MeasurementEvent:
    step: int
    location: int
    observable: str
    outcome: str
    born_prob: float


@dataclass(frozen=True)
class ObservableSnapshot:
    step: int
    time: float
    entropy: np.ndarray
    correlation: np.ndarray


@dataclass
class TrajectoryRecord:
    spec: ChainSpec
    seed: object
    sampling: float
    events: list = field(default_factory=list)
    samples: list = field(default_factory=list)


class DenseBackend:
    """Statevector adapter (ground truth for L <= 12)."""

    name = "dense"
    number_tolerance = 1e-10

    def __init__(self, spec: ChainSpec):
        if spec.L > dense_mod.MAX_DENSE_SITES:
            raise ConfigError(f"dense backend limited to L <= {dense_mod.MAX_DENSE_SITES}")
        self.spec = spec
        even, odd = trotter_gates(spec)
        odd_full = [bond_gate(spec, g.support[0], spec.dt) for g in odd]
        self._layers = {
            "even_full": [(g.support[0], g) for g in even],
            "odd_half": [(g.support[0], g) for g in odd],
            "odd_full": [(g.support[0], g) for g in odd_full],
        }
        self.pset = projector_set_for(spec)
        self.state = None
        self.reset()

    def reset(self):
        self.state = dense_mod.product_state(self.spec.neel_pattern())

    def apply_layer(self, kind: str):
        state = self.state
        for bond, g in self._layers[kind]:
            state = dense_mod.apply_two_site_unitary(state, bond, g)
        self.state = state

    def trotter_step(self):
        self.apply_layer("odd_half")
        self.apply_layer("even_full")
        self.apply_layer("odd_half")

    def measure(self, location: int, draw: float):
        label, self.state, prob = dense_mod.projective_measure(
            self.state, location, self.pset, draw
        )
        return label, prob

    def apply_outcome(self, location: int, label: str) -> float:
        self.state, prob = dense_mod.apply_measurement_outcome(
            self.state, location, self.pset, label
        )
        return prob

    def current_state(self):
        return self.state

    def particle_number(self) -> float:
        return dense_mod.total_number(self.state)


class GaussianBackend:
    """Correlation-matrix adapter; exact for U = 0 with occupation readout."""

    name = "gaussian"
    number_tolerance = 1e-10
    _labels = ("n=0", "n=1")

    def __init__(self, spec: ChainSpec):
        if spec.U != 0.0:
            raise ConfigError("Gaussian backend requires U = 0")
        if spec.observable != OBSERVABLE_OCCUPATION:
            raise ConfigError("Gaussian backend supports occupation measurements only")
        self.spec = spec
        odd_bonds = range(0, spec.n_bonds, 2)
        even_bonds = range(1, spec.n_bonds, 2)
        self._layers = {
            "odd_half": [(b, spec.dt / 2.0) for b in odd_bonds],
            "even_full": [(b, spec.dt) for b in even_bonds],
            "odd_full": [(b, spec.dt) for b in odd_bonds],
        }
        self.state = None
        self.reset()

    def reset(self):
        self.state = gauss_mod.product_state(self.spec.neel_pattern())

    def apply_layer(self, kind: str):
        state = self.state
        for bond, tau in self._layers[kind]:
            state = gauss_mod.apply_bond_rotation(state, bond, tau)
        self.state = state

    def trotter_step(self):
        self.apply_layer("odd_half")
        self.apply_layer("even_full")
        self.apply_layer("odd_half")

    def measure(self, location: int, draw: float):
        probs = gauss_mod.occupation_probabilities(self.state, location)
        outcome, self.state = gauss_mod.measure_occupation(self.state, location, draw)
        return self._labels[outcome], float(probs[outcome])

    def apply_outcome(self, location: int, label: str) -> float:
        outcome = self._labels.index(label)
        self.state, prob = gauss_mod.apply_occupation_outcome(self.state, location, outcome)
        return prob

    def current_state(self):
        return self.state

    def particle_number(self) -> float:
        return self.state.particle_number()


class MpsBackend:
    """TEBD adapter, the production engine for L beyond the dense range."""

    name = "mps"
    number_tolerance = 1e-8

    def __init__(self, spec: ChainSpec, policy: TruncationPolicy | None = None):
        self.spec = spec
        self._policy_template = policy or TruncationPolicy()
        even, odd = trotter_gates(spec)
        odd_full = [bond_gate(spec, g.support[0], spec.dt) for g in odd]
        self._layers = {
            "even_full": [(g.support[0], g.matrix) for g in even],
            "odd_half": [(g.support[0], g.matrix) for g in odd],
            "odd_full": [(g.support[0], g.matrix) for g in odd_full],
        }
        self.pset = projector_set_for(spec)
        self.state = None
        self.reset()

    def reset(self):
        tpl = self._policy_template
        policy = TruncationPolicy(
            chi_max=tpl.chi_max, svd_cutoff=tpl.svd_cutoff, hard_limit=tpl.hard_limit
        )
        self.state = mps_mod.neel_mps(self.spec.L, policy)

    @property
    def policy(self) -> TruncationPolicy:
        return self.state.policy

    def apply_layer(self, kind: str):
        for bond, g in self._layers[kind]:
            mps_mod.apply_two_site_gate(self.state, bond, g)

    def trotter_step(self):
        self.apply_layer("odd_half")
        self.apply_layer("even_full")
        self.apply_layer("odd_half")

    def measure(self, location: int, draw: float):
        probs = mps_mod.measurement_probabilities(
            self.state, location, self.pset.projectors
        )
        k = born_select(probs, draw)
        prob = mps_mod.apply_projector(self.state, location, self.pset.projectors[k])
        return self.pset.labels[k], prob

    def apply_outcome(self, location: int, label: str) -> float:
        k = self.pset.index_of(label)
        return mps_mod.apply_projector(self.state, location, self.pset.projectors[k])

    def current_state(self):
        return self.state

    def particle_number(self) -> float:
        return float(mps_mod.occupations(self.state).sum())


BACKENDS = {"dense": DenseBackend, "gaussian": GaussianBackend, "mps": MpsBackend}


def make_backend(name: str, spec: ChainSpec, policy: TruncationPolicy | None = None):
    if name not in BACKENDS:
        raise ConfigError(f"unknown backend {name!r}; choose from {sorted(BACKENDS)}")
    if name == "mps":
        return MpsBackend(spec, policy)
    return BACKENDS[name](spec)


def schedule_step(rng: np.random.Generator, spec: ChainSpec) -> list[int]:
    """Locations to measure this step, each triggered independently with
    probability gamma*dt, then uniformly permuted (the measurement order
    matters for non-commuting bond observables)."""
    xs = rng.random(spec.measurement_locations)
    triggered = np.flatnonzero(xs < spec.gamma * spec.dt)
    return [int(loc) for loc in rng.permutation(triggered)]


def _snapshot(backend, step: int) -> ObservableSnapshot:
    state = backend.current_state()
    profile = observables.entropy_profile(state)
    C = observables.one_body_matrix(state)
    return ObservableSnapshot(
        step=step, time=step * backend.spec.dt, entropy=profile.S, correlation=C
    )


def _check_number(backend, snapshot: ObservableSnapshot, expected: float):
    tol = backend.number_tolerance * max(1.0, expected)
    state = backend.current_state()
    if hasattr(state, "policy"):
        # Truncation moves weight between number sectors; |dN| is bounded by
        # L times the discarded weight, so scale the check accordingly.
        tol = max(tol, 4.0 * state.L * state.policy.track_error)
    n = float(np.real(np.trace(snapshot.correlation)))
    if abs(n - expected) > tol:
        raise InvalidStateError(
            f"particle number drifted to {n} (expected {expected}) at step {snapshot.step}"
        )


def _drive_protocol(backend, spec, sampling, record, measured_locations, handle_event):
    """Shared stepping loop for sampling runs and replays.

    The symmetric splitting (odd half, even full, odd half) is applied
    literally around every step boundary where a measurement or snapshot
    occurs; between silent boundaries the two adjacent odd half-layers fuse
    into one full layer, which is exact and saves a third of the SVD work.
    """
    expected_n = float(spec.neel_pattern().sum())
    sample_every = max(1, int(round(sampling / spec.dt)))
    snap = _snapshot(backend, 0)
    _check_number(backend, snap, expected_n)
    record.samples.append(snap)
    step_open = False
    for step in range(1, spec.n_steps + 1):
        locations = measured_locations(step)
        snapshot_due = step % sample_every == 0 or step == spec.n_steps
        if not step_open:
            backend.apply_layer("odd_half")
        backend.apply_layer("even_full")
        if locations or snapshot_due:
            backend.apply_layer("odd_half")
            step_open = False
            for loc in locations:
                handle_event(step, loc)
            if snapshot_due:
                snap = _snapshot(backend, step)
                _check_number(backend, snap, expected_n)
                record.samples.append(snap)
        else:
            backend.apply_layer("odd_full")
            step_open = True
    return record


def run_trajectory(backend, spec: ChainSpec, seed, sampling: float = 1.0) -> TrajectoryRecord:
    """Run the full monitored protocol and log events plus periodic snapshots.

    Identical (spec, seed, backend) inputs reproduce the record exactly; all
    randomness is drawn by the engine, in a fixed per-step order.
    """
    if backend.spec != spec:
        raise ConfigError("backend was built for a different chain spec")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    backend.reset()
    record = TrajectoryRecord(spec=spec, seed=seed, sampling=sampling)

    def measured_locations(step):
        return schedule_step(rng, spec)

    def handle_event(step, loc):
        draw = float(rng.random())
        try:
            label, prob = backend.measure(loc, draw)
        except InvalidStateError as exc:
            raise InvalidStateError(f"step {step}, location {loc}: {exc}") from exc
        record.events.append(
            MeasurementEvent(
                step=step,
                location=loc,
                observable=spec.observable,
                outcome=label,
                born_prob=prob,
            )
        )

    return _drive_protocol(backend, spec, sampling, record, measured_locations, handle_event)


def replay(record: TrajectoryRecord, backend) -> TrajectoryRecord:
    """Re-apply a logged record (no sampling) and re-derive the observables.

    Raises BackendInconsistencyError when a recomputed Born probability
    deviates from the logged one by more than 1e-6.
    """
    spec = record.spec
    if backend.spec != spec:
        raise ConfigError("backend was built for a different chain spec")
    backend.reset()
    out = TrajectoryRecord(spec=spec, seed=record.seed, sampling=record.sampling)

    by_step: dict[int, list[MeasurementEvent]] = {}
    for ev in record.events:
        by_step.setdefault(ev.step, []).append(ev)
    originals = {(ev.step, ev.location): ev for ev in record.events}

    def measured_locations(step):
        return [ev.location for ev in by_step.get(step, ())]

    def handle_event(step, loc):
        ev = originals[(step, loc)]
        prob = backend.apply_outcome(ev.location, ev.outcome)
        if abs(prob - ev.born_prob) > 1e-6:
            raise BackendInconsistencyError(
                f"step {step} location {ev.location}: replayed probability "
                f"{prob:.9f} vs logged {ev.born_prob:.9f}"
            )
        out.events.append(
            MeasurementEvent(
                step=ev.step,
                location=ev.location,
                observable=ev.observable,
                outcome=ev.outcome,
                born_prob=prob,
            )
        )

    return _drive_protocol(backend, spec, record.sampling, out, measured_locations, handle_event)


def save_record(record: TrajectoryRecord, path) -> None:
    """Write events as newline-delimited JSON plus a binary snapshot block."""
    path = str(path)
    samples_path = path + ".samples.npz"
    header = {
        "version": RECORD_VERSION,
        "spec": record.spec.to_dict(),
        "seed": record.seed if isinstance(record.seed, int) else list(record.seed),
        "sampling": record.sampling,
        "samples_file": samples_path.rsplit("/", 1)[-1],
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for ev in record.events:
            fh.write(
                json.dumps(
                    {
                        "step": ev.step,
                        "location": ev.location,
                        "observable": ev.observable,
                        "outcome": ev.outcome,
                        "born_prob": ev.born_prob,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    np.savez_compressed(
        samples_path,
        steps=np.array([s.step for s in record.samples], dtype=np.int64),
        times=np.array([s.time for s in record.samples]),
        entropy=np.stack([s.entropy for s in record.samples]),
        corr_real=np.stack([s.correlation.real for s in record.samples]),
        corr_imag=np.stack([s.correlation.imag for s in record.samples]),
    )


def load_record(path) -> TrajectoryRecord:
    path = str(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    header = json.loads(lines[0])
    if header.get("version") != RECORD_VERSION:
        raise ConfigError(f"unsupported record version {header.get('version')}")
    spec = ChainSpec.from_dict(header["spec"])
    seed = header["seed"]
    seed = seed if isinstance(seed, int) else tuple(seed)
    record = TrajectoryRecord(spec=spec, seed=seed, sampling=header["sampling"])
    for line in lines[1:]:
        data = json.loads(line)
        record.events.append(MeasurementEvent(**data))
    samples_path = path.rsplit("/", 1)
    prefix = samples_path[0] + "/" if len(samples_path) == 2 else ""
    with np.load(prefix + header["samples_file"]) as blob:
        for k in range(len(blob["steps"])):
            record.samples.append(
                ObservableSnapshot(
                    step=int(blob["steps"][k]),
                    time=float(blob["times"][k]),
                    entropy=blob["entropy"][k],
                    correlation=blob["corr_real"][k] + 1j * blob["corr_imag"][k],
                )
            )
    return record
