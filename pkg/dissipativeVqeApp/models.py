from dataclasses import dataclass, field
from enum import Enum

import numpy as np


# Lattice records
# --------------------------
@dataclass(frozen=True)
class Link:
    id: int
    column: int
    row: int
    orientation: str  # "x" points right, "y" points up

    def __str__(self):
        return f"{self.orientation}({self.column},{self.row})"


@dataclass(frozen=True)
class Plaquette:
    id: int
    column: int
    row: int
    slots: tuple  # (top, right, bottom, left); None where the lattice has no link

    @property
    def links(self):
        """Link ids in clockwise order starting from the top link."""
        return tuple(link for link in self.slots if link is not None)

    @property
    def is_boundary(self):
        return len(self.links) == 3

    def __str__(self):
        return f"P({self.column},{self.row})"


@dataclass(frozen=True)
class Vertex:
    id: int
    column: int
    row: int
    links: tuple

    def __str__(self):
        return f"G({self.column},{self.row})"


# Ansatz records
# --------------------------
class AnsatzKind(str, Enum):
    DVA = "dva"
    HVA_E = "hva-e"
    HVA_B = "hva-b"


@dataclass(frozen=True)
class AnsatzSpec:
    kind: AnsatzKind
    layers: int
    clamp_angles: bool = False  # beta-only DVA

    @property
    def num_params(self):
        return 2 * self.layers

    @property
    def unitary_layers(self):
        """Number of unitary layers after the first one (l_u)."""
        return self.layers - 1 if self.kind is AnsatzKind.DVA else self.layers

    def __str__(self):
        suffix = "-mf" if self.clamp_angles else ""
        return f"{self.kind.value}{suffix}(l={self.layers})"


@dataclass
class SweepRecord:
    lam: float
    params: np.ndarray
    energy: float
    seed: int
    wall_time: float
    magnetization: float
    ed_energy: float = None
    infidelity: float = None

    @property
    def relative_error(self):
        """|E_var - E_ed| / |E_ed|, or None when no ED energy was computed."""
        if self.ed_energy is None:
            return None
        return abs(self.energy - self.ed_energy) / abs(self.ed_energy)


@dataclass
class SweepResult:
    spec: AnsatzSpec
    d: int
    master_seed: int
    records: list = field(default_factory=list)

    @property
    def lambdas(self):
        return np.array([r.lam for r in self.records])

    @property
    def max_relative_error(self):
        errors = [r.relative_error for r in self.records if r.relative_error is not None]
        return max(errors) if errors else None


# Circuit records
# --------------------------
class GateKind(str, Enum):
    H = "H"
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    CNOT = "CNOT"
    MEASURE_Z = "MEASURE_Z"
    COND_X = "COND_X"


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    qubits: tuple
    angle: float = None
    slot: int = None          # classical slot written by MEASURE_Z
    condition: tuple = ()     # COND_X fires when the XOR of these slots is 1

    @property
    def is_two_qubit(self):
        return self.kind is GateKind.CNOT

    def to_dict(self):
        out = {"kind": self.kind.value, "qubits": list(self.qubits)}
        if self.angle is not None:
            out["angle"] = self.angle
        if self.slot is not None:
            out["slot"] = self.slot
        if self.condition:
            out["condition"] = list(self.condition)
        return out

    def __str__(self):
        return f"{self.kind.value}{self.qubits}"


@dataclass(frozen=True)
class Circuit:
    timesteps: tuple
    num_qubits: int
    num_clbits: int
    metadata: dict = field(default_factory=dict, hash=False, compare=False)

    @property
    def depth(self):
        return len(self.timesteps)

    @property
    def gates(self):
        return [gate for step in self.timesteps for gate in step]

    @property
    def cnot_count(self):
        return sum(1 for gate in self.gates if gate.kind is GateKind.CNOT)

    def to_dict(self):
        return {
            "metadata": dict(self.metadata),
            "num_qubits": self.num_qubits,
            "num_clbits": self.num_clbits,
            "depth": self.depth,
            "cnot_count": self.cnot_count,
            "timesteps": [[gate.to_dict() for gate in step] for step in self.timesteps],
        }


# Noise records
# --------------------------
@dataclass(frozen=True)
class NoiseModel:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"error rate must lie in [0, 1], got {self.p}")

    @property
    def single_qubit_fault(self):
        """Probability of each of X, Y, Z after a single-qubit gate."""
        return self.p / 3

    @property
    def two_qubit_fault(self):
        return self.p / 15

    @property
    def init_flip(self):
        return 2 * self.p / 3

    @property
    def measurement_flip(self):
        return 2 * self.p / 3


@dataclass
class ExperimentConfig:
    d: int
    spec: AnsatzSpec
    params: np.ndarray
    lam: float
    p: float
    trajectories: int
    shots: int
    seed: int
    post_select: bool = True

    def __post_init__(self):
        if self.trajectories < 1 or self.shots < 1:
            raise ValueError("trajectory and shot counts must be positive")
        self.params = np.asarray(self.params, dtype=float)
        if self.params.shape != (self.spec.num_params,):
            raise ValueError(
                f"{self.spec} takes {self.spec.num_params} parameters, got {self.params.shape}"
            )


@dataclass
class EstimatorResult:
    electric: float
    electric_stderr: float
    magnetic: float
    magnetic_stderr: float
    energy: float
    energy_stderr: float
    kept: int
    total: int
    # per-trajectory sums, kept for bootstrap resampling
    trajectory_magnetic: np.ndarray = field(default=None, repr=False)
    trajectory_z_shots: np.ndarray = field(default=None, repr=False)
    trajectory_electric: np.ndarray = field(default=None, repr=False)
    trajectory_kept: np.ndarray = field(default=None, repr=False)

    @property
    def rejection_rate(self):
        return 1.0 - self.kept / self.total if self.total else 0.0


# Scaling records
# --------------------------
@dataclass
class MagnetizationCurve:
    source: str
    d: int
    lambdas: np.ndarray
    magnetization: np.ndarray

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        self.magnetization = np.asarray(self.magnetization, dtype=float)
        if self.lambdas.shape != self.magnetization.shape:
            raise ValueError("lambda grid and magnetization values differ in length")
        if np.any(np.diff(self.lambdas) <= 0):
            raise ValueError("lambda grid must be strictly increasing")

    @property
    def size(self):
        """Linear lattice size L entering the scaling laws."""
        return self.d

    def __str__(self):
        return f"{self.source} d={self.d} ({len(self.lambdas)} points)"


@dataclass
class FitResult:
    lambda_c: float
    lambda_c_stderr: float
    nu: float
    nu_stderr: float
    beta: float
    beta_stderr: float
    nuisance: dict
    theta: float
    residuals: dict

    def to_dict(self):
        return {
            "lambda_c": self.lambda_c,
            "lambda_c_stderr": self.lambda_c_stderr,
            "nu": self.nu,
            "nu_stderr": self.nu_stderr,
            "beta": self.beta,
            "beta_stderr": self.beta_stderr,
            "nuisance": dict(self.nuisance),
            "theta": self.theta,
            "residuals": dict(self.residuals),
        }
