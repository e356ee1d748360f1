"""Linear-inversion tomography: density matrices, the process chi matrix in
the two-qubit Pauli basis, readout-error correction, and logical truth
tables.

Bit convention matches the measurement layer: bit 1 = bright = spin up,
outcome strings are ordered left position first.  Density matrices come
from plain linear inversion and may be non-positive at finite statistics;
an optional nearest-PSD projection is available for downstream use but is
off by default.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .qubits import SIGMA_I, SIGMA_X, SIGMA_Y, SIGMA_Z, ReadoutModel

PAULI_1Q = {"I": SIGMA_I, "X": SIGMA_X, "Y": SIGMA_Y, "Z": SIGMA_Z}
PAULI_LABELS_2Q = [a + b for a in "IXYZ" for b in "IXYZ"]
PAULI_2Q = [np.kron(PAULI_1Q[l[0]], PAULI_1Q[l[1]])
            for l in PAULI_LABELS_2Q]

# Single-qubit states produced by the preparation pulses on |up>.
PREP_STATES_1Q = {
    "I": np.array([1.0, 0.0], dtype=complex),
    "X90": np.array([1.0, -1.0j], dtype=complex) / math.sqrt(2.0),
    "Y90": np.array([1.0, -1.0], dtype=complex) / math.sqrt(2.0),
    "X180": np.array([0.0, 1.0], dtype=complex),
}

# Analysis pulse -> measured Pauli axis.
ANALYSIS_AXIS = {"I": "Z", "X90": "Y", "Y90": "X"}

SWAP_MATRIX = np.array([[1, 0, 0, 0],
                        [0, 0, 1, 0],
                        [0, 1, 0, 0],
                        [0, 0, 0, 1]], dtype=complex)


def prep_density(prep_pair) -> np.ndarray:
    """Ideal two-qubit input state of a preparation setting."""
    psi = np.kron(PREP_STATES_1Q[prep_pair[0]], PREP_STATES_1Q[prep_pair[1]])
    return np.outer(psi, psi.conj())


def counts_from_bits(bits) -> dict:
    """Histogram bit arrays (shots, n) into string-outcome counts."""
    bits = np.asarray(bits)
    n = bits.shape[1]
    keys = ["".join(bs) for bs in itertools.product("01", repeat=n)]
    idx = np.zeros(len(bits), dtype=int)
    for k in range(n):
        idx = idx * 2 + bits[:, k]
    hist = np.bincount(idx, minlength=2 ** n)
    return {k: int(c) for k, c in zip(keys, hist)}


def probabilities(counts: dict, n_qubits: int) -> np.ndarray:
    keys = ["".join(bs) for bs in itertools.product("01", repeat=n_qubits)]
    vec = np.array([counts.get(k, 0) for k in keys], dtype=float)
    total = vec.sum()
    if total <= 0:
        raise ConfigurationError("empty counts")
    return vec / total


def _bit_sign(key: str, pos: int) -> float:
    # bit 1 = spin up = +1 eigenvalue of Z
    return 1.0 if key[pos] == "1" else -1.0


def state_from_counts(setting_counts: dict) -> np.ndarray:
    """Two-qubit density matrix by linear inversion of the 9 settings.

    ``setting_counts`` maps (axis_a, axis_b) with axes in {X, Y, Z} to an
    outcome-count dict.  Identity-containing expectations are averaged over
    every setting whose marginal provides them.
    """
    needed = set(itertools.product("XYZ", repeat=2))
    if set(setting_counts) != needed:
        missing = needed - set(setting_counts)
        raise ConfigurationError(f"missing tomography settings: {missing}")
    exp = {("I", "I"): 1.0}
    singles_a = {ax: [] for ax in "XYZ"}
    singles_b = {ax: [] for ax in "XYZ"}
    for (ax_a, ax_b), counts in setting_counts.items():
        p = probabilities(counts, 2)
        keys = ["00", "01", "10", "11"]
        corr = sum(pk * _bit_sign(k, 0) * _bit_sign(k, 1)
                   for pk, k in zip(p, keys))
        marg_a = sum(pk * _bit_sign(k, 0) for pk, k in zip(p, keys))
        marg_b = sum(pk * _bit_sign(k, 1) for pk, k in zip(p, keys))
        exp[(ax_a, ax_b)] = corr
        singles_a[ax_a].append(marg_a)
        singles_b[ax_b].append(marg_b)
    for ax in "XYZ":
        exp[(ax, "I")] = float(np.mean(singles_a[ax]))
        exp[("I", ax)] = float(np.mean(singles_b[ax]))
    rho = np.zeros((4, 4), dtype=complex)
    for label, pauli in zip(PAULI_LABELS_2Q, PAULI_2Q):
        rho += exp[(label[0], label[1])] * pauli
    return rho / 4.0


def project_psd(rho: np.ndarray) -> np.ndarray:
    """Nearest positive-semidefinite state (eigenvalue clipping)."""
    evals, vecs = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    evals = np.clip(evals, 0.0, None)
    out = (vecs * evals) @ vecs.conj().T
    return out / np.trace(out).real


def chi_from_states(prep_pairs, output_states) -> np.ndarray:
    """Solve E(rho_j) = sum_mn chi_mn P_m rho_j P_n for chi (16 x 16).

    ``prep_pairs`` are the 16 preparation settings (ideal inputs);
    ``output_states`` the corresponding measured density matrices.
    """
    if len(prep_pairs) != len(output_states):
        raise ConfigurationError("inputs and outputs must pair up")
    blocks = []
    rhs = []
    basis = PAULI_2Q
    for pair, out in zip(prep_pairs, output_states):
        rho_in = prep_density(pair)
        block = np.empty((16, 256), dtype=complex)
        for q, (m, n) in enumerate(itertools.product(range(16), range(16))):
            block[:, q] = (basis[m] @ rho_in @ basis[n]).reshape(-1)
        blocks.append(block)
        rhs.append(np.asarray(out, dtype=complex).reshape(-1))
    a = np.vstack(blocks)
    b = np.concatenate(rhs)
    chi_flat, *_ = np.linalg.lstsq(a, b, rcond=None)
    chi = chi_flat.reshape(16, 16)
    chi = 0.5 * (chi + chi.conj().T)
    return chi / np.trace(chi).real


def chi_of_unitary(u: np.ndarray) -> np.ndarray:
    """Analytic chi of a two-qubit unitary, trace-normalized."""
    coeffs = np.array([np.trace(p.conj().T @ u) / 4.0 for p in PAULI_2Q])
    chi = np.outer(coeffs, coeffs.conj())
    return chi / np.trace(chi).real


CHI_SWAP = chi_of_unitary(SWAP_MATRIX)
CHI_IDENTITY = chi_of_unitary(np.eye(4, dtype=complex))


def apply_chi(chi: np.ndarray, rho: np.ndarray) -> np.ndarray:
    out = np.zeros_like(rho, dtype=complex)
    for m in range(16):
        for n in range(16):
            if abs(chi[m, n]) > 1e-15:
                out += chi[m, n] * (PAULI_2Q[m] @ rho @ PAULI_2Q[n])
    return out


def trace_preservation_residual(chi: np.ndarray) -> float:
    acc = np.zeros((4, 4), dtype=complex)
    for m in range(16):
        for n in range(16):
            acc += chi[m, n] * (PAULI_2Q[n] @ PAULI_2Q[m])
    return float(np.linalg.norm(acc - np.eye(4)))


def process_fidelity(chi_meas: np.ndarray, chi_ideal: np.ndarray) -> float:
    """Re Tr(chi_meas^dag chi_ideal) under the Tr = 1 normalization."""
    return float(np.real(np.trace(chi_meas.conj().T @ chi_ideal)))


def _as_probs(counts_or_probs, n_qubits):
    if isinstance(counts_or_probs, dict):
        return probabilities(counts_or_probs, n_qubits)
    p = np.asarray(counts_or_probs, dtype=float)
    return p / p.sum()


def invert_confusion(counts_or_probs, readout: ReadoutModel,
                     n_qubits: int) -> np.ndarray:
    """Raw confusion-matrix inversion (sums to 1, entries may be < 0).

    This is the unbiased linear estimate; `readout_correct` wraps it with
    clipping for consumers that need a proper distribution.
    """
    p = _as_probs(counts_or_probs, n_qubits)
    c1 = readout.confusion_matrix()
    full = np.array([[1.0]])
    for _ in range(n_qubits):
        full = np.kron(full, c1)
    try:
        return np.linalg.solve(full, p)
    except np.linalg.LinAlgError:
        raise ConfigurationError("confusion matrix is singular")


@dataclass
class CorrectionReport:
    probabilities: np.ndarray
    clipped_mass: float


def readout_correct(counts_or_probs, readout: ReadoutModel,
                    n_qubits: int) -> CorrectionReport:
    """Invert the tensor-product confusion matrix on a probability vector.

    Negative entries are clipped to zero and the vector renormalized; the
    clipped magnitude is reported for diagnostics.
    """
    corrected = invert_confusion(counts_or_probs, readout, n_qubits)
    clipped = float(-np.sum(corrected[corrected < 0]))
    corrected = np.clip(corrected, 0.0, None)
    total = corrected.sum()
    if total <= 0:
        raise ConfigurationError("correction produced an empty distribution")
    return CorrectionReport(corrected / total, clipped)


@dataclass
class TruthTable:
    """Input-state x output-state probabilities in the logical basis."""

    inputs: list
    outputs: list
    probs: np.ndarray
    mean_fidelity: float = 0.0

    def to_dict(self):
        return {"inputs": self.inputs, "outputs": self.outputs,
                "probs": self.probs.tolist(),
                "mean_fidelity": self.mean_fidelity}

    def dump_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def truth_table_from_runs(input_counts: dict, expected_map=None,
                          readout: ReadoutModel | None = None) -> TruthTable:
    """Normalize per-input histograms; fidelity is the mean probability of
    the expected (permuted) output.

    ``input_counts``: input bitstring -> outcome-count dict; ``expected_map``
    maps input -> correct output string (default: reversal).  Pass a readout
    model to apply confusion-matrix correction: the tabulated rows are the
    clipped distributions, while the fidelity uses the unclipped linear
    estimate (clip-and-renormalize would bias it low near the vertex).
    """
    inputs = sorted(input_counts)
    n = len(inputs[0])
    outputs = ["".join(b) for b in itertools.product("01", repeat=n)]
    expected_map = expected_map or {s: s[::-1] for s in inputs}
    probs = np.zeros((len(inputs), len(outputs)))
    fid = []
    for i, key in enumerate(inputs):
        j = outputs.index(expected_map[key])
        if readout is not None:
            probs[i] = readout_correct(input_counts[key], readout,
                                       n).probabilities
            fid.append(invert_confusion(input_counts[key], readout, n)[j])
        else:
            probs[i] = probabilities(input_counts[key], n)
            fid.append(probs[i][j])
    return TruthTable(inputs, outputs, probs, float(np.mean(fid)))


def chi_to_json(chi: np.ndarray, path=None) -> str:
    payload = {"basis": PAULI_LABELS_2Q,
               "re": np.real(chi).tolist(),
               "im": np.imag(chi).tolist()}
    text = json.dumps(payload, indent=2)
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def chi_plot_csv(chi: np.ndarray, path):
    """Bar-plot table: row label, column label, |chi|, arg(chi)."""
    with open(path, "w") as fh:
        fh.write("row,col,abs,phase\n")
        for i, li in enumerate(PAULI_LABELS_2Q):
            for j, lj in enumerate(PAULI_LABELS_2Q):
                fh.write(f"{li},{lj},{abs(chi[i, j]):.8f},"
                         f"{np.angle(chi[i, j]):.8f}\n")
