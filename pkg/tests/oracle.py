"""Brute-force reference constructions, written independently of the package.

Operators are built by looping over computational basis states with explicit
bit arithmetic (qubit q is bit q of the basis index), never via the
package's tensor contractions.
"""
import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def embed(u, targets, n):
    """Full 2^n matrix of a k-qubit operator; targets[j] is bit j of u's index."""
    u = np.asarray(u, dtype=complex)
    k = len(targets)
    dim = 2 ** n
    out = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        sub_in = sum(((col >> t) & 1) << j for j, t in enumerate(targets))
        rest = col
        for t in targets:
            rest &= ~(1 << t)
        for sub_out in range(2 ** k):
            row = rest
            for j, t in enumerate(targets):
                row |= ((sub_out >> j) & 1) << t
            out[row, col] += u[sub_out, sub_in]
    return out


def rot(axis, angle):
    s = {"X": X, "Y": Y, "Z": Z}[axis]
    return np.cos(angle / 2) * I2 - 1j * np.sin(angle / 2) * s


def ket(bits):
    """Basis vector from a list of qubit values (qubit 0 first)."""
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[sum(b << q for q, b in enumerate(bits))] = 1
    return v


def z_string_expectation_from_probs(probs, mask):
    """<prod_{q in mask} Z_q> from computational-basis probabilities."""
    idx = np.arange(len(probs))
    parity = np.array([bin(i & mask).count("1") & 1 for i in idx])
    return float(np.sum(probs * (1 - 2 * parity)))


def kraus_apply(rho, ops, targets, n):
    out = np.zeros_like(rho)
    for k in ops:
        m = embed(k, targets, n)
        out += m @ rho @ m.conj().T
    return out
