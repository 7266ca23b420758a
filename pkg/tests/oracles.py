"""Independent brute-force reference implementations.

Everything here is deliberately written the slow, obvious way (scalar
math, per-ray python loops, full distance matrices) so the vectorized
package code has something honest to be checked against.
"""

import math

import numpy as np


def brute_spherical(x, y, z):
    r = math.sqrt(x * x + y * y + z * z)
    theta = math.degrees(math.atan2(y, x)) % 360.0
    phi = math.degrees(math.acos(max(-1.0, min(1.0, z / r)))) if r > 0 else 0.0
    return r, theta, phi


def brute_bin(r, theta, phi, cfg):
    """Scalar half-open binning; None when out of range."""
    if not (0.0 < r < cfg.r_max):
        return None
    if not (cfg.phi_min <= phi < cfg.phi_max):
        return None
    ir = min(int(r / (cfg.r_max / cfg.n_r)), cfg.n_r - 1)
    it = int((theta % 360.0) / (360.0 / cfg.n_theta)) % cfg.n_theta
    ip = min(int((phi - cfg.phi_min) / ((cfg.phi_max - cfg.phi_min) / cfg.n_phi)),
             cfg.n_phi - 1)
    return ir, it, ip


def brute_occlusion_mask(occ):
    occ = np.asarray(occ, dtype=bool)
    n_r, n_t, n_p = occ.shape
    mask = np.zeros_like(occ)
    for t in range(n_t):
        for p in range(n_p):
            first = None
            for i in range(n_r):
                if occ[i, t, p]:
                    first = i
                    break
            if first is not None:
                for i in range(first + 1, n_r):
                    mask[i, t, p] = True
    return mask


def brute_resolve(occ):
    return np.asarray(occ, dtype=bool) & ~brute_occlusion_mask(occ)


def brute_deocclusion(shape, object_voxels):
    mask = np.zeros(shape, dtype=bool)
    nearest = {}
    for ir, it, ip in object_voxels:
        key = (it, ip)
        nearest[key] = min(nearest.get(key, ir), ir)
    for (it, ip), ir0 in nearest.items():
        for i in range(ir0, shape[0]):
            mask[i, it, ip] = True
    return mask


def ray_occlusion_table(n_r):
    """occlusion mask of every single-ray occupancy pattern, by bit value."""
    table = np.zeros((2 ** n_r, n_r), dtype=bool)
    for value in range(2 ** n_r):
        bits = [(value >> i) & 1 for i in range(n_r)]
        first = next((i for i, b in enumerate(bits) if b), None)
        if first is not None:
            for i in range(first + 1, n_r):
                table[value, i] = True
    return table


def ray_deocclusion_table(n_r):
    """de-occlusion mask of every single-ray object pattern, by bit value."""
    table = np.zeros((2 ** n_r, n_r), dtype=bool)
    for value in range(2 ** n_r):
        bits = [(value >> i) & 1 for i in range(n_r)]
        first = next((i for i, b in enumerate(bits) if b), None)
        if first is not None:
            for i in range(first, n_r):
                table[value, i] = True
    return table


def brute_chamfer(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1))
    return float(d.min(axis=1).mean() + d.min(axis=0).mean())
