"""Global numbering of weak-function degrees of freedom.

Blocks are laid out as: every element's ``v0`` block (in element order),
then every edge's ``v_b`` block, then every edge's gradient-trace block.
"""
from __future__ import annotations

import numpy as np

from .polyspace import dim_p

__all__ = ["FLAVORS", "normalize_flavor", "DofMap"]

FLAVORS = ("algorithm1", "algorithm2")

_ALIASES = {
    "algorithm1": "algorithm1", "1": "algorithm1", "i": "algorithm1", "vector": "algorithm1",
    "algorithm2": "algorithm2", "2": "algorithm2", "ii": "algorithm2", "normal": "algorithm2",
}


def normalize_flavor(flavor):
    key = str(flavor).strip().lower()
    if key not in _ALIASES:
        raise ValueError(f"unknown flavor {flavor!r}; expected one of {FLAVORS}")
    return _ALIASES[key]


class DofMap:
    """Offsets of the ``v0``, ``v_b`` and ``v_g`` blocks.

    ``algorithm1`` stores ``v_g`` as two P_{k-1}(e) blocks: the component
    along ``n_e`` followed by the component along the edge tangent.
    ``algorithm2`` stores the ``n_e`` component only.  On boundary edges
    ``v_b`` and the ``n_e`` block are the constrained DOFs.
    """

    def __init__(self, mesh, k, flavor):
        if k < 2:
            raise ValueError("k must be >= 2")
        self.mesh = mesh
        self.k = int(k)
        self.flavor = normalize_flavor(flavor)
        self.vector_trace = self.flavor == "algorithm1"

        self.n_v0 = dim_p(self.k)
        self.n_vb = self.k + 1
        self.n_gn = self.k
        self.n_vg = 2 * self.k if self.vector_trace else self.k

        nt, ne = mesh.n_elements, mesh.n_edges
        self.vb_start = nt * self.n_v0
        self.vg_start = self.vb_start + ne * self.n_vb
        self.n_dofs = self.vg_start + ne * self.n_vg

        mask = np.zeros(self.n_dofs, dtype=bool)
        for e in np.flatnonzero(mesh.boundary_edges):
            mask[self.vb_slice(e)] = True
            mask[self.gn_slice(e)] = True
        mask.setflags(write=False)
        self.boundary_mask = mask
        self.free = np.flatnonzero(~mask)
        self.fixed = np.flatnonzero(mask)

    @property
    def n_free(self):
        return len(self.free)

    def element_slice(self, t):
        return slice(t * self.n_v0, (t + 1) * self.n_v0)

    def vb_slice(self, e):
        s = self.vb_start + e * self.n_vb
        return slice(s, s + self.n_vb)

    def vg_slice(self, e):
        s = self.vg_start + e * self.n_vg
        return slice(s, s + self.n_vg)

    def gn_slice(self, e):
        s = self.vg_start + e * self.n_vg
        return slice(s, s + self.n_gn)

    def local_size(self, t):
        m = len(self.mesh.element_edges(t))
        return self.n_v0 + m * (self.n_vb + self.n_vg)

    def local_dofs(self, t):
        """Global ids of element ``t``'s local DOFs: v0, then v_b per edge, then v_g per edge."""
        eids = self.mesh.element_edges(t)
        parts = [np.arange(t * self.n_v0, (t + 1) * self.n_v0)]
        parts += [self.vb_start + e * self.n_vb + np.arange(self.n_vb) for e in eids]
        parts += [self.vg_start + e * self.n_vg + np.arange(self.n_vg) for e in eids]
        return np.concatenate(parts)

    def restrict(self, x, t):
        return np.asarray(x)[self.local_dofs(t)]

    def __repr__(self):
        return (f"DofMap(k={self.k}, flavor={self.flavor!r}, n_dofs={self.n_dofs}, "
                f"n_free={self.n_free})")
