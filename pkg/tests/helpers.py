"""Shared test utilities: brute-force oracles and structure fixtures."""

import math

import numpy as np

from xtaltext.structures import (
    CrystalStructure, Lattice, Site, lattice_from_params,
)


def cubic_structure(a=2.0, element="Po", structure_id="cube"):
    return CrystalStructure(
        lattice_from_params(a, a, a, 90, 90, 90),
        (Site(element, (0.0, 0.0, 0.0)),),
        id=structure_id,
    )


def rocksalt_structure(a=5.64, structure_id="nacl"):
    return CrystalStructure(
        lattice_from_params(a, a, a, 90, 90, 90),
        (Site("Na", (0.0, 0.0, 0.0)), Site("Cl", (0.5, 0.5, 0.5))),
        id=structure_id,
    )


def random_structure(rng, n_sites=None, elements=("Na", "Cl", "O", "Si", "Fe")):
    """Random valid cell for oracle-equivalence tests."""
    for _ in range(200):
        lengths = rng.uniform(3.0, 8.0, size=3)
        angles = rng.uniform(70.0, 110.0, size=3)
        try:
            lattice = lattice_from_params(*lengths, *angles)
        except ValueError:
            continue
        n = n_sites or int(rng.integers(1, 7))
        sites = tuple(
            Site(str(rng.choice(elements)), tuple(rng.random(3))) for _ in range(n)
        )
        try:
            return CrystalStructure(lattice, sites, id="rand")
        except ValueError:
            continue
    raise RuntimeError("could not generate a valid random structure")


def brute_force_neighbors(structure, cutoff, max_neighbors=None):
    """Independent O(N^2 * images) periodic neighbor enumeration.

    Pure-Python arithmetic in the same left-to-right order as the production
    code so distances agree bitwise, while sharing none of its machinery.
    """
    mat = [[float(x) for x in row] for row in structure.lattice.matrix]
    frac = [[float(x) for x in s.frac] for s in structure.sites]

    # Independent perpendicular-width computation for the image search bound.
    ax, ay, az = mat[0]
    bx, by, bz = mat[1]
    cx, cy, cz = mat[2]
    cross_bc = (by * cz - bz * cy, bz * cx - bx * cz, bx * cy - by * cx)
    cross_ca = (cy * az - cz * ay, cz * ax - cx * az, cx * ay - cy * ax)
    cross_ab = (ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx)
    volume = abs(ax * cross_bc[0] + ay * cross_bc[1] + az * cross_bc[2])
    reaches = []
    for cross in (cross_bc, cross_ca, cross_ab):
        width = volume / math.sqrt(cross[0] ** 2 + cross[1] ** 2 + cross[2] ** 2)
        reaches.append(math.ceil(cutoff / width) + 2)

    out = []
    n = len(frac)
    for i in range(n):
        entries = []
        for j in range(n):
            for m0 in range(-reaches[0], reaches[0] + 1):
                for m1 in range(-reaches[1], reaches[1] + 1):
                    for m2 in range(-reaches[2], reaches[2] + 1):
                        if i == j and m0 == m1 == m2 == 0:
                            continue
                        d0 = (frac[j][0] - frac[i][0]) + m0
                        d1 = (frac[j][1] - frac[i][1]) + m1
                        d2 = (frac[j][2] - frac[i][2]) + m2
                        x = (d0 * mat[0][0] + d1 * mat[1][0]) + d2 * mat[2][0]
                        y = (d0 * mat[0][1] + d1 * mat[1][1]) + d2 * mat[2][1]
                        z = (d0 * mat[0][2] + d1 * mat[1][2]) + d2 * mat[2][2]
                        d = math.sqrt((x * x + y * y) + z * z)
                        if d <= cutoff:
                            entries.append((j, (m0, m1, m2), d))
        entries.sort(key=lambda e: (e[2], e[0], e[1]))
        if max_neighbors is not None:
            entries = entries[:max_neighbors]
        out.append(entries)
    return out


def assert_graphs_identical(g1, g2):
    assert g1.n_nodes == g2.n_nodes and g1.n_edges == g2.n_edges
    np.testing.assert_array_equal(g1.node_elements, g2.node_elements)
    np.testing.assert_array_equal(g1.node_features, g2.node_features)
    np.testing.assert_array_equal(g1.edge_src, g2.edge_src)
    np.testing.assert_array_equal(g1.edge_dst, g2.edge_dst)
    np.testing.assert_array_equal(g1.edge_offsets, g2.edge_offsets)
    np.testing.assert_array_equal(g1.edge_distances, g2.edge_distances)
    np.testing.assert_array_equal(g1.edge_features, g2.edge_features)
    np.testing.assert_array_equal(g1.edge_vectors, g2.edge_vectors)
    assert g1.isolated_nodes == g2.isolated_nodes
