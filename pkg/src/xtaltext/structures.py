"""Crystal structures: parsing, periodic neighbor lists, and featurized graphs.

Everything in this module is a pure function of its inputs. Structures are
validated and canonicalized on construction (fractional coordinates wrapped
into [0, 1)), so downstream graph construction is exactly periodic-invariant.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

# Atomic numbers 1..103 (H..Lr).
ELEMENT_SYMBOLS = (
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne",
    "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr",
    "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn",
    "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb",
    "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg",
    "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm",
    "Md", "No", "Lr",
)

ELEMENT_NAMES = (
    "hydrogen", "helium", "lithium", "beryllium", "boron", "carbon",
    "nitrogen", "oxygen", "fluorine", "neon", "sodium", "magnesium",
    "aluminum", "silicon", "phosphorus", "sulfur", "chlorine", "argon",
    "potassium", "calcium", "scandium", "titanium", "vanadium", "chromium",
    "manganese", "iron", "cobalt", "nickel", "copper", "zinc", "gallium",
    "germanium", "arsenic", "selenium", "bromine", "krypton", "rubidium",
    "strontium", "yttrium", "zirconium", "niobium", "molybdenum",
    "technetium", "ruthenium", "rhodium", "palladium", "silver", "cadmium",
    "indium", "tin", "antimony", "tellurium", "iodine", "xenon", "cesium",
    "barium", "lanthanum", "cerium", "praseodymium", "neodymium",
    "promethium", "samarium", "europium", "gadolinium", "terbium",
    "dysprosium", "holmium", "erbium", "thulium", "ytterbium", "lutetium",
    "hafnium", "tantalum", "tungsten", "rhenium", "osmium", "iridium",
    "platinum", "gold", "mercury", "thallium", "lead", "bismuth",
    "polonium", "astatine", "radon", "francium", "radium", "actinium",
    "thorium", "protactinium", "uranium", "neptunium", "plutonium",
    "americium", "curium", "berkelium", "californium", "einsteinium",
    "fermium", "mendelevium", "nobelium", "lawrencium",
)

ATOMIC_NUMBER = {sym: z for z, sym in enumerate(ELEMENT_SYMBOLS, start=1)}
ELEMENT_NAME = {sym: name for sym, name in zip(ELEMENT_SYMBOLS, ELEMENT_NAMES)}

CRYSTAL_SYSTEMS = (
    "triclinic", "monoclinic", "orthorhombic", "tetragonal",
    "trigonal", "hexagonal", "cubic",
)
OXIDE_TYPES = ("non-oxide", "oxide", "peroxide", "superoxide")

# O-O bond-length windows (angstrom) separating superoxide / peroxide units.
SUPEROXIDE_WINDOW = (1.2, 1.35)
PEROXIDE_WINDOW = (1.35, 1.6)

MIN_SITE_SEPARATION = 0.01  # angstrom; duplicate-site threshold
_MAX_IMAGE_INDEX = 25  # safety bound on the periodic image search


class StructureError(ValueError):
    """Invalid structure input; `code` is a stable machine-readable tag."""

    def __init__(self, code: str, message: str):
        super().__init__(f"[{code}] {message}")
        self.code = code


@dataclass(frozen=True)
class Lattice:
    """Row-major lattice matrix; rows are the a, b, c vectors in angstrom."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=np.float64)
        if mat.shape != (3, 3) or not np.all(np.isfinite(mat)):
            raise StructureError("singular-lattice", "lattice must be a finite 3x3 matrix")
        if np.linalg.det(mat) <= 1e-9:
            raise StructureError(
                "singular-lattice",
                f"lattice determinant must be positive, got {np.linalg.det(mat):.3g}",
            )
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def volume(self) -> float:
        return float(np.linalg.det(self.matrix))

    def lengths(self) -> tuple[float, float, float]:
        return tuple(float(np.linalg.norm(row)) for row in self.matrix)

    def angles(self) -> tuple[float, float, float]:
        """(alpha, beta, gamma) in degrees; alpha is the b^c angle."""
        a, b, c = self.matrix
        return (_angle_deg(b, c), _angle_deg(a, c), _angle_deg(a, b))


def _angle_deg(u: np.ndarray, v: np.ndarray) -> float:
    cosv = float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))
    return math.degrees(math.acos(max(-1.0, min(1.0, cosv))))


@dataclass(frozen=True)
class Site:
    """One atomic site: element symbol plus fractional coordinates in [0, 1)."""

    element: str
    frac: tuple[float, float, float]

    def __post_init__(self):
        if self.element not in ATOMIC_NUMBER:
            raise StructureError("unknown-element", f"unknown element symbol {self.element!r}")
        frac = tuple(float(x) for x in self.frac)
        if len(frac) != 3 or not all(math.isfinite(x) for x in frac):
            raise StructureError("bad-frac", f"fractional coordinates must be 3 finite reals, got {frac}")
        wrapped = tuple(0.0 if (w := x % 1.0) == 1.0 else w for x in frac)
        object.__setattr__(self, "frac", wrapped)

    @property
    def atomic_number(self) -> int:
        return ATOMIC_NUMBER[self.element]


@dataclass(frozen=True)
class CrystalStructure:
    """Lattice plus an ordered list of sites."""

    lattice: Lattice
    sites: tuple[Site, ...]
    id: str = ""

    def __post_init__(self):
        sites = tuple(self.sites)
        if not sites:
            raise StructureError("no-sites", "structure must contain at least one site")
        object.__setattr__(self, "sites", sites)
        frac = self.frac_coords()
        for i in range(len(sites)):
            for j in range(i + 1, len(sites)):
                d = periodic_pair_distances(self.lattice.matrix, frac[i], frac[j], MIN_SITE_SEPARATION)
                if d:
                    raise StructureError(
                        "duplicate-sites",
                        f"sites {i} and {j} are {min(d):.4g} A apart (< {MIN_SITE_SEPARATION} A)",
                    )

    def frac_coords(self) -> np.ndarray:
        return np.array([s.frac for s in self.sites], dtype=np.float64)

    def cart_coords(self) -> np.ndarray:
        f = self.frac_coords()
        m = self.lattice.matrix
        return f[:, 0:1] * m[0] + f[:, 1:2] * m[1] + f[:, 2:3] * m[2]

    def elements(self) -> tuple[str, ...]:
        return tuple(s.element for s in self.sites)


def lattice_from_params(a: float, b: float, c: float,
                        alpha: float, beta: float, gamma: float) -> Lattice:
    """Build a lattice in the standard setting: a along x, b in the xy-plane.

    Raises StructureError("bad-lattice-params") when the angle triple is not
    geometrically realizable (the volume term under the square root is <= 0).
    """
    if min(a, b, c) <= 0:
        raise StructureError("bad-lattice-params", f"lengths must be positive, got {(a, b, c)}")
    if not all(0.0 < x < 180.0 for x in (alpha, beta, gamma)):
        raise StructureError("bad-lattice-params", f"angles must lie in (0, 180), got {(alpha, beta, gamma)}")
    ca, cb, cg = (math.cos(math.radians(x)) for x in (alpha, beta, gamma))
    sg = math.sin(math.radians(gamma))
    vol_term = 1.0 - ca * ca - cb * cb - cg * cg + 2.0 * ca * cb * cg
    if vol_term <= 0.0:
        raise StructureError("bad-lattice-params", f"angle triple {(alpha, beta, gamma)} encloses no volume")
    matrix = np.array([
        [a, 0.0, 0.0],
        [b * cg, b * sg, 0.0],
        [c * cb, c * (ca - cb * cg) / sg, c * math.sqrt(vol_term) / sg],
    ])
    return Lattice(matrix)


def structure_from_json_dict(obj: dict, default_id: str = "") -> CrystalStructure:
    try:
        lattice = Lattice(np.array(obj["lattice"], dtype=np.float64))
        raw_sites = obj["sites"]
    except StructureError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise StructureError("malformed-json", f"structure object missing or malformed field: {exc}") from exc
    if not isinstance(raw_sites, list) or not raw_sites:
        raise StructureError("no-sites", "structure must contain at least one site")
    sites = []
    for entry in raw_sites:
        try:
            sites.append(Site(entry["element"], tuple(entry["frac"])))
        except StructureError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise StructureError("malformed-json", f"malformed site entry {entry!r}") from exc
    return CrystalStructure(lattice, tuple(sites), id=str(obj.get("id", default_id)))


def parse_structure_json(data: bytes | str) -> CrystalStructure:
    """Parse the documented structure JSON schema (see README)."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise StructureError("malformed-json", f"not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise StructureError("malformed-json", "top-level JSON value must be an object")
    return structure_from_json_dict(obj)


def structure_to_json_dict(structure: CrystalStructure) -> dict:
    return {
        "id": structure.id,
        "lattice": [[float(x) for x in row] for row in structure.lattice.matrix],
        "sites": [{"element": s.element, "frac": [float(x) for x in s.frac]} for s in structure.sites],
    }


_CIF_CELL_TAGS = (
    "_cell_length_a", "_cell_length_b", "_cell_length_c",
    "_cell_angle_alpha", "_cell_angle_beta", "_cell_angle_gamma",
)
_CIF_SITE_COLUMNS = (
    "_atom_site_type_symbol",
    "_atom_site_fract_x", "_atom_site_fract_y", "_atom_site_fract_z",
)


def _cif_number(token: str, tag: str) -> float:
    # Strip a trailing standard-uncertainty suffix like 1.234(5).
    token = re.sub(r"\(\d+\)$", "", token)
    try:
        return float(token)
    except ValueError as exc:
        raise StructureError("bad-cif-value", f"non-numeric value {token!r} for {tag}") from exc


def parse_cif_lite(text: str, default_id: str = "") -> CrystalStructure:
    """Parse the supported CIF subset: cell tags plus one atom-site loop."""
    cell: dict[str, float] = {}
    lines = [ln.strip() for ln in text.splitlines()]
    structure_id = default_id
    sites: list[Site] = []

    i = 0
    while i < len(lines):
        line = lines[i]
        if not line or line.startswith("#"):
            i += 1
            continue
        parts = line.split()
        key = parts[0]
        if key.startswith("data_"):
            structure_id = structure_id or key[len("data_"):]
        elif key in _CIF_CELL_TAGS:
            if len(parts) < 2:
                raise StructureError("bad-cif-value", f"missing value for {key}")
            cell[key] = _cif_number(parts[1], key)
        elif key == "loop_":
            columns = []
            i += 1
            while i < len(lines) and lines[i].startswith("_"):
                columns.append(lines[i].split()[0])
                i += 1
            if any(col.startswith("_atom_site") for col in columns):
                missing = [c for c in _CIF_SITE_COLUMNS if c not in columns]
                if missing:
                    raise StructureError("missing-cif-tag", f"atom-site loop lacks columns {missing}")
                idx = {c: columns.index(c) for c in _CIF_SITE_COLUMNS}
                while i < len(lines) and lines[i] and not lines[i].startswith(("_", "loop_", "data_", "#")):
                    row = lines[i].split()
                    if len(row) < len(columns):
                        raise StructureError("bad-cif-value", f"atom-site row {lines[i]!r} too short")
                    symbol = row[idx["_atom_site_type_symbol"]]
                    frac = tuple(
                        _cif_number(row[idx[f"_atom_site_fract_{ax}"]], f"_atom_site_fract_{ax}")
                        for ax in ("x", "y", "z")
                    )
                    sites.append(Site(symbol, frac))
                    i += 1
            continue
        i += 1

    missing = [tag for tag in _CIF_CELL_TAGS if tag not in cell]
    if missing:
        raise StructureError("missing-cif-tag", f"CIF lacks cell tags {missing}")
    if not sites:
        raise StructureError("no-sites", "CIF contains no atom sites")
    lattice = lattice_from_params(*(cell[tag] for tag in _CIF_CELL_TAGS))
    return CrystalStructure(lattice, tuple(sites), id=structure_id)


def structure_to_cif_lite(structure: CrystalStructure) -> str:
    """Serialize to the CIF subset accepted by parse_cif_lite."""
    a, b, c = structure.lattice.lengths()
    alpha, beta, gamma = structure.lattice.angles()
    out = [f"data_{structure.id or 'structure'}"]
    for tag, val in zip(_CIF_CELL_TAGS, (a, b, c, alpha, beta, gamma)):
        out.append(f"{tag} {val:.6f}")
    out.append("loop_")
    out.extend(f"{col}" for col in _CIF_SITE_COLUMNS)
    for site in structure.sites:
        fx, fy, fz = site.frac
        out.append(f"{site.element} {fx:.6f} {fy:.6f} {fz:.6f}")
    return "\n".join(out) + "\n"


def perpendicular_widths(matrix: np.ndarray) -> tuple[float, float, float]:
    """Distance between opposite cell faces for each lattice direction."""
    volume = abs(float(np.linalg.det(matrix)))
    widths = []
    for k in range(3):
        j, l = (k + 1) % 3, (k + 2) % 3
        widths.append(volume / float(np.linalg.norm(np.cross(matrix[j], matrix[l]))))
    return tuple(widths)


def _image_ranges(matrix: np.ndarray, cutoff: float) -> tuple[int, int, int]:
    ranges = []
    for width in perpendicular_widths(matrix):
        n = math.ceil(cutoff / width) + 1
        if n > _MAX_IMAGE_INDEX:
            raise StructureError(
                "cutoff-too-large",
                f"cutoff {cutoff} A needs image index {n} > {_MAX_IMAGE_INDEX} for this cell",
            )
        ranges.append(n)
    return tuple(ranges)


def _offset_grid(ranges: tuple[int, int, int]) -> np.ndarray:
    n0, n1, n2 = ranges
    grid = np.stack(np.meshgrid(
        np.arange(-n0, n0 + 1), np.arange(-n1, n1 + 1), np.arange(-n2, n2 + 1),
        indexing="ij"), axis=-1)
    return grid.reshape(-1, 3).astype(np.int64)


def periodic_pair_distances(matrix: np.ndarray, frac_i: np.ndarray, frac_j: np.ndarray,
                    cutoff: float) -> list[float]:
    """All periodic image distances between two in-cell sites, 0 < d <= cutoff."""
    offsets = _offset_grid(_image_ranges(matrix, cutoff))
    dfrac = (np.asarray(frac_j) - np.asarray(frac_i)) + offsets
    disp = dfrac[:, 0:1] * matrix[0] + dfrac[:, 1:2] * matrix[1] + dfrac[:, 2:3] * matrix[2]
    d = np.sqrt((disp[:, 0] ** 2 + disp[:, 1] ** 2) + disp[:, 2] ** 2)
    return [float(x) for x in d[(d > 0.0) & (d <= cutoff)]]


class Neighbor(NamedTuple):
    """Periodic neighbor entry of one site."""

    index: int
    offset: tuple[int, int, int]
    distance: float


def neighbor_list(structure: CrystalStructure, cutoff: float,
                  max_neighbors: int | None = None) -> list[list[Neighbor]]:
    """Per-site periodic neighbors with distance in (0, cutoff].

    Entries are sorted by (distance, neighbor index, image offset) and then
    truncated to max_neighbors, so output is deterministic across platforms.
    """
    if cutoff <= 0:
        raise StructureError("bad-cutoff", f"cutoff must be positive, got {cutoff}")
    matrix = structure.lattice.matrix
    frac = structure.frac_coords()
    offsets = _offset_grid(_image_ranges(matrix, cutoff))
    n_sites = len(structure.sites)

    out: list[list[Neighbor]] = []
    for i in range(n_sites):
        entries = []
        for j in range(n_sites):
            dfrac = (frac[j] - frac[i]) + offsets
            disp = dfrac[:, 0:1] * matrix[0] + dfrac[:, 1:2] * matrix[1] + dfrac[:, 2:3] * matrix[2]
            d = np.sqrt((disp[:, 0] ** 2 + disp[:, 1] ** 2) + disp[:, 2] ** 2)
            for k in np.nonzero(d <= cutoff)[0]:
                off = (int(offsets[k, 0]), int(offsets[k, 1]), int(offsets[k, 2]))
                if i == j and off == (0, 0, 0):
                    continue
                entries.append(Neighbor(j, off, float(d[k])))
        entries.sort(key=lambda e: (e.distance, e.index, e.offset))
        if max_neighbors is not None:
            entries = entries[:max_neighbors]
        out.append(entries)
    return out


@dataclass(frozen=True)
class FeaturizerConfig:
    """Graph construction parameters (CGCNN-lineage defaults)."""

    cutoff: float = 6.0
    max_neighbors: int = 12
    k_rbf: int = 48

    def __post_init__(self):
        if self.cutoff <= 0 or self.max_neighbors < 1 or self.k_rbf < 2:
            raise ValueError(f"invalid featurizer config {self}")


def rbf_expand(distance: float, cfg: FeaturizerConfig) -> np.ndarray:
    """Gaussian radial basis expansion on equally spaced centers in [0, cutoff]."""
    centers = np.linspace(0.0, cfg.cutoff, cfg.k_rbf)
    sigma = cfg.cutoff / (cfg.k_rbf - 1)
    return np.exp(-((distance - centers) ** 2) / sigma**2)


@dataclass(eq=False)
class CrystalGraph:
    """Featurized periodic graph; edge (u, v) carries a message from u to v."""

    id: str
    node_elements: np.ndarray     # (N,) atomic numbers
    node_features: np.ndarray     # (N, 1) atomic number as a real feature
    edge_src: np.ndarray          # (E,) u, the neighbor
    edge_dst: np.ndarray          # (E,) v, the receiver
    edge_offsets: np.ndarray      # (E, 3) image offset of u relative to v's cell
    edge_distances: np.ndarray    # (E,)
    edge_features: np.ndarray     # (E, K) RBF expansion of the distance
    edge_vectors: np.ndarray      # (E, 3) unit vector from v towards the u image
    isolated_nodes: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        n = self.n_nodes
        if n < 1:
            raise StructureError("no-sites", "graph must contain at least one node")
        if self.n_edges and (self.edge_src.max() >= n or self.edge_dst.max() >= n
                             or self.edge_src.min() < 0 or self.edge_dst.min() < 0):
            raise ValueError("edge endpoint out of range")
        if self.edge_features.ndim != 2:
            raise ValueError("edge features must be a (E, K) matrix")

    @property
    def n_nodes(self) -> int:
        return int(self.node_elements.shape[0])

    @property
    def n_edges(self) -> int:
        return int(self.edge_src.shape[0])


def build_graph(structure: CrystalStructure, cfg: FeaturizerConfig | None = None,
                graph_id: str | None = None) -> CrystalGraph:
    """Construct the featurized crystal graph from a structure.

    Sites with no neighbor under the config are recorded in isolated_nodes
    rather than raising; the graph stays valid with zero incident edges.
    """
    cfg = cfg or FeaturizerConfig()
    neighbors = neighbor_list(structure, cfg.cutoff, cfg.max_neighbors)
    matrix = structure.lattice.matrix
    frac = structure.frac_coords()

    src, dst, offs, dists, feats, vecs = [], [], [], [], [], []
    isolated = []
    for i, entries in enumerate(neighbors):
        if not entries:
            isolated.append(i)
        for nb in entries:
            dfrac = (frac[nb.index] - frac[i]) + np.array(nb.offset, dtype=np.float64)
            disp = dfrac[0] * matrix[0] + dfrac[1] * matrix[1] + dfrac[2] * matrix[2]
            src.append(nb.index)
            dst.append(i)
            offs.append(nb.offset)
            dists.append(nb.distance)
            feats.append(rbf_expand(nb.distance, cfg))
            vecs.append(disp / nb.distance)

    n_edges = len(src)
    return CrystalGraph(
        id=graph_id if graph_id is not None else structure.id,
        node_elements=np.array([s.atomic_number for s in structure.sites], dtype=np.int64),
        node_features=np.array([[float(s.atomic_number)] for s in structure.sites]),
        edge_src=np.array(src, dtype=np.int64),
        edge_dst=np.array(dst, dtype=np.int64),
        edge_offsets=np.array(offs, dtype=np.int64).reshape(n_edges, 3),
        edge_distances=np.array(dists, dtype=np.float64),
        edge_features=np.array(feats, dtype=np.float64).reshape(n_edges, cfg.k_rbf),
        edge_vectors=np.array(vecs, dtype=np.float64).reshape(n_edges, 3),
        isolated_nodes=tuple(isolated),
    )


def reduced_formula(structure: CrystalStructure) -> str:
    """Element counts divided by their gcd, symbols in alphabetical order."""
    counts = Counter(s.element for s in structure.sites)
    g = math.gcd(*counts.values())
    parts = []
    for sym in sorted(counts):
        n = counts[sym] // g
        parts.append(sym + (str(n) if n > 1 else ""))
    return "".join(parts)


def crystal_system_of(lattice: Lattice, tol: float = 1e-3) -> str:
    """Classify by lattice-parameter pattern, most symmetric pattern first.

    tol acts as a relative tolerance on length equality and an absolute
    tolerance in degrees on angles. The check is permutation-aware, so axis
    relabelings that preserve the pattern classify identically.
    """
    a, b, c = lattice.lengths()
    alpha, beta, gamma = lattice.angles()

    def len_eq(x, y):
        return abs(x - y) <= tol * max(x, y)

    def ang_is(x, target):
        return abs(x - target) <= tol

    def ang_eq(x, y):
        return abs(x - y) <= tol

    all_90 = ang_is(alpha, 90) and ang_is(beta, 90) and ang_is(gamma, 90)
    n_equal_lengths = sum((len_eq(a, b), len_eq(b, c), len_eq(a, c)))

    if all_90 and n_equal_lengths == 3:
        return "cubic"
    hexagonal_patterns = (
        (ang_is(gamma, 120) and ang_is(alpha, 90) and ang_is(beta, 90) and len_eq(a, b)),
        (ang_is(alpha, 120) and ang_is(beta, 90) and ang_is(gamma, 90) and len_eq(b, c)),
        (ang_is(beta, 120) and ang_is(alpha, 90) and ang_is(gamma, 90) and len_eq(a, c)),
    )
    if any(hexagonal_patterns):
        return "hexagonal"
    if (n_equal_lengths == 3 and ang_eq(alpha, beta) and ang_eq(beta, gamma)
            and not ang_is(alpha, 90)):
        return "trigonal"
    if all_90 and n_equal_lengths >= 1:
        return "tetragonal"
    if all_90:
        return "orthorhombic"
    if sum((ang_is(alpha, 90), ang_is(beta, 90), ang_is(gamma, 90))) == 2:
        return "monoclinic"
    return "triclinic"


def oxide_type_of(structure: CrystalStructure) -> str:
    """{non-oxide, oxide, peroxide, superoxide} from periodic O-O distances."""
    o_idx = [i for i, s in enumerate(structure.sites) if s.element == "O"]
    if not o_idx:
        return "non-oxide"
    frac = structure.frac_coords()
    matrix = structure.lattice.matrix
    oo: list[float] = []
    for pos, i in enumerate(o_idx):
        for j in o_idx[pos:]:
            oo.extend(periodic_pair_distances(matrix, frac[i], frac[j], PEROXIDE_WINDOW[1]))
    if any(SUPEROXIDE_WINDOW[0] <= d < SUPEROXIDE_WINDOW[1] for d in oo):
        return "superoxide"
    if any(PEROXIDE_WINDOW[0] <= d < PEROXIDE_WINDOW[1] for d in oo):
        return "peroxide"
    return "oxide"
