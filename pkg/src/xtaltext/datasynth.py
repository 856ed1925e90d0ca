"""Deterministic synthetic crystal-text pair generation.

Structures are geometric fabrications with known labels; narratives are
templated sentences that deterministically encode those labels (formula,
constituent elements, crystal system, oxide type) plus an application clause
driven by element rules. Because every label is spelled out in the text,
cross-modal retrieval and zero-shot classification are well-posed at desk
scale and fully reproducible from (config, seed).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .structures import (
    CRYSTAL_SYSTEMS, ELEMENT_NAME, CrystalStructure, Lattice, Site,
    crystal_system_of, lattice_from_params, oxide_type_of,
    periodic_pair_distances, perpendicular_widths, reduced_formula,
    structure_from_json_dict, structure_to_json_dict,
)

DEFAULT_ELEMENT_POOL = (
    "Li", "Na", "K", "Mg", "Ca", "Ba", "B", "Al", "Ga", "Si", "As", "O",
    "S", "F", "Cl", "I", "Ti", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Zr",
)

TRANSITION_METALS = ("Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
                     "Zr", "Nb", "Mo", "Ru", "Rh", "Pd", "Ag")

APPLICATION_PHRASES = {
    "battery": "solid-state batteries",
    "fuel-cell": "fuel cells",
    "semiconductor": "semiconductors",
    "nuclear": "nuclear structural materials",
    "supercapacitor": "supercapacitors",
    "neutron-shielding": "neutron shielding",
}

MIN_PLACEMENT_SEPARATION = 1.7  # angstrom; keeps accidental O-O pairs out of
                                # the peroxide/superoxide windows (< 1.6)
DIMER_DISTANCES = {"superoxide": 1.30, "peroxide": 1.49}


def application_tags(elements: set[str]) -> tuple[str, ...]:
    """Element-triggered application labels, deterministic and order-stable."""
    tags = []
    if "Li" in elements:
        tags.append("battery")
    if "O" in elements and any(el in elements for el in TRANSITION_METALS):
        tags.extend(["fuel-cell", "supercapacitor"])
    if elements & {"Ga", "As", "Si"}:
        tags.append("semiconductor")
    if "Zr" in elements:
        tags.append("nuclear")
    if "B" in elements:
        tags.append("neutron-shielding")
    return tuple(tags)


@dataclass(frozen=True)
class MaterialLabels:
    formula: str
    crystal_system: str
    oxide_type: str
    applications: tuple[str, ...]


def derive_labels(structure: CrystalStructure) -> MaterialLabels:
    """All labels recomputed from scratch via the structure operations."""
    return MaterialLabels(
        formula=reduced_formula(structure),
        crystal_system=crystal_system_of(structure.lattice),
        oxide_type=oxide_type_of(structure),
        applications=application_tags(set(structure.elements())),
    )


@dataclass(frozen=True)
class MaterialRecord:
    record_id: str
    structure: CrystalStructure
    labels: MaterialLabels
    text: str


@dataclass(frozen=True)
class SynthConfig:
    n_pairs: int = 512
    element_pool: tuple[str, ...] = DEFAULT_ELEMENT_POOL
    system_weights: tuple[float, ...] = (1.0,) * 7  # order of CRYSTAL_SYSTEMS
    sites_min: int = 1
    sites_max: int = 6
    oxygen_rate: float = 0.5   # chance O joins the element set (if in pool)
    dimer_rate: float = 0.3    # chance an O pair becomes a bonded dimer
    template_set: str = "default"
    seed: int = 0

    def __post_init__(self):
        if self.n_pairs < 1 or not self.element_pool:
            raise ValueError("n_pairs must be >= 1 and element pool non-empty")
        if len(self.system_weights) != 7 or min(self.system_weights) < 0 \
                or sum(self.system_weights) == 0:
            raise ValueError("system_weights must be 7 nonnegative values, not all zero")
        if not 1 <= self.sites_min <= self.sites_max:
            raise ValueError(f"bad sites range ({self.sites_min}, {self.sites_max})")


# -- lattice sampling ---------------------------------------------------------

def _distinct(rng, lo, hi, existing, margin=0.08):
    for _ in range(100):
        x = float(rng.uniform(lo, hi))
        if all(abs(x - y) > margin * max(x, y) for y in existing):
            return x
    raise RuntimeError("could not draw a distinct length")


def _sample_lattice(system: str, rng) -> Lattice:
    lo, hi = 3.0, 8.0
    if system == "cubic":
        a = float(rng.uniform(lo, hi))
        params = (a, a, a, 90, 90, 90)
    elif system == "tetragonal":
        a = float(rng.uniform(lo, hi))
        c = _distinct(rng, lo, hi, [a])
        params = (a, a, c, 90, 90, 90)
    elif system == "orthorhombic":
        a = float(rng.uniform(lo, hi))
        b = _distinct(rng, lo, hi, [a])
        c = _distinct(rng, lo, hi, [a, b])
        params = (a, b, c, 90, 90, 90)
    elif system == "hexagonal":
        a = float(rng.uniform(lo, hi))
        c = _distinct(rng, lo, hi, [a])
        params = (a, a, c, 90, 90, 120)
    elif system == "trigonal":
        a = float(rng.uniform(lo, hi))
        alpha = float(rng.uniform(75, 110))
        while abs(alpha - 90) < 3:
            alpha = float(rng.uniform(75, 110))
        params = (a, a, a, alpha, alpha, alpha)
    elif system == "monoclinic":
        a = float(rng.uniform(lo, hi))
        b = _distinct(rng, lo, hi, [a])
        c = _distinct(rng, lo, hi, [a, b])
        params = (a, b, c, 90, float(rng.uniform(95, 115)), 90)
    else:  # triclinic
        a = float(rng.uniform(lo, hi))
        b = _distinct(rng, lo, hi, [a])
        c = _distinct(rng, lo, hi, [a, b])
        angles = []
        while len(angles) < 3:
            x = float(rng.uniform(70, 110))
            if abs(x - 90) > 3 and all(abs(x - y) > 3 for y in angles):
                angles.append(x)
        params = (a, b, c, *angles)
    return lattice_from_params(*params)


# -- structure sampling -------------------------------------------------------

def _too_close(matrix, frac_a, frac_b) -> bool:
    return bool(periodic_pair_distances(matrix, frac_a, frac_b, MIN_PLACEMENT_SEPARATION))


def _place_sites(matrix, assignment: list[str], dimer: tuple[int, int, float] | None, rng):
    """Rejection-sample fractional positions with a minimum separation; the
    dimer partner (if any) sits at a fixed bond length from its mate."""
    inv = np.linalg.inv(matrix)
    placed: list[np.ndarray] = []
    for idx in range(len(assignment)):
        if dimer is not None and idx == dimer[1]:
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            frac = (placed[dimer[0]] + (dimer[2] * direction) @ inv) % 1.0
            frac[frac == 1.0] = 0.0
            others = [p for k, p in enumerate(placed) if k != dimer[0]]
            if any(_too_close(matrix, frac, p) for p in others):
                return None
            placed.append(frac)
            continue
        for _ in range(40):
            frac = rng.random(3)
            if not any(_too_close(matrix, frac, p) for p in placed):
                placed.append(frac)
                break
        else:
            return None
    return placed


def gen_structure(cfg: SynthConfig, rng, structure_id: str = "synth"):
    """Sample one labeled structure; labels match derivations by construction."""
    systems = list(CRYSTAL_SYSTEMS)
    weights = np.asarray(cfg.system_weights, dtype=np.float64)
    weights = weights / weights.sum()
    # draw the system once so retries cannot bias the configured weights
    system = systems[int(rng.choice(7, p=weights))]
    for _ in range(80):
        lattice = _sample_lattice(system, rng)
        if min(perpendicular_widths(lattice.matrix)) < 2.0:
            continue
        n_sites = int(rng.integers(cfg.sites_min, cfg.sites_max + 1))
        # favor multi-element cells; single-element formulas collide too often
        n_distinct = min(int(rng.choice([1, 2, 3], p=[0.15, 0.45, 0.40])), n_sites)
        pool = [el for el in cfg.element_pool if el != "O"]
        chosen = [str(el) for el in rng.choice(pool, size=min(n_distinct, len(pool)), replace=False)]
        if "O" in cfg.element_pool and rng.random() < cfg.oxygen_rate:
            if len(chosen) < 3 and n_sites > len(chosen):
                chosen.append("O")
            else:
                chosen[-1] = "O"
        assignment = list(chosen)
        assignment += [chosen[int(rng.integers(len(chosen)))] for _ in range(n_sites - len(chosen))]
        rng.shuffle(assignment)

        dimer = None
        o_positions = [i for i, el in enumerate(assignment) if el == "O"]
        if len(o_positions) >= 2 and rng.random() < cfg.dimer_rate:
            kind = "superoxide" if rng.random() < 0.5 else "peroxide"
            dimer = (o_positions[0], o_positions[1], DIMER_DISTANCES[kind])

        placed = _place_sites(lattice.matrix, assignment, dimer, rng)
        if placed is None:
            continue
        try:
            structure = CrystalStructure(
                lattice,
                tuple(Site(el, tuple(frac)) for el, frac in zip(assignment, placed)),
                id=structure_id,
            )
        except ValueError:
            continue
        labels = derive_labels(structure)
        if labels.crystal_system != system:
            continue
        if dimer is not None:
            kind = "superoxide" if dimer[2] == DIMER_DISTANCES["superoxide"] else "peroxide"
            if labels.oxide_type != kind:
                continue
        return structure, labels
    raise RuntimeError("structure sampling failed to converge; loosen the config")


# -- narrative templates ------------------------------------------------------

def element_count_phrase(counts: dict[str, int]) -> str:
    """Stoichiometry spelled out in common tokens: '2 chlorine and 4 sodium'.

    Counts are keyed by element symbol and listed alphabetically, matching
    reduced-formula element order.
    """
    parts = [f"{counts[s]} {ELEMENT_NAME[s]}" for s in sorted(counts)]
    if len(parts) == 1:
        return parts[0]
    if len(parts) == 2:
        return f"{parts[0]} and {parts[1]}"
    return ", ".join(parts[:-1]) + f", and {parts[-1]}"


def site_counts(symbols) -> dict[str, int]:
    counts: dict[str, int] = {}
    for s in symbols:
        counts[s] = counts.get(s, 0) + 1
    return counts


def reduced_counts(symbols) -> dict[str, int]:
    """Stoichiometry at formula-unit level (site counts over their gcd).

    Narratives use these rather than raw site counts: mean pooling exposes
    element ratios to the graph branch, so ratio-level text is matchable
    while absolute site counts are not.
    """
    counts = site_counts(symbols)
    g = math.gcd(*counts.values())
    return {s: c // g for s, c in counts.items()}


def _article(word: str) -> str:
    return "an" if word[0] in "aeiou" else "a"


def formula_units_phrase(counts: dict[str, int]) -> str:
    """Per-element formula units as atomic tokens: {'Na': 2, 'Cl': 1} ->
    'cl na2'. Each unit fuses element and count into one frequent token, so
    composition stays learnable even when whole-formula tokens are rare."""
    return " ".join(s.lower() + (str(c) if c > 1 else "") for s, c in sorted(counts.items()))


def composition_sentence(formula: str, counts: dict[str, int]) -> str:
    return (f"{formula} is a compound of {element_count_phrase(counts)}, "
            f"with formula units {formula_units_phrase(counts)}.")


def structure_sentence(system: str) -> str:
    return f"The material crystallizes in the {system} crystal system."


def combo_sentence(formula: str, counts: dict[str, int], system: str) -> str:
    return (f"{formula}, with formula units {formula_units_phrase(counts)}, "
            f"crystallizes in the {system} crystal system.")


def oxide_sentence(oxide_type: str) -> str:
    # "as" is avoided everywhere in templates: it collides with the arsenic
    # formula-unit token.
    return f"The material belongs to the {oxide_type} class."


_COMP_VARIANTS = (
    composition_sentence,
    lambda f, c: (f"The material {f} contains {element_count_phrase(c)}; "
                  f"its formula units are {formula_units_phrase(c)}."),
    lambda f, c: (f"Samples of {f}, built from {element_count_phrase(c)} "
                  f"(formula units {formula_units_phrase(c)}), were prepared."),
)
_STRUCT_VARIANTS = (
    structure_sentence,
    lambda sys: f"The lattice is {sys}.",
    lambda sys: f"Diffraction indicates a {sys} unit cell.",
)
_OXIDE_VARIANTS = (
    oxide_sentence,
    lambda t: f"Its oxygen chemistry places it in the {t} category.",
    lambda t: f"The phase is {_article(t)} {t} solid.",
)
_APP_VARIANTS = (
    lambda apps: f"It is a promising candidate for {apps}.",
    lambda apps: f"Potential applications include {apps}.",
)
_NO_APP_CLAUSES = (
    "Further characterization of this phase is planned.",
    "No target application has been assigned yet.",
)

# (comp variant, structure variant, oxide variant, app variant, order) where
# order permutes the first three sentences.
_TEMPLATES = (
    (0, 0, 0, 0, (0, 1, 2)),
    (1, 1, 1, 1, (0, 1, 2)),
    (2, 2, 2, 0, (0, 1, 2)),
    (0, 1, 2, 1, (1, 0, 2)),
    (1, 2, 0, 0, (0, 2, 1)),
    (2, 0, 1, 1, (1, 2, 0)),
    (0, 2, 1, 0, (2, 0, 1)),
    (1, 0, 2, 1, (2, 1, 0)),
)


def gen_narrative(labels: MaterialLabels, symbols, template_set: str, rng) -> str:
    """Fill one of the narrative templates; the formula, element names with
    site counts, crystal system, oxide type, and application phrases always
    appear."""
    if template_set != "default":
        raise ValueError(f"unknown template set {template_set!r}")
    comp_i, struct_i, oxide_i, app_i, order = _TEMPLATES[int(rng.integers(len(_TEMPLATES)))]
    sentences = [
        _COMP_VARIANTS[comp_i](labels.formula, reduced_counts(symbols)),
        _STRUCT_VARIANTS[struct_i](labels.crystal_system),
        _OXIDE_VARIANTS[oxide_i](labels.oxide_type),
    ]
    body = [sentences[i] for i in order]
    if labels.applications:
        phrases = [APPLICATION_PHRASES[t] for t in labels.applications]
        if len(phrases) == 1:
            joined = phrases[0]
        else:
            joined = ", ".join(phrases[:-1]) + f" and {phrases[-1]}"
        body.append(_APP_VARIANTS[app_i](joined))
    else:
        body.append(_NO_APP_CLAUSES[int(rng.integers(len(_NO_APP_CLAUSES)))])
    return " ".join(body)


def random_formula(rng, element_pool=DEFAULT_ELEMENT_POOL, forbidden_sets=()):
    """Synthesize a plausible reduced formula whose element set avoids the
    forbidden sets; returns (formula string, site-count dict)."""
    forbidden = {frozenset(s) for s in forbidden_sets}
    for _ in range(200):
        k = int(rng.integers(1, 4))
        symbols = tuple(sorted(str(el) for el in rng.choice(element_pool, size=k, replace=False)))
        if frozenset(symbols) in forbidden:
            continue
        counts = {s: int(rng.integers(1, 7)) for s in symbols}
        g = math.gcd(*counts.values())
        counts = {s: c // g for s, c in counts.items()}
        parts = [s + (str(c) if c > 1 else "") for s, c in sorted(counts.items())]
        return "".join(parts), counts
    raise RuntimeError("could not synthesize a formula outside the forbidden sets")


# -- dataset assembly ---------------------------------------------------------

def gen_record(cfg: SynthConfig, index: int, attempt: int = 0) -> MaterialRecord:
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=cfg.seed, spawn_key=(index, attempt)))
    structure, labels = gen_structure(cfg, rng, structure_id=f"xs-{index:05d}")
    text = gen_narrative(labels, structure.elements(), cfg.template_set, rng)
    return MaterialRecord(record_id=f"pair-{index:05d}", structure=structure,
                          labels=labels, text=text)


def _signature(record: MaterialRecord) -> tuple:
    return (record.labels.formula, record.labels.crystal_system, record.labels.oxide_type)


def gen_dataset(cfg: SynthConfig) -> list[MaterialRecord]:
    """Records with globally unique (formula, system, oxide) signatures.

    Duplicate signatures would make their pairs mutually unresolvable in
    retrieval and contradictory as in-batch negatives, so colliding draws
    are redrawn (deterministically, via per-attempt seed streams).
    """
    records: list[MaterialRecord] = []
    seen: set[tuple] = set()
    for i in range(cfg.n_pairs):
        for attempt in range(200):
            record = gen_record(cfg, i, attempt)
            if _signature(record) not in seen:
                break
        else:
            raise RuntimeError(
                "could not draw a unique label signature; shrink n_pairs or widen the config")
        seen.add(_signature(record))
        records.append(record)
    return records


def dataset_summary(records: list[MaterialRecord]) -> dict:
    def histogram(values):
        out: dict[str, int] = {}
        for v in values:
            out[v] = out.get(v, 0) + 1
        return dict(sorted(out.items()))

    return {
        "n_pairs": len(records),
        "crystal_systems": histogram(r.labels.crystal_system for r in records),
        "oxide_types": histogram(r.labels.oxide_type for r in records),
        "applications": histogram(tag for r in records for tag in r.labels.applications),
        "sites_per_cell": histogram(str(len(r.structure.sites)) for r in records),
    }


def write_dataset(records: list[MaterialRecord], out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "structures.jsonl", "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(structure_to_json_dict(r.structure)) + "\n")
    with open(out / "corpus.jsonl", "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({"id": r.record_id, "structure_id": r.structure.id,
                                 "text": r.text}) + "\n")
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(dataset_summary(records), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(data_dir) -> list[MaterialRecord]:
    """Read a dataset back; labels are recomputed from the structures so a
    stale cached label can never drift from its derivation."""
    data = Path(data_dir)
    structures: dict[str, CrystalStructure] = {}
    with open(data / "structures.jsonl", encoding="utf-8") as fh:
        for line in fh:
            s = structure_from_json_dict(json.loads(line))
            structures[s.id] = s
    records = []
    with open(data / "corpus.jsonl", encoding="utf-8") as fh:
        for line in fh:
            row = json.loads(line)
            structure = structures[row["structure_id"]]
            records.append(MaterialRecord(
                record_id=row["id"], structure=structure,
                labels=derive_labels(structure), text=row["text"]))
    return records
