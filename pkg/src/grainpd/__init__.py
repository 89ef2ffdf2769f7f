"""2D granular media with breakable state-based peridynamic particles."""

from .contact import ContactConfig, derive_contact_params, find_contact_pairs
from .engine import (Body, InstabilityError, Records, RunSettings, Scene,
                     Simulation, cor_from_records, generate_packing,
                     reaction_force)
from .geometry import (MeshlessCloud, ShapeSpec, TriMesh, generate_shape,
                       mesh_size, to_meshless, triangulate)
from .peridynamics import (BondGraph, MaterialModel, build_bond_graph,
                           critical_stretch, damage_field, fracture_zone)

__version__ = "0.1.0"

__all__ = [
    "Body", "BondGraph", "ContactConfig", "InstabilityError", "MaterialModel",
    "MeshlessCloud", "Records", "RunSettings", "Scene", "ShapeSpec",
    "Simulation", "TriMesh", "build_bond_graph", "cor_from_records",
    "critical_stretch", "damage_field", "derive_contact_params",
    "find_contact_pairs", "fracture_zone", "generate_packing",
    "generate_shape", "mesh_size", "reaction_force", "to_meshless",
    "triangulate",
]
