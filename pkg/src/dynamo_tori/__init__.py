"""Synchronous SMP recoloring on toroidal grids: simulation, structural
analysis, minimum monotone dynamo constructions and exhaustive search."""

from .analysis import (StructureReport, analyze, check_distinct_neighbor_colors, check_forest,
                       check_monotone_dynamo_structure, find_k_blocks, find_non_k_blocks)
from .dynamics import (Outcome, RoundMap, SimulationResult, apply_rule, round_map, run,
                       smp_local_rule, step)
from .dynamo import (ConstructionError, DynamoConstruction, FillerError, construct,
                     construct_cordalis_dynamo, construct_mesh_dynamo,
                     construct_serpentinus_dynamo, generate_filler, predicted_rounds,
                     seed_bound, seed_cells, verify_construction, verify_grid)
from .grid import (BoundingRect, GridError, GridFormatError, Topology, TorusGrid, bounding_rect,
                   collapse_colors, format_grid, neighbor_table, neighbors_of, parse_grid,
                   read_grid, write_grid)
from .search import (SearchBudgetError, SearchResult, SearchSpec, cross_validate_blocks,
                     enumerate_min_dynamo, verify_lower_bound)

__version__ = "0.1.0"
