"""Constellations: verification and the two constructions."""

from .checker import (Constellation, ConstellationParams, StagedFailure, Verdict,
                      is_constellation, validate_paths)
from .partition import (BoxPartition, DegenerateRegimeError, PartitionSpec, build_partition,
                        depth_for, faithful_counts, snake_order)
from .stars import (FineComponents, build_star_paths, check_E1, check_E2, check_E_star,
                    component_per_fine_cell, extract_constellation_gamma_gt2, find_stars)
from .layered import (GoodBoxReport, LayeredBoxes, LayeredSpec, build_layered_boxes,
                      extract_constellation_gamma_in_1_2, good_box_report)
