"""scanforge: edit real LiDAR scans while keeping sensor geometry honest.

Remove annotated objects and inpaint the background they hid, insert
library objects at arbitrary ground poses with per-ray occlusion
resolved on a spherical voxel grid, and score the results against an
analytic ray-casting oracle.
"""

from .errors import (ConfigError, DataError, EditStepError, EmptyCategory,
                     EmptyCloud, EmptyObject, EmptySet, InsufficientGroundContext,
                     MalformedBoxLine, LabelLengthMismatch, MalformedScan, MetricError,
                     NoDonorSector, NoGroundPoints, NoObjectFreeSector,
                     ObjectOutOfGrid, OriginPoint, PipelineError, ScanForgeError,
                     TooFewPoints, UnnormalizedInput)
from .geometry import (DEFAULT_CLASS_SETS, BoundingBox, Point, PointCloud,
                       Pose2_5D, SemanticClassSets, box_contains, concat_clouds,
                       normalize_angle, points_in_box, transform_cloud)
from .grid import (DEFAULT_GRID, GridConfig, OccupancyGrid, SphericalCoord,
                   VoxelIndex, bin_points, deocclusion_mask, new_mask,
                   occlusion_mask, read_grid_rle, resample, resolve_occlusion,
                   to_spherical, voxel_center, voxel_of, voxelize, write_grid_rle)
from .insertion import (EditDiagnostics, EditPlan, EditResult, InsertionSpec,
                        RemovalSpec, edit_scene, ground_height_at, insert_object,
                        place_object)
from .library import (GroundMap, LibraryObject, ObjectLibrary, build_library,
                      complete_object, extract_object, ground_bev_map, load_library,
                      mirror_complete, perturb_pose, sample_object, save_library)
from .metrics import BEVHistogram, bev_histogram, chamfer, jsd, median_bandwidth, mmd
from .removal import (INPAINTERS, RemovalResult, ground_extrapolation_inpaint,
                      object_voxels_of, remove_object, synth_eval_mask,
                      tiling_inpaint)
from .scanio import (ScanBundle, load_bundle, load_scan, read_boxes_text,
                     read_labels_bin, read_scan_bin, save_scan, write_boxes_text,
                     write_labels_bin, write_scan_bin)
from .simulate import (AnalyticScene, RaycastScan, VerticalWall, box_surface_points,
                       paired_scans, parse_scene, ray_box_intersection,
                       ray_directions, raycast_scan)

__version__ = "0.1.0"
