"""3D wound documentation from reconstructed meshes, camera poses, and
per-view segmentation masks: multi-view label fusion, metric wound
measurement, and surface evaluation."""

from ._version import TOOL_VERSION as __version__
from .camera import CameraView, ViewRay, dlt_triangulate, face_ray, load_views, project, save_views
from .cover import SurfaceCover, eval_cover, eval_grad, fit_cover
from .document import DocumentConfig, WoundDocument, run_document
from .evaluate import (
    PointSamples,
    dice,
    face_dice,
    icp_align,
    reproject_labels,
    sample_surface,
    surface_metrics,
)
from .frame import ReferenceFrame, compute_frame
from .fusion import FusionConfig, ViewSample, fuse_labels, fuse_pipeline, weighting_factor
from .labels import LabelField, LabelTaxonomy, load_labels, save_labels
from .measure import (
    CurveFit,
    WoundMetrics,
    depth_field,
    geodesic_distance,
    length_width,
    perimeter,
    surface_areas,
    tissue_composition,
)
from .mesh import (
    MeshError,
    TriangleMesh,
    boundary_loops,
    connected_components,
    connected_face_sets,
    face_normal_area_barycenter,
    label_morphology,
    load_mesh,
    save_mesh,
)
from .raster import FaceIdBuffer, face_visibility_label, load_mask, rasterize, save_mask
from .render import depth_maps, error_colored_mesh, topographic_depth_image
from .scale import MarkerDetections, apply_scale, load_detections, recover_scale, save_detections
from .synth import SceneSpec, SyntheticScene, generate_scene, load_scene, perturb, save_scene

__all__ = [name for name in dir() if not name.startswith("_")]
