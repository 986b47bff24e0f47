"""MIRO: recurrent graph-network preprocessing for density clustering of
single-molecule localization point clouds.

The pipeline collapses cluster members toward common centers with learned
per-localization displacements, then applies conventional density clustering
(DBSCAN) to the collapsed coordinates. Includes the full simulation,
training and evaluation stack.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .cluster import DbscanConfig, PipelineResult, dbscan, nn_cluster_distances, run_pipeline
from .core import (NOISE, LabeledCloud, Localization, Partition, PointCloud,
                   Rect, centroid, read_cloud, write_cloud)
from .graph import GraphConfig, LocGraph, build_graph, delaunay_edges, laplacian_features
from .metrics import (EvalReport, MetricConfig, PairingResult, classification_report,
                      cohens_d, detection_metrics, evaluate_pair, exp_mean_fit,
                      hungarian, iou_hulls, pair_clusters, partition_metrics)
from .model import (ModelConfig, ModelParams, StepOutputs, collapse, forward,
                    init_params, load_checkpoint, save_checkpoint)
from .simulate import (Arc, AugmentSpec, Background, BlinkSpec, ClusterGroup,
                       Ellipse, Fixed, Gaussian, Geometric, Npc, ScenarioSpec,
                       SeedCluster, UniformInt, apply_blinking, augment_dataset,
                       gen_pair_test, generate, make_preset, preset_names)
from .train import (DisplacementTargets, FitResult, TrainConfig, TrainItem,
                    fit, gradients, gt_displacements, loss)

__version__ = "0.1.0"
