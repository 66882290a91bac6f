"""
vesselseg - Real-time vessel segmentation on accumulated video frames

Segments vessel-like structures in cumulative and sub-cumulative frame images,
trained by pretraining on a data-rich source domain and fine-tuning on a
data-poor target domain.

Architecture:
- Each module is self-contained with clear interfaces
- Modules talk to each other only through their public exports
- Numeric state lives in numpy arrays; records are dataclasses or pydantic models

Modules:
- nn: differentiable tensor ops, op tape and gradient checks
- segresnet: residual encoder-decoder network and SRW1 weight files
- metrics: training losses, overlap metrics and mask utilities
- data: image I/O, patch grids, augmentation and splits
- phantom: synthetic vessel phantoms and frame streams
- trainer: RMSProp, pretraining, fine-tuning and evaluation
- stream: CVS1 streams, accumulation, ROI cropping, tiled inference, latency
- harness: reproducible experiments and CSV reports
"""

__version__ = "0.1.0"
