"""Bridge real image folders and class-name lists into the consensus
pipeline's dataset and confidence file formats (inference only, no training).
"""

from .encoders import LOCAL_MODEL, LocalHashEncoder, make_encoder
from .export import (ExportManifest, export_embeddings, read_class_names,
                     scan_image_folder)
from .formats import write_array, write_confidence, write_dataset_dir

__all__ = [
    "LOCAL_MODEL", "LocalHashEncoder", "make_encoder",
    "ExportManifest", "export_embeddings", "read_class_names",
    "scan_image_folder",
    "write_array", "write_confidence", "write_dataset_dir",
]
__version__ = "0.1.0"
